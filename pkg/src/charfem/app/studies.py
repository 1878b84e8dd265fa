"""Convergence studies and the cavity benchmark driver."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..analysis import ErrorSeriesEntry, relative_error_series
from ..errors import InvalidArgumentError, SolverFailureError, StepRejectedError
from ..fem import evaluate_field
from ..mesh import generate_structured_unit_square
from ..scheme import RunConfig, run
from .io import export_csv, export_vtk
from .problems import CavityProblem, example1_fields

log = logging.getLogger(__name__)

# instability snapshots are read over this window (matches the published runs)
CAVITY_SUBDOMAIN = ((0.3, 0.7), (0.8, 1.0))


def default_pattern(pair) -> str:
    """Crisscross for the MINI pair (it needs interior vertices), else right."""
    from ..fem import element_pair

    return "crisscross" if element_pair(pair).kind_code == 1 else "right"


def _build_config(problem_name: str, scheme: str, nu: float, n: int,
                  dt_rule: str, pair, pattern: str | None,
                  strict_cfl: bool, reproducible: bool) -> RunConfig:
    if problem_name == "example1":
        problem = example1_fields(nu)
    else:
        raise InvalidArgumentError(
            f"convergence study supports problem 'example1', got {problem_name!r}")
    if dt_rule not in ("h2", "h3"):
        raise InvalidArgumentError(f"dt_rule must be 'h2' or 'h3', got {dt_rule!r}")
    mesh = generate_structured_unit_square(n, pattern or default_pattern(pair))
    h = mesh.h_param
    dt = h * h if dt_rule == "h2" else h * h * h
    return RunConfig(nu=nu, T=1.0, dt=dt, scheme=scheme, pair=pair, mesh=mesh,
                     problem=problem, strict_cfl=strict_cfl,
                     reproducible=reproducible)


def _run_one(args) -> ErrorSeriesEntry:
    (problem_name, scheme, nu, n, dt_rule, pair, pattern,
     strict_cfl, reproducible) = args
    config = _build_config(problem_name, scheme, nu, n, dt_rule, pair,
                           pattern, strict_cfl, reproducible)
    try:
        history = run(config)
        entry = relative_error_series(history)
        ratios = [r.div_residual / r.u_norm2 for r in history.records
                  if r.n >= 1 and r.u_norm2 > 0]
        entry.max_div_ratio = max(ratios) if ratios else 0.0
    except StepRejectedError as exc:
        log.warning("run N=%d rejected at step %s", n, exc.step)
        entry = ErrorSeriesEntry(N=n, h=1.0 / n, dt=config.dt, e_u_h1=None,
                                 e_p_l2=None, e_u_l2=None,
                                 failed=f"step_rejected@{exc.step}")
    except SolverFailureError as exc:
        log.warning("run N=%d solver failure: %s", n, exc)
        entry = ErrorSeriesEntry(N=n, h=1.0 / n, dt=config.dt, e_u_h1=None,
                                 e_p_l2=None, e_u_l2=None, failed="solver_failure")
    return entry


def run_convergence_study(problem: str, scheme: str, dt_rule: str, n_list,
                          nu: float, pair="TaylorHood_P2P1",
                          pattern: str | None = None, out_dir=None,
                          strict_cfl: bool = True, reproducible: bool = True,
                          threads: int = 1):
    """Sweep N, run, and fold the relative errors into an error series.

    Returns (entries, orders) where orders maps each error key to the
    per-adjacent-pair observed orders. Failed runs appear as marked rows
    (orders are computed only when every run succeeded).
    """
    n_list = list(n_list)
    if not n_list:
        raise InvalidArgumentError("N list must not be empty")
    if sorted(set(n_list)) != n_list:
        raise InvalidArgumentError("N list must be strictly increasing")
    jobs = [(problem, scheme, nu, n, dt_rule, pair, pattern, strict_cfl,
             reproducible) for n in n_list]
    if threads > 1 and not reproducible:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(_run_one, jobs))
    else:
        entries = [_run_one(job) for job in jobs]
    orders = pairwise_study_orders(entries)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = f"converge_{problem}_{scheme}_{dt_rule}_nu{nu:g}.csv"
        export_csv(entries, orders, out / name)
    return entries, orders


def pairwise_study_orders(entries) -> dict:
    """Per-adjacent-pair orders, None wherever either run failed.

    Instability and admissibility rejections leave marked rows; orders are
    still reported for every pair of successful neighbours.
    """
    import math

    orders = {key: [None] * (len(entries) - 1)
              for key in ErrorSeriesEntry.ERROR_KEYS}
    for i in range(1, len(entries)):
        a, b = entries[i - 1], entries[i]
        if a.failed or b.failed:
            continue
        for key in ErrorSeriesEntry.ERROR_KEYS:
            ea, eb = getattr(a, key), getattr(b, key)
            if ea and eb:
                orders[key][i - 1] = math.log(ea / eb) / math.log(a.h / b.h)
    return orders


def subdomain_samples(nx: int = 41, ny: int = 21) -> np.ndarray:
    (x0, x1), (y0, y1) = CAVITY_SUBDOMAIN
    gx = np.linspace(x0, x1, nx)
    gy = np.linspace(y0, y1, ny)
    xx, yy = np.meshgrid(gx, gy, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def oscillation_indicator(u_field) -> float:
    """max |u_h| over the lid-adjacent observation window."""
    vals = evaluate_field(u_field, subdomain_samples())
    return float(np.abs(vals).max())


def run_cavity(scheme: str, nu: float, n: int, dt: float, T: float = 8.0,
               pair="TaylorHood_P2P1", pattern: str | None = None,
               out_dir=None, strict_cfl: bool = True,
               reproducible: bool = True):
    """Run the regularized cavity and export final-field views.

    Returns (history, indicator) with the subdomain oscillation indicator of
    the final velocity. When ``out_dir`` is set, writes the full-field VTK
    files and the subdomain velocity samples as CSV.
    """
    problem = CavityProblem(nu=nu)
    mesh = generate_structured_unit_square(n, pattern or default_pattern(pair))
    config = RunConfig(nu=nu, T=T, dt=dt, scheme=scheme, pair=pair, mesh=mesh,
                       problem=problem, strict_cfl=strict_cfl,
                       reproducible=reproducible, snapshot_times=(T,))
    history = run(config)
    u, p = history.u_final, history.p_final
    indicator = oscillation_indicator(u)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = f"{scheme}_nu{nu:g}_N{n}"
        export_vtk(u, out / f"cavity_u_{tag}.vtk", title=f"cavity velocity {tag}")
        export_vtk(p, out / f"cavity_p_{tag}.vtk", title=f"cavity pressure {tag}")
        pts = subdomain_samples()
        vals = evaluate_field(u, pts)
        data = np.column_stack([pts, vals])
        header = "x,y,u1,u2"
        np.savetxt(out / f"cavity_subdomain_{tag}.csv", data, fmt="%.6e",
                   delimiter=",", header=header, comments="")
    return history, indicator
