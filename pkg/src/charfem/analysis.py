"""Discrete norms, interpolant-relative errors, and observed orders."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateExactSolutionError, InvalidArgumentError
from .fem import Field, PRESSURE, VELOCITY


def _norm_matrices(space):
    from .system import (assemble_pressure_mass, assemble_scalar_mass,
                         assemble_scalar_stiffness)

    cache = space._cache
    if "norm_matrices" not in cache:
        cache["norm_matrices"] = {
            (VELOCITY, "L2"): assemble_scalar_mass(space),
            (VELOCITY, "H1semi"): assemble_scalar_stiffness(space),
            (PRESSURE, "L2"): assemble_pressure_mass(space),
        }
    return cache["norm_matrices"]


def field_norm(phi: Field, kind: str) -> float:
    """Exact L2 norm or H1 seminorm of a finite element function."""
    if kind not in ("L2", "H1semi"):
        raise InvalidArgumentError(f"unknown norm kind {kind!r}")
    if phi.role == PRESSURE and kind != "L2":
        raise InvalidArgumentError("pressure fields carry only the L2 norm")
    mats = _norm_matrices(phi.space)
    m = mats[(phi.role, kind)]
    if phi.role == PRESSURE:
        val = phi.coefs @ (m @ phi.coefs)
    else:
        x, y = phi.components()
        val = x @ (m @ x) + y @ (m @ y)
    return math.sqrt(max(val, 0.0))


@dataclass
class ErrorSeriesEntry:
    """Relative errors of one run: u in linf(H1_0) and linf(L2), p in l2(L2).

    ``max_div_ratio`` is a run diagnostic: the worst per-step value of
    max_q |(B u_h^n)_q| / |u_h^n| over the accepted steps.
    """

    N: int
    h: float
    dt: float
    e_u_h1: float | None
    e_p_l2: float | None
    e_u_l2: float | None
    failed: str | None = None
    max_div_ratio: float | None = None

    ERROR_KEYS = ("e_u_h1", "e_p_l2", "e_u_l2")


def relative_error_series(history, exact=None) -> ErrorSeriesEntry:
    """Fold a run's captured per-step differences into the three E_X values.

    The sup norms run over n = 0..N_T; the pressure l2(L2) accumulation runs
    over n = 1..N_T (there is no discrete pressure at step zero). Numerator
    and denominator are both measured against the interpolated exact fields.
    """
    del exact  # errors are captured against the interpolant during the run
    records = history.records
    if not records or records[0].err_u_h1 is None:
        raise InvalidArgumentError(
            "history lacks captured error norms; run with capture={'errors'} "
            "and a problem that provides exact_u/exact_p")
    num_h1 = max(r.err_u_h1 for r in records)
    den_h1 = max(r.den_u_h1 for r in records)
    num_l2 = max(r.err_u_l2 for r in records)
    den_l2 = max(r.den_u_l2 for r in records)
    p_terms = [(r.err_p_l2, r.den_p_l2) for r in records
               if r.n >= 1 and r.err_p_l2 is not None]
    if den_h1 <= 0.0 or den_l2 <= 0.0:
        raise DegenerateExactSolutionError(
            "exact velocity interpolant vanishes; relative errors undefined")
    e_u_h1 = num_h1 / den_h1
    e_u_l2 = num_l2 / den_l2
    if p_terms:
        num_p = math.sqrt(sum(e * e for e, _ in p_terms))
        den_p = math.sqrt(sum(d * d for _, d in p_terms))
        if den_p <= 0.0:
            raise DegenerateExactSolutionError(
                "exact pressure interpolant vanishes; relative error undefined")
        e_p_l2 = num_p / den_p
    else:
        e_p_l2 = None
    mesh = history.config.mesh
    return ErrorSeriesEntry(
        N=int(round(1.0 / mesh.h_param)),
        h=mesh.h_param,
        dt=history.config.dt,
        e_u_h1=e_u_h1,
        e_p_l2=e_p_l2,
        e_u_l2=e_u_l2,
    )


def pairwise_orders(h, e) -> list[float]:
    """log(E_i/E_{i+1}) / log(h_i/h_{i+1}) for each adjacent pair."""
    h = [float(v) for v in h]
    e = [float(v) for v in e]
    if len(h) != len(e) or len(h) < 2:
        raise InvalidArgumentError("need at least two (h, E) samples")
    if any(h2 >= h1 for h1, h2 in zip(h, h[1:])):
        raise InvalidArgumentError("h values must be strictly decreasing")
    return [math.log(e1 / e2) / math.log(h1 / h2)
            for (h1, h2), (e1, e2) in zip(zip(h, h[1:]), zip(e, e[1:]))]


def observed_orders(series, which: str = "e_u_h1") -> list[float]:
    """Per-adjacent-pair observed orders of one error column of a study."""
    if which not in ErrorSeriesEntry.ERROR_KEYS:
        raise InvalidArgumentError(f"unknown error key {which!r}")
    entries = [s for s in series]
    if any(s.failed for s in entries):
        raise InvalidArgumentError("cannot compute orders across failed runs")
    return pairwise_orders([s.h for s in entries],
                           [getattr(s, which) for s in entries])
