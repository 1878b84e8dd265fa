"""Command-line driver.

Exit codes: 0 success, 2 invalid configuration, 3 step rejected by the
admissibility check, 4 linear solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import (
    ConfigError,
    InvalidArgumentError,
    SolverFailureError,
    StepRejectedError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STEP_REJECTED = 3
EXIT_SOLVER = 4


def _add_common(parser):
    parser.add_argument("--pair", default="TaylorHood_P2P1",
                        help="element pair: TaylorHood_P2P1 or MINI_P1bP1")
    parser.add_argument("--pattern", default=None,
                        choices=("right", "crisscross"),
                        help="structured mesh pattern (default by pair)")
    parser.add_argument("--strict-cfl", action="store_true", default=True,
                        dest="strict_cfl")
    parser.add_argument("--permissive-cfl", action="store_false",
                        dest="strict_cfl",
                        help="warn instead of rejecting inadmissible steps")
    parser.add_argument("--reproducible", action="store_true", default=True)
    parser.add_argument("--no-reproducible", action="store_false",
                        dest="reproducible")
    parser.add_argument("--threads", type=int, default=1,
                        help="concurrent runs in a sweep (1 = sequential)")
    parser.add_argument("--out", default="charfem-out",
                        help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="charfem",
        description="Lagrange-Galerkin Navier-Stokes benchmarks on the unit square")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration file")
    p_run.add_argument("--config", required=True, help="flat key=value file")

    p_c = sub.add_parser("converge", help="convergence study over a mesh sweep")
    p_c.add_argument("--problem", default="example1", choices=["example1"])
    p_c.add_argument("--scheme", required=True, choices=["lgllv", "lgq"])
    p_c.add_argument("--nu", type=float, required=True)
    p_c.add_argument("--dt-rule", required=True, choices=["h2", "h3"])
    p_c.add_argument("--n", required=True,
                     help="comma-separated division counts, e.g. 8,12,16")
    p_c.add_argument("--full", action="store_true",
                     help="use the full published sweep up to N=64")
    _add_common(p_c)

    p_cav = sub.add_parser("cavity", help="regularized lid-driven cavity run")
    p_cav.add_argument("--scheme", required=True, choices=["lgllv", "lgq"])
    p_cav.add_argument("--nu", type=float, required=True)
    p_cav.add_argument("--n", type=int, required=True)
    p_cav.add_argument("--dt", type=float, required=True)
    p_cav.add_argument("--T", type=float, default=8.0)
    _add_common(p_cav)
    return parser


FULL_SWEEPS = {"h2": [16, 23, 32, 45, 64], "h3": [16, 19, 23, 27, 32]}


def _cmd_converge(args) -> int:
    from .studies import run_convergence_study

    n_list = (FULL_SWEEPS[args.dt_rule] if args.full
              else [int(tok) for tok in args.n.split(",") if tok.strip()])
    entries, orders = run_convergence_study(
        args.problem, args.scheme, args.dt_rule, n_list, args.nu,
        pair=args.pair, pattern=args.pattern, out_dir=args.out,
        strict_cfl=args.strict_cfl, reproducible=args.reproducible,
        threads=args.threads)
    width = max(len(str(e.N)) for e in entries)
    for i, e in enumerate(entries):
        if e.failed:
            print(f"N={e.N:<{width}}  {e.failed}")
            continue
        parts = [f"N={e.N:<{width}}"]
        for key, label in zip(("e_u_h1", "e_p_l2", "e_u_l2"),
                              ("E_H1(u)", "E_L2(p)", "E_L2inf(u)")):
            parts.append(f"{label}={getattr(e, key):.3e}")
            seq = orders.get(key, [])
            if 0 < i <= len(seq) and seq[i - 1] is not None:
                parts.append(f"(ord {seq[i - 1]:.2f})")
        print("  ".join(parts))
    if any(e.failed for e in entries):
        return EXIT_STEP_REJECTED
    return EXIT_OK


def _cmd_cavity(args) -> int:
    from .studies import run_cavity

    history, indicator = run_cavity(
        args.scheme, args.nu, args.n, args.dt, T=args.T, pair=args.pair,
        pattern=args.pattern, out_dir=args.out, strict_cfl=args.strict_cfl,
        reproducible=args.reproducible)
    print(f"cavity {args.scheme} nu={args.nu:g} N={args.n}: "
          f"{len(history) - 1} steps, subdomain max |u| = {indicator:.4f}")
    return EXIT_OK


def _cmd_run(args) -> int:
    from ..mesh import generate_structured_unit_square
    from ..scheme import RunConfig, run
    from .io import load_config
    from .problems import CavityProblem, example1_fields
    from .studies import default_pattern, oscillation_indicator

    cfg = load_config(args.config)
    for key in ("problem", "scheme", "nu", "dt", "n"):
        if key not in cfg:
            raise ConfigError(f"config is missing required key {key!r}")
    name = cfg["problem"]
    if name == "example1":
        problem = example1_fields(cfg["nu"])
        t_final = cfg.get("T", 1.0)
    elif name == "cavity":
        problem = CavityProblem(nu=cfg["nu"])
        t_final = cfg.get("T", 8.0)
    else:
        raise ConfigError(f"unknown problem {name!r}")
    pair = cfg.get("pair", "TaylorHood_P2P1")
    mesh = generate_structured_unit_square(
        cfg["n"], cfg.get("pattern", default_pattern(pair)))
    snaps = tuple(float(tok) for tok in
                  str(cfg.get("snapshot_times", "")).split() if tok)
    config = RunConfig(nu=cfg["nu"], T=t_final, dt=cfg["dt"],
                       scheme=cfg["scheme"], pair=pair, mesh=mesh,
                       problem=problem,
                       strict_cfl=cfg.get("strict_cfl", True),
                       reproducible=cfg.get("reproducible", True),
                       snapshot_times=snaps)
    history = run(config)
    last = history.records[-1]
    print(f"{name} {cfg['scheme']}: {len(history) - 1} steps to t={last.t:g}; "
          f"|u|_L2={last.u_l2:.6e}  |u|_H1={last.u_h1:.6e}")
    if name == "cavity":
        print(f"subdomain max |u| = {oscillation_indicator(history.u_final):.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "converge":
            return _cmd_converge(args)
        if args.command == "cavity":
            return _cmd_cavity(args)
        return _cmd_run(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepRejectedError as exc:
        print(f"step rejected: {exc}", file=sys.stderr)
        return EXIT_STEP_REJECTED
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
