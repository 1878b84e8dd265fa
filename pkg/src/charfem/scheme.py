"""Time loops for the exact-transport scheme and its quadrature counterpart.

A run initializes the velocity with the Stokes projection of the initial
data, then advances the backward-Euler characteristics system one step at a
time, recording per-step norms, admissibility diagnostics and (when an exact
solution is attached to the problem) interpolant-relative error norms.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .analysis import field_norm
from .errors import AdmissibilityError, InvalidArgumentError, StepRejectedError
from .fem import (
    FESpace,
    Field,
    PRESSURE,
    VELOCITY,
    element_pair,
    lagrange_interpolate,
    p1_linearize,
)
from .mesh import Mesh
from .system import SaddleSystem, assemble_load, divergence_residual, stokes_projection
from .transport import (
    CflReport,
    assemble_composite_exact,
    assemble_composite_quadrature,
    check_admissibility,
)

log = logging.getLogger(__name__)

LGLLV = "lgllv"
LGQ = "lgq"

# relative bound on max|B u| per accepted step
DIV_TOL = 1e-10


@dataclass
class RunConfig:
    """Everything one time-dependent run needs.

    ``problem`` provides (duck-typed, any may be None where meaningful):
    ``f(points, t)``, ``u0`` (None, a Field, or a ``(value_fn, grad_fn)``
    pair), ``dirichlet(points)`` boundary data, and optionally
    ``exact_u(points, t)`` / ``exact_p(points, t)``.
    """

    nu: float
    T: float
    dt: float
    scheme: str
    pair: object
    mesh: Mesh
    problem: object
    strict_cfl: bool = True
    capture: frozenset = frozenset({"errors"})
    snapshot_times: tuple = ()
    c0_user: float = 1.0
    reproducible: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if self.scheme not in (LGLLV, LGQ):
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        self.pair = element_pair(self.pair)
        self.capture = frozenset(self.capture)
        if self.n_steps < 1:
            raise InvalidArgumentError(
                f"T={self.T}, dt={self.dt} gives floor(T/dt)={self.n_steps}; "
                "at least one step is required")

    @property
    def n_steps(self) -> int:
        # guard the floor against 1/N**2-style increments that are not
        # binary-exact; the intended count is the rational T/dt
        return int(math.floor(self.T / self.dt + 1e-9))


@dataclass
class StepRecord:
    n: int
    t: float
    u_l2: float
    u_h1: float
    p_l2: float | None
    cfl: CflReport | None
    wall: float
    div_residual: float
    u_norm2: float
    err_u_l2: float | None = None
    err_u_h1: float | None = None
    err_p_l2: float | None = None
    den_u_l2: float | None = None
    den_u_h1: float | None = None
    den_p_l2: float | None = None


@dataclass
class RunHistory:
    config: RunConfig
    records: list = dc_field(default_factory=list)
    u_final: Field | None = None
    p_final: Field | None = None
    snapshots: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.records)


def build_space(config: RunConfig) -> FESpace:
    return FESpace(config.mesh, config.pair)


class _Stepper:
    """Per-run engine holding the factorized system and data closures."""

    def __init__(self, config: RunConfig, space: FESpace):
        self.config = config
        self.space = space
        problem = config.problem
        g = np.zeros(space.n_velocity)
        dirichlet = getattr(problem, "dirichlet", None)
        if dirichlet is not None:
            vals = np.asarray(dirichlet(space.vel_node_coords), dtype=float)
            g = np.concatenate([vals[:, 0], vals[:, 1]])
        self.system = SaddleSystem(space, config.nu, dt=config.dt,
                                   dirichlet_values=g)
        self.f = getattr(problem, "f", None)
        self._warned = False

    def step(self, u_prev: Field, t_n: float, scheme: str
             ) -> tuple[Field, Field, CflReport]:
        config = self.config
        space = self.space
        dt = config.dt
        w = p1_linearize(u_prev)
        report = check_admissibility(w, dt, space.mesh.h_param, config.c0_user)
        if scheme == LGLLV:
            if not report.jacobian_ok and config.strict_cfl:
                raise AdmissibilityError(
                    f"step at t={t_n:.6g} violates dt*|w|_1,inf <= 1/4 "
                    f"(got {report.dt_times_grad:.4f})", report=report)
            r = assemble_composite_exact(u_prev, w, dt, space,
                                         strict=config.strict_cfl,
                                         report=report)
        else:
            if not report.jacobian_ok and not self._warned:
                log.warning("quadrature scheme running beyond the Jacobian "
                            "bound: dt*|w|_1,inf = %.4f", report.dt_times_grad)
                self._warned = True
            r = assemble_composite_quadrature(u_prev, u_prev, dt, space)
        rhs_u = r / dt
        if self.f is not None:
            rhs_u = rhs_u + assemble_load(self.f, t_n, space)
        u, p, _ = self.system.solve(rhs_u)
        u.time = p.time = t_n
        return u, p, report


def _get_stepper(config: RunConfig, space: FESpace) -> _Stepper:
    key = "_stepper"
    cached = getattr(config, key, None)
    if cached is None or cached.space is not space:
        cached = _Stepper(config, space)
        object.__setattr__(config, key, cached)
    return cached


def initialize(config: RunConfig, space: FESpace | None = None
               ) -> tuple[Field, RunHistory]:
    """Stokes-project the initial data and open the run history."""
    space = space or build_space(config)
    u0 = getattr(config.problem, "u0", None)
    if u0 is None:
        u_h0 = space.zero_field(VELOCITY)
    else:
        u_h0, _, _ = stokes_projection(u0, None, config.nu, space)
    u_h0.time = 0.0
    history = RunHistory(config=config)
    history.records.append(_record(config, space, 0, 0.0, u_h0, None, None, 0.0))
    return u_h0, history


def _record(config, space, n, t_n, u, p, report, wall) -> StepRecord:
    problem = config.problem
    rec = StepRecord(
        n=n, t=t_n,
        u_l2=field_norm(u, "L2"),
        u_h1=field_norm(u, "H1semi"),
        p_l2=field_norm(p, "L2") if p is not None else None,
        cfl=report, wall=wall,
        div_residual=0.0,
        u_norm2=float(np.linalg.norm(u.coefs)),
    )
    exact_u = getattr(problem, "exact_u", None)
    exact_p = getattr(problem, "exact_p", None)
    if "errors" in config.capture and exact_u is not None:
        pi_u = lagrange_interpolate(space, lambda pts: exact_u(pts, t_n), VELOCITY)
        diff = Field(space, VELOCITY, u.coefs - pi_u.coefs)
        rec.err_u_l2 = field_norm(diff, "L2")
        rec.err_u_h1 = field_norm(diff, "H1semi")
        rec.den_u_l2 = field_norm(pi_u, "L2")
        rec.den_u_h1 = field_norm(pi_u, "H1semi")
        if p is not None and exact_p is not None:
            pi_p = lagrange_interpolate(space, lambda pts: exact_p(pts, t_n),
                                        PRESSURE, remove_mean=True)
            dp = Field(space, PRESSURE, p.coefs - pi_p.coefs)
            rec.err_p_l2 = field_norm(dp, "L2")
            rec.den_p_l2 = field_norm(pi_p, "L2")
    return rec


def step_lgllv(u_prev: Field, t_n: float, config: RunConfig
               ) -> tuple[Field, Field, CflReport]:
    """One step of the exact-transport scheme."""
    return _get_stepper(config, u_prev.space).step(u_prev, t_n, LGLLV)


def step_lgq(u_prev: Field, t_n: float, config: RunConfig
             ) -> tuple[Field, Field, CflReport]:
    """One step of the conventional quadrature scheme."""
    return _get_stepper(config, u_prev.space).step(u_prev, t_n, LGQ)


def run(config: RunConfig) -> RunHistory:
    """Initialize, then advance floor(T/dt) steps, capturing per-step data.

    Raises :class:`StepRejectedError` carrying the partial history when a
    strict-mode step is rejected.
    """
    space = build_space(config)
    u, history = initialize(config, space)
    stepper = _get_stepper(config, space)
    if "fields" in config.capture:
        history.snapshots[0] = (u.copy(), None)
    n_steps = config.n_steps
    snapshot_steps = {int(round(ts / config.dt)) for ts in config.snapshot_times}
    for n in range(1, n_steps + 1):
        t_n = n * config.dt
        t0 = time.perf_counter()
        try:
            u_new, p_new, report = stepper.step(u, t_n, config.scheme)
        except AdmissibilityError as exc:
            raise StepRejectedError(
                f"step {n} (t={t_n:.6g}) rejected: {exc}",
                report=exc.report, step=n, history=history) from exc
        wall = time.perf_counter() - t0
        rec = _record(config, space, n, t_n, u_new, p_new, report, wall)
        rec.div_residual = divergence_residual(stepper.system, u_new)
        # absolute floor covers the identically-zero velocity, where the
        # relative bound degenerates to machine noise
        if rec.div_residual > DIV_TOL * rec.u_norm2 + 1e-14:
            raise StepRejectedError(
                f"discrete divergence defect {rec.div_residual:.3e} at step {n} "
                f"exceeds {DIV_TOL:g} * |u|", step=n, history=history)
        history.records.append(rec)
        u = u_new
        if n in snapshot_steps or "fields" in config.capture:
            history.snapshots[n] = (u_new.copy(), p_new.copy())
    history.u_final = u
    history.p_final = history.snapshots.get(n_steps, (None, None))[1]
    if history.p_final is None and n_steps >= 1:
        history.p_final = p_new
    return history
