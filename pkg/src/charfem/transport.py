"""Composite transport term: exact via clipping, or by fixed-rule quadrature.

The exact assembler integrates (u_prev o X1(w)) . phi_i element by element
over the clip polygons of the affine foot map; the quadrature assembler is
the conventional practice the exact scheme replaces, kept for comparison
runs (it feeds the instability study).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    AdmissibilityError,
    GeometryConsistencyError,
    InvalidArgumentError,
    OutOfDomainError,
    SolverFailureError,
)
from .fem import FESpace, Field, P1VectorField, VELOCITY, eval_basis, sup_grad_p1
from .quadrature import TriangleRule, default_rule, seven_point_degree5

log = logging.getLogger(__name__)

JACOBIAN_BOUND = 0.25  # dt * |w|_{1,inf} <= 1/4 keeps det in [1/2, 3/2]
DOMAIN_TOL = 1e-12
PARTITION_TOL = 1e-8


@dataclass(frozen=True)
class CflReport:
    """Admissibility diagnostics for one prospective step."""

    dt_times_grad: float
    bijective_ok: bool
    jacobian_ok: bool
    step_vs_h: float

    def __post_init__(self):
        if self.jacobian_ok and not self.bijective_ok:
            raise InvalidArgumentError("jacobian_ok implies bijective_ok")


def check_admissibility(w: P1VectorField, dt: float, h: float,
                        c0_user: float = 1.0) -> CflReport:
    """CFL-like diagnostics; pure, never raises on a violation."""
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    s = dt * sup_grad_p1(w)
    return CflReport(
        dt_times_grad=s,
        bijective_ok=bool(s < 1.0),
        jacobian_ok=bool(s <= JACOBIAN_BOUND * (1.0 + 1e-12)),
        step_vs_h=dt / (c0_user * h ** 0.5),
    )


def _require_velocity(u: Field):
    if u.role != VELOCITY:
        raise InvalidArgumentError("transport expects a velocity field")


def assemble_composite_exact(u_prev: Field, w: P1VectorField, dt: float,
                             space: FESpace, *, strict: bool = True,
                             report: CflReport | None = None) -> np.ndarray:
    """r_i = integral of (u_prev o X1(w)) . phi_i, exact up to rounding."""
    _require_velocity(u_prev)
    if u_prev.space is not space:
        raise InvalidArgumentError("u_prev must live on the given space")
    if report is None:
        report = check_admissibility(w, dt, space.mesh.h_param)
    if not report.jacobian_ok:
        if strict:
            raise AdmissibilityError(
                f"dt*|w|_1,inf = {report.dt_times_grad:.4f} exceeds 1/4",
                report=report)
        log.warning("exact transport outside the Jacobian bound: "
                    "dt*|w|_1,inf = %.4f", report.dt_times_grad)
    mesh = space.mesh
    rule = default_rule()
    r, status, bad, defect = _kernels.assemble_composite_exact_kernel(
        mesh.vertices, mesh.triangles, mesh.neighbor, mesh._v0, mesh._tinv,
        mesh.areas, mesh._bbox, space.vel_elem_dofs, space.n_scalar,
        u_prev.coefs, w.vertex_values, float(dt), rule.bary, rule.weights,
        space.pair.kind_code, DOMAIN_TOL, PARTITION_TOL)
    if status == 1:
        raise OutOfDomainError(
            f"image of element {bad} leaves the domain (admissibility violation)")
    if status == 2:
        raise AdmissibilityError(f"foot map degenerate on element {bad}",
                                 report=report)
    if status == 3:
        raise GeometryConsistencyError(
            f"clip areas fail to partition element {bad} "
            f"(defect {defect:.3e})")
    if status == 4:
        raise SolverFailureError(f"point location failed near element {bad}")
    return r


def _rule_basis(space: FESpace, rule: TriangleRule) -> np.ndarray:
    key = ("rule_basis", id(rule))
    if key not in space._cache:
        vals = np.empty((rule.npoints, space.pair.n_vel_local))
        for q, lam in enumerate(rule.bary):
            vals[q] = eval_basis(space.pair, VELOCITY, lam)
        space._cache[key] = vals
    return space._cache[key]


def assemble_composite_quadrature(u_prev: Field, w_full: Field, dt: float,
                                  space: FESpace,
                                  rule: TriangleRule | None = None) -> np.ndarray:
    """Conventional transport vector by a fixed element rule.

    ``w_full`` is the (non-linearized) velocity that drives the feet;
    feet leaving the domain are clamped onto the boundary.
    """
    _require_velocity(u_prev)
    _require_velocity(w_full)
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    rule = rule or seven_point_degree5()
    if np.any(rule.bary <= 0.0):
        raise InvalidArgumentError("quadrature points must be interior")
    mesh = space.mesh
    basis = _rule_basis(space, rule)
    if w_full.coefs is not u_prev.coefs and not np.array_equal(
            w_full.coefs, u_prev.coefs):
        return _quadrature_two_fields(u_prev, w_full, dt, space, rule, basis)
    r, status, bad = _kernels.assemble_composite_quadrature_kernel(
        mesh.vertices, mesh.triangles, mesh.neighbor, mesh._v0, mesh._tinv,
        mesh.areas, space.vel_elem_dofs, space.n_scalar, u_prev.coefs,
        float(dt), rule.bary, basis, rule.weights, space.pair.kind_code)
    if status != 0:
        raise SolverFailureError(f"point location failed near element {bad}")
    return r


def _quadrature_two_fields(u_prev, w_full, dt, space, rule, basis):
    """Vectorized fallback when the foot field differs from the transported one."""
    mesh = space.mesh
    ns = space.n_scalar
    pts = np.einsum("qk,tkd->tqd", rule.bary, mesh.vertices[mesh.triangles])
    nt, nq = pts.shape[:2]
    wx = w_full.coefs[space.vel_elem_dofs] @ basis.T      # (nt, nq)
    wy = w_full.coefs[ns + space.vel_elem_dofs] @ basis.T
    feet = pts - dt * np.stack([wx, wy], axis=-1)
    feet = np.clip(feet.reshape(-1, 2), 0.0, 1.0)
    els = mesh.locate_many(feet)
    if (els < 0).any():
        raise SolverFailureError("point location failed for quadrature feet")
    vals = np.empty((len(feet), 2))
    buf = np.empty(8)
    for i, (t, p) in enumerate(zip(els, feet)):
        lam = mesh.barycentric(int(t), p)
        n = _kernels.vel_basis(space.pair.kind_code, lam[0], lam[1], lam[2], buf)
        dofs = space.vel_elem_dofs[t, :n]
        vals[i, 0] = buf[:n] @ u_prev.coefs[dofs]
        vals[i, 1] = buf[:n] @ u_prev.coefs[ns + dofs]
    vals = vals.reshape(nt, nq, 2)
    aw = mesh.areas[:, None] * rule.weights[None, :]
    contrib = np.einsum("tq,tqc,ql->tlc", aw, vals, basis)
    r = np.zeros(space.n_velocity)
    np.add.at(r, space.vel_elem_dofs.ravel(), contrib[:, :, 0].ravel())
    np.add.at(r, ns + space.vel_elem_dofs.ravel(), contrib[:, :, 1].ravel())
    return r
