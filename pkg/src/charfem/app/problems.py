"""Benchmark problem definitions.

The manufactured solution is built from one scalar profile and its hand
derivatives; the forcing below is the closed form of Du/Dt - nu*lap(u) +
grad(p) and is guarded by finite-difference residual tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

PI = np.pi


def _profile(a, b, t):
    """The scalar profile and the partials needed for velocity and forcing.

    Returns (phi, phi_a, phi_b, phi_t, lap) where lap = phi_aa + phi_bb.
    """
    sa = np.sin(PI * a)
    ca = np.cos(PI * a)
    sb = np.sin(PI * b)
    cb = np.cos(PI * b)
    s2a = 2.0 * sa * ca
    c2a = ca * ca - sa * sa
    arg1 = PI * (a + t)
    arg2 = PI * (a + 2.0 * b + t)
    s1, c1 = np.sin(arg1), np.cos(arg1)
    s2, c2 = np.sin(arg2), np.cos(arg2)
    psi = s1 + 3.0 * s2
    psi_a = PI * (c1 + 3.0 * c2)         # also the t-derivative
    psi_b = 6.0 * PI * c2
    sa2 = sa * sa
    phi = -sa2 * sb * psi
    phi_a = -PI * s2a * sb * psi - sa2 * sb * psi_a
    phi_b = -PI * sa2 * cb * psi - sa2 * sb * psi_b
    phi_t = -sa2 * sb * psi_a
    phi_aa = (-2.0 * PI * PI * c2a * sb * psi - 2.0 * PI * s2a * sb * psi_a
              + PI * PI * sa2 * sb * psi)
    phi_bb = (PI * PI * sa2 * sb * psi - 2.0 * PI * sa2 * cb * psi_b
              + 12.0 * PI * PI * sa2 * sb * s2)
    return phi, phi_a, phi_b, phi_t, phi_aa + phi_bb


@dataclass
class ManufacturedSolution:
    """Closed-form (u, p) on the unit square with the matching forcing."""

    nu: float
    name: str = "example1"

    def u(self, points, t):
        x, y = np.asarray(points).T
        u1 = _profile(x, y, t)[0]
        u2 = -_profile(y, x, t)[0]
        return np.column_stack([u1, u2])

    def p(self, points, t):
        x, y = np.asarray(points).T
        return np.sin(PI * (x + 2.0 * y) + 1.0 + t)

    def grad_u(self, points, t):
        x, y = np.asarray(points).T
        _, pa_xy, pb_xy, _, _ = _profile(x, y, t)
        _, pa_yx, pb_yx, _, _ = _profile(y, x, t)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = pa_xy
        g[:, 0, 1] = pb_xy
        g[:, 1, 0] = -pb_yx
        g[:, 1, 1] = -pa_yx
        return g

    def f(self, points, t):
        x, y = np.asarray(points).T
        phi_xy, pa_xy, pb_xy, pt_xy, lap_xy = _profile(x, y, t)
        phi_yx, pa_yx, pb_yx, pt_yx, lap_yx = _profile(y, x, t)
        u1 = phi_xy
        u2 = -phi_yx
        arg = PI * (x + 2.0 * y) + 1.0 + t
        dp_x = PI * np.cos(arg)
        dp_y = 2.0 * PI * np.cos(arg)
        f1 = pt_xy + u1 * pa_xy + u2 * pb_xy - self.nu * lap_xy + dp_x
        f2 = -pt_yx + u1 * (-pb_yx) + u2 * (-pa_yx) + self.nu * lap_yx + dp_y
        return np.column_stack([f1, f2])

    # hooks consumed by the scheme driver ------------------------------------
    @property
    def u0(self):
        return (lambda pts: self.u(pts, 0.0), lambda pts: self.grad_u(pts, 0.0))

    def dirichlet(self, points):
        return np.zeros((len(np.atleast_2d(points)), 2))

    def exact_u(self, points, t):
        return self.u(points, t)

    def exact_p(self, points, t):
        return self.p(points, t)


def example1_fields(nu: float) -> ManufacturedSolution:
    """Evaluators for the manufactured convergence benchmark."""
    if nu <= 0:
        raise InvalidArgumentError(f"viscosity must be positive, got {nu}")
    return ManufacturedSolution(nu=nu)


@dataclass
class CavityProblem:
    """Regularized lid-driven cavity: f = 0, u0 = 0, lid speed 4 x (1 - x)."""

    nu: float
    name: str = "cavity"
    f = None
    u0 = None
    exact_u = None
    exact_p = None

    def lid_speed(self, x):
        return 4.0 * x * (1.0 - x)

    def dirichlet(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.zeros((len(pts), 2))
        on_lid = np.abs(pts[:, 1] - 1.0) <= 1e-12
        g[on_lid, 0] = self.lid_speed(pts[on_lid, 0])
        return g
