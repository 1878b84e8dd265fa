"""Quadrature rules on triangles.

All rules follow the ``meas(K) * sum_i w_i g(a_i)`` convention: points are
stored in barycentric coordinates and weights sum to one, so integrals are
obtained by multiplying the weighted sum with the physical element area.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class TriangleRule:
    """A fixed quadrature rule on the reference triangle.

    ``bary`` has shape (nq, 3); ``weights`` has shape (nq,) and sums to 1.
    ``degree`` is the highest polynomial degree integrated exactly.
    """

    bary: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def npoints(self) -> int:
        return self.weights.shape[0]

    def points_on(self, verts: np.ndarray) -> np.ndarray:
        """Physical quadrature points for a triangle given by ``verts`` (3, 2)."""
        return self.bary @ verts


@lru_cache(maxsize=None)
def gauss_rule(degree: int) -> TriangleRule:
    """Product Gauss-Legendre rule, collapsed onto the triangle.

    Uses the Duffy map (x, y) = (u, v(1-u)); with n points per direction the
    rule is exact for bivariate polynomials of total degree <= 2n - 2
    (the Jacobian 1-u raises the u-degree by one).
    """
    if degree < 0:
        raise InvalidArgumentError(f"degree must be nonnegative, got {degree}")
    n = max(1, math.ceil((degree + 2) / 2))
    gp, gw = np.polynomial.legendre.leggauss(n)
    # shift from [-1, 1] to [0, 1]
    gp = 0.5 * (gp + 1.0)
    gw = 0.5 * gw
    u = np.repeat(gp, n)
    v = np.tile(gp, n)
    w = np.repeat(gw, n) * np.tile(gw, n) * (1.0 - u)
    x = u
    y = v * (1.0 - u)
    bary = np.column_stack([1.0 - x - y, x, y])
    # weights sum to the reference area 1/2; normalize to 1
    weights = w / w.sum()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return TriangleRule(bary=bary, weights=weights, degree=2 * n - 2)


@lru_cache(maxsize=None)
def seven_point_degree5() -> TriangleRule:
    """The classical seven-point, degree-five symmetric rule."""
    s15 = math.sqrt(15.0)
    a = (6.0 - s15) / 21.0
    b = (6.0 + s15) / 21.0
    wa = (155.0 - s15) / 1200.0
    wb = (155.0 + s15) / 1200.0
    bary = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * a, a, a],
            [a, 1 - 2 * a, a],
            [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b],
            [b, 1 - 2 * b, b],
            [b, b, 1 - 2 * b],
        ]
    )
    weights = np.array([9.0 / 40.0, wa, wa, wa, wb, wb, wb])
    bary.setflags(write=False)
    weights.setflags(write=False)
    return TriangleRule(bary=bary, weights=weights, degree=5)


# One rule shared by every assembly path that must be exact: degree >= 8
# covers all basis-function products that occur (bubble x bubble is degree 6).
COMPOSITE_DEGREE = 8


def default_rule() -> TriangleRule:
    return gauss_rule(COMPOSITE_DEGREE)
