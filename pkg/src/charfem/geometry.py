"""Affine foot maps, triangle clipping, and exact integration over clips.

The upstream map restricted to one element is affine once the velocity is
piecewise linear, so the overlap of an element with the preimage of another
is a convex polygon and polynomial integrands stay polynomial on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    GeometryConsistencyError,
    InvalidArgumentError,
    OutOfDomainError,
    SingularGeometryError,
    SingularMapError,
)
from .fem import P1VectorField
from .mesh import Mesh
from .quadrature import default_rule

DOMAIN_SNAP_TOL = 1e-12


@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + offset, valid on one source element."""

    matrix: np.ndarray
    offset: np.ndarray
    source_element: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.matrix.T + self.offset

    def inverse_apply(self, points) -> np.ndarray:
        if abs(self.det) <= 1e-14:
            raise SingularMapError("affine map is not invertible")
        p = np.asarray(points, dtype=float) - self.offset
        inv = np.linalg.inv(self.matrix)
        return p @ inv.T


@dataclass(frozen=True)
class ClipPolygon:
    """Convex overlap K0 with the affine preimage of K1, counterclockwise."""

    vertices: np.ndarray  # (k, 2)
    source_element: int
    target_element: int

    @property
    def area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def foot_map_on_element(w: P1VectorField, dt: float, k0: int) -> AffineMap:
    """Affine map agreeing with x - dt*w(x) on element ``k0``."""
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    mesh = w.mesh
    ids = mesh.triangles[k0]
    a = mesh.vertices[ids]
    y = a - dt * w.vertex_values[ids]
    # M maps edge vectors of K0 onto edge vectors of the image
    ye = np.column_stack([y[1] - y[0], y[2] - y[0]])
    te = np.column_stack([a[1] - a[0], a[2] - a[0]])
    det = te[0, 0] * te[1, 1] - te[0, 1] * te[1, 0]
    if abs(det) < 1e-14:
        raise SingularGeometryError(f"element {k0} is degenerate")
    m = ye @ np.linalg.inv(te)
    return AffineMap(matrix=m, offset=y[0] - m @ a[0], source_element=int(k0))


def _triangle_of(mesh_or_pts, k=None) -> np.ndarray:
    if isinstance(mesh_or_pts, Mesh):
        return mesh_or_pts.vertices[mesh_or_pts.triangles[k]]
    pts = np.asarray(mesh_or_pts, dtype=float)
    if pts.shape != (3, 2):
        raise InvalidArgumentError("a triangle is a (3, 2) vertex array")
    return pts


def clip(k0_pts, f: AffineMap, k1_pts, *, source_element=None,
         target_element=None) -> ClipPolygon | None:
    """K0 intersected with F^{-1}(K1); None when the overlap is negligible."""
    sub = np.ascontiguousarray(_triangle_of(k0_pts), dtype=float)
    tgt = np.ascontiguousarray(_triangle_of(k1_pts), dtype=float)
    if abs(f.det) <= 1e-14:
        raise SingularMapError("foot map is not invertible")
    pre = f.inverse_apply(tgt)
    # keep the clipper counterclockwise
    if _signed_area(pre) < 0:
        pre = pre[[0, 2, 1]]
    if _signed_area(sub) < 0:
        sub = sub[[0, 2, 1]]
    diam = max(np.linalg.norm(sub[1] - sub[0]), np.linalg.norm(sub[2] - sub[0]),
               np.linalg.norm(sub[2] - sub[1]))
    buf_a = np.empty((16, 2))
    buf_b = np.empty((16, 2))
    n = _kernels.clip_triangle_triangle(sub, np.ascontiguousarray(pre),
                                        buf_a, buf_b, 1e-13 * diam)
    if n < 3:
        return None
    area = _kernels.poly_area(buf_a, n)
    if area < 1e-14 * _signed_area(sub):
        return None
    src = f.source_element if source_element is None else source_element
    return ClipPolygon(vertices=buf_a[:n].copy(), source_element=int(src),
                       target_element=-1 if target_element is None else int(target_element))


def _signed_area(pts) -> float:
    return 0.5 * float(
        (pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
        - (pts[2, 0] - pts[0, 0]) * (pts[1, 1] - pts[0, 1]))


def integrate_poly_product(e: ClipPolygon, f: AffineMap, g_target, g_source,
                           deg_target: int, deg_source: int) -> float:
    """Exact integral over ``e`` of (g_target o F) * g_source.

    Both factors are polynomials in physical coordinates, of the stated
    total degrees; their product is integrated by fan-triangulating the
    polygon and applying the shared fixed rule on each piece.
    """
    if deg_target < 0 or deg_source < 0:
        raise InvalidArgumentError("polynomial degrees must be nonnegative")
    rule = default_rule()
    if deg_target + deg_source > rule.degree:
        raise RuntimeError(
            f"internal error: rule of degree {rule.degree} cannot integrate "
            f"a product of degree {deg_target + deg_source} exactly")
    pts, wts = fan_quadrature(e.vertices, rule)
    if len(pts) == 0:
        return 0.0
    gt = np.asarray(g_target(f.apply(pts)), dtype=float)
    gs = np.asarray(g_source(pts), dtype=float)
    return float(np.sum(wts * gt * gs))


def fan_quadrature(poly_vertices, rule=None):
    """Physical points and weights for a centroid fan over a convex polygon.

    Weights carry the sub-triangle areas, so plain dot products integrate.
    """
    rule = rule or default_rule()
    v = np.asarray(poly_vertices, dtype=float)
    n = len(v)
    c = v.mean(axis=0)
    pts = []
    wts = []
    for i in range(n):
        tri = np.array([c, v[i], v[(i + 1) % n]])
        area = _signed_area(tri)
        if area <= 0.0:
            continue
        pts.append(rule.bary @ tri)
        wts.append(rule.weights * area)
    if not pts:
        return np.empty((0, 2)), np.empty(0)
    return np.vstack(pts), np.concatenate(wts)


def find_overlaps(mesh: Mesh, k0: int, f: AffineMap,
                  partition_tol: float = 1e-10) -> list[ClipPolygon]:
    """All clip polygons of element ``k0`` against the mesh under map ``f``.

    The polygons partition K0; a total-area defect beyond ``partition_tol``
    raises. Images escaping the unit square beyond the snap tolerance are
    admissibility violations.
    """
    tri = mesh.vertices[mesh.triangles[k0]]
    img = f.apply(tri)
    if (img < -DOMAIN_SNAP_TOL).any() or (img > 1.0 + DOMAIN_SNAP_TOL).any():
        raise OutOfDomainError(
            f"image of element {k0} leaves the domain: {img}")
    c = np.clip(img.mean(axis=0), 0.0, 1.0)
    seed = mesh.locate(c).element_id
    lo = img.min(axis=0) - 1e-12
    hi = img.max(axis=0) + 1e-12

    out = []
    seen = {seed}
    stack = [seed]
    while stack:
        k1 = stack.pop()
        bb = mesh._bbox[k1]
        if bb[0] > hi[0] or bb[1] > hi[1] or bb[2] < lo[0] or bb[3] < lo[1]:
            continue
        for nb in mesh.neighbor[k1]:
            if nb >= 0 and nb not in seen:
                seen.add(int(nb))
                stack.append(int(nb))
        poly = clip(tri, f, mesh.vertices[mesh.triangles[k1]],
                    source_element=k0, target_element=k1)
        if poly is not None:
            out.append(poly)

    total = sum(p.area for p in out)
    if abs(total - mesh.areas[k0]) > partition_tol:
        raise GeometryConsistencyError(
            f"clip areas of element {k0} sum to {total!r}, "
            f"element area is {mesh.areas[k0]!r}")
    out.sort(key=lambda p: p.target_element)
    return out
