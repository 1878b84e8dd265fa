"""Conforming triangulations of the unit square, with adjacency and point location."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, OutOfDomainError, SingularGeometryError


@dataclass(frozen=True)
class PointLocation:
    """Containing element plus barycentric coordinates of the query point."""

    element_id: int
    barycentric: np.ndarray


class Mesh:
    """Immutable conforming triangulation.

    Triangles are stored counterclockwise. ``neighbor[t, k]`` is the element
    across the edge opposite local vertex ``k`` (-1 on the boundary), and
    ``tri_edges[t, k]`` the matching row of the global edge table.
    """

    def __init__(self, vertices, triangles, h_param=None, pattern=None,
                 check_unit_square=False):
        verts = np.ascontiguousarray(vertices, dtype=np.float64)
        tris = np.ascontiguousarray(triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise InvalidArgumentError("vertices must have shape (nv, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise InvalidArgumentError("triangles must have shape (nt, 3)")
        if tris.min(initial=0) < 0 or tris.max(initial=-1) >= len(verts):
            raise InvalidArgumentError("triangle vertex ids out of range")

        # enforce counterclockwise orientation
        a = verts[tris[:, 0]]
        b = verts[tris[:, 1]]
        c = verts[tris[:, 2]]
        signed = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
        flip = signed < 0
        if flip.any():
            tris = tris.copy()
            tris[flip, 1], tris[flip, 2] = tris[flip, 2], tris[flip, 1]
            signed = np.abs(signed)
        if np.any(signed <= 1e-16):
            raise SingularGeometryError("degenerate (zero-area) triangle in mesh")

        self.vertices = verts
        self.triangles = tris
        self.areas = signed
        self.pattern = pattern
        self._build_edges()
        self._build_geometry()
        self.h_param = float(h_param) if h_param is not None else float(self.h_max())

        if check_unit_square and abs(self.areas.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(
                f"triangle areas sum to {self.areas.sum():.16f}, expected 1")

        for arr in (self.vertices, self.triangles, self.areas, self.edges,
                    self.tri_edges, self.neighbor, self.boundary_vertex,
                    self.boundary_edge, self.grad_lambda, self.centroids,
                    self._v0, self._tinv, self._bbox):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _build_edges(self):
        tris = self.triangles
        nt = len(tris)
        edge_of = {}
        edges = []
        tri_edges = np.empty((nt, 3), dtype=np.int64)
        edge_tris = []
        for t in range(nt):
            for k in range(3):
                a = tris[t, (k + 1) % 3]
                b = tris[t, (k + 2) % 3]
                key = (a, b) if a < b else (b, a)
                e = edge_of.get(key)
                if e is None:
                    e = len(edges)
                    edge_of[key] = e
                    edges.append(key)
                    edge_tris.append([t])
                else:
                    if len(edge_tris[e]) == 2:
                        raise InvalidArgumentError(
                            f"edge {key} shared by more than two triangles")
                    edge_tris[e].append(t)
                tri_edges[t, k] = e
        self.edges = np.asarray(edges, dtype=np.int64)
        self.tri_edges = tri_edges

        neighbor = np.full((nt, 3), -1, dtype=np.int64)
        boundary_edge = np.zeros(len(edges), dtype=bool)
        for e, owners in enumerate(edge_tris):
            if len(owners) == 1:
                boundary_edge[e] = True
            else:
                t0, t1 = owners
                k0 = int(np.where(tri_edges[t0] == e)[0][0])
                k1 = int(np.where(tri_edges[t1] == e)[0][0])
                neighbor[t0, k0] = t1
                neighbor[t1, k1] = t0
        self.neighbor = neighbor
        self.boundary_edge = boundary_edge

        boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        boundary_vertex[self.edges[boundary_edge].ravel()] = True
        self.boundary_vertex = boundary_vertex

        vertex_tris = [[] for _ in range(len(self.vertices))]
        for t in range(nt):
            for v in tris[t]:
                vertex_tris[v].append(t)
        self.vertex_tris = [tuple(lst) for lst in vertex_tris]

    def _build_geometry(self):
        verts, tris = self.vertices, self.triangles
        p0 = verts[tris[:, 0]]
        e1 = verts[tris[:, 1]] - p0
        e2 = verts[tris[:, 2]] - p0
        det = e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]
        tinv = np.empty((len(tris), 2, 2))
        tinv[:, 0, 0] = e2[:, 1] / det
        tinv[:, 0, 1] = -e2[:, 0] / det
        tinv[:, 1, 0] = -e1[:, 1] / det
        tinv[:, 1, 1] = e1[:, 0] / det
        self._v0 = np.ascontiguousarray(p0)
        self._tinv = np.ascontiguousarray(tinv)

        grad_lam = np.empty((len(tris), 3, 2))
        grad_lam[:, 1, :] = tinv[:, 0, :]
        grad_lam[:, 2, :] = tinv[:, 1, :]
        grad_lam[:, 0, :] = -tinv[:, 0, :] - tinv[:, 1, :]
        self.grad_lambda = grad_lam

        pts = verts[tris]  # (nt, 3, 2)
        self.centroids = pts.mean(axis=1)
        bbox = np.empty((len(tris), 4))
        bbox[:, 0] = pts[:, :, 0].min(axis=1)
        bbox[:, 1] = pts[:, :, 1].min(axis=1)
        bbox[:, 2] = pts[:, :, 0].max(axis=1)
        bbox[:, 3] = pts[:, :, 1].max(axis=1)
        self._bbox = bbox

        sides = np.stack([
            np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1),
            np.linalg.norm(pts[:, 2] - pts[:, 1], axis=1),
            np.linalg.norm(pts[:, 0] - pts[:, 2], axis=1),
        ], axis=1)
        self._diameters = sides.max(axis=1)
        self._perimeters = sides.sum(axis=1)

    # -- queries ---------------------------------------------------------------

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nt(self) -> int:
        return len(self.triangles)

    @property
    def ne(self) -> int:
        return len(self.edges)

    def h_max(self) -> float:
        return float(self._diameters.max())

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def barycentric(self, element_id: int, p) -> np.ndarray:
        d = np.asarray(p, dtype=float) - self._v0[element_id]
        l23 = self._tinv[element_id] @ d
        return np.array([1.0 - l23[0] - l23[1], l23[0], l23[1]])

    def locate(self, p, start: int | None = None) -> PointLocation:
        """Containing element and barycentric coordinates of ``p``.

        Points on shared edges/vertices resolve to the lowest element id.
        The optional ``start`` element is a walk hint; callers doing many
        nearby queries should pass their previous hit (per-caller state).
        """
        p = np.asarray(p, dtype=float)
        px, py = float(p[0]), float(p[1])
        t = _kernels.locate_robust(self._v0, self._tinv, self.neighbor,
                                   px, py, 0 if start is None else int(start),
                                   _kernels.LAM_TOL)
        if t < 0:
            raise OutOfDomainError(f"point {p} lies outside the triangulation")
        lam = self.barycentric(t, p)
        if lam.min() < 1e-9:
            # deterministic tie-break for points on shared entities
            cand = {int(t)}
            for k in range(3):
                if lam[k] < 1e-9:
                    nb = self.neighbor[t, k]
                    if nb >= 0:
                        cand.add(int(nb))
            for k in range(3):
                if lam[k] > 1e-9 and lam[(k + 1) % 3] < 1e-9 and lam[(k + 2) % 3] < 1e-9:
                    cand.update(self.vertex_tris[self.triangles[t, k]])
            best = None
            for c in sorted(cand):
                lc = self.barycentric(c, p)
                if lc.min() >= -_kernels.LAM_TOL:
                    best = (c, lc)
                    break
            if best is not None:
                t, lam = best
        return PointLocation(element_id=int(t), barycentric=lam)

    def locate_many(self, points) -> np.ndarray:
        """Element ids for a batch of points (walk-cached); -1 outside."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        return _kernels.locate_many(self._v0, self._tinv, self.neighbor,
                                    pts, _kernels.LAM_TOL)


def generate_structured_unit_square(n: int, pattern: str = "right") -> Mesh:
    """Structured triangulation of (0,1)^2 with N divisions per side.

    ``pattern='right'`` splits each cell along one diagonal (2 N^2 elements);
    ``pattern='crisscross'`` adds cell centers (4 N^2 elements, every element
    owning an interior vertex).
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise InvalidArgumentError(f"N must be an integer, got {n!r}")
    if n < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {n}")
    if pattern not in ("right", "crisscross"):
        raise InvalidArgumentError(f"unknown pattern {pattern!r}")

    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    grid = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    if pattern == "right":
        verts = grid
        for j in range(n):
            for i in range(n):
                c00, c10 = vid(i, j), vid(i + 1, j)
                c11, c01 = vid(i + 1, j + 1), vid(i, j + 1)
                tris.append((c00, c10, c11))
                tris.append((c00, c11, c01))
    else:
        # cell centers listed row-major: cell (i, j) -> index j*n + i
        centers = np.column_stack([
            np.tile((np.arange(n) + 0.5) / n, n),
            np.repeat((np.arange(n) + 0.5) / n, n),
        ])
        verts = np.vstack([grid, centers])
        for j in range(n):
            for i in range(n):
                c00, c10 = vid(i, j), vid(i + 1, j)
                c11, c01 = vid(i + 1, j + 1), vid(i, j + 1)
                m = (n + 1) ** 2 + j * n + i
                tris.append((c00, c10, m))
                tris.append((c10, c11, m))
                tris.append((c11, c01, m))
                tris.append((c01, c00, m))
    return Mesh(verts, np.asarray(tris), h_param=1.0 / n, pattern=pattern,
                check_unit_square=True)


def mesh_quality(mesh: Mesh) -> tuple[float, float]:
    """(max element diameter, max diameter/inradius over elements)."""
    inradius = 2.0 * mesh.areas / mesh._perimeters
    return float(mesh._diameters.max()), float((mesh._diameters / inradius).max())


def load_mesh_text(source) -> Mesh:
    """Read the plain-text format: ``nv nt``, vertex lines ``x y flag``,
    then triangle lines ``v0 v1 v2`` (0-based ids)."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    else:
        text = str(source)
    tokens = text.split()
    if len(tokens) < 2:
        raise InvalidArgumentError("mesh text too short")
    nv, nt = int(tokens[0]), int(tokens[1])
    need = 2 + 3 * nv + 3 * nt
    if len(tokens) < need:
        raise InvalidArgumentError(
            f"mesh text has {len(tokens)} fields, expected {need}")
    body = tokens[2:]
    verts = np.array(body[: 3 * nv], dtype=float).reshape(nv, 3)
    flags = verts[:, 2] != 0
    tris = np.array(body[3 * nv: 3 * nv + 3 * nt], dtype=int).reshape(nt, 3)
    mesh = Mesh(verts[:, :2], tris)
    if not np.array_equal(flags, mesh.boundary_vertex):
        raise InvalidArgumentError(
            "boundary flags in file disagree with mesh topology")
    return mesh


def mesh_to_text(mesh: Mesh) -> str:
    lines = [f"{mesh.nv} {mesh.nt}"]
    for (x, y), b in zip(mesh.vertices, mesh.boundary_vertex):
        lines.append(f"{float(x)!r} {float(y)!r} {int(b)}")
    for t in mesh.triangles:
        lines.append(f"{t[0]} {t[1]} {t[2]}")
    return "\n".join(lines) + "\n"
