"""Mixed element pairs, DOF layout, and the interpolation operators.

Velocity DOFs are laid out component-blocked: all x-coefficients first, then
all y-coefficients, each block entity-ordered (vertices, then edge midpoints
for the quadratic pair / element bubbles for the MINI pair). Pressure DOFs
are the mesh vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, SingularGeometryError
from .mesh import Mesh

VELOCITY = "velocity"
PRESSURE = "pressure"


@dataclass(frozen=True)
class ElementPair:
    """An inf-sup stable velocity/pressure pair on triangles."""

    kind: str  # "TaylorHood_P2P1" | "MINI_P1bP1"

    @property
    def kind_code(self) -> int:
        return _kernels.KIND_P2 if self.kind == "TaylorHood_P2P1" else _kernels.KIND_MINI

    @property
    def n_vel_local(self) -> int:
        return 6 if self.kind_code == _kernels.KIND_P2 else 4

    @property
    def n_pressure_local(self) -> int:
        return 3

    @property
    def velocity_degree(self) -> int:
        """Polynomial degree of the richest velocity shape function."""
        return 2 if self.kind_code == _kernels.KIND_P2 else 3


TAYLOR_HOOD = ElementPair("TaylorHood_P2P1")
MINI = ElementPair("MINI_P1bP1")

_PAIRS = {"TaylorHood_P2P1": TAYLOR_HOOD, "MINI_P1bP1": MINI,
          "th": TAYLOR_HOOD, "p2p1": TAYLOR_HOOD, "mini": MINI, "p1bp1": MINI}


def element_pair(name) -> ElementPair:
    if isinstance(name, ElementPair):
        return name
    key = str(name)
    pair = _PAIRS.get(key) or _PAIRS.get(key.lower())
    if pair is None:
        raise InvalidArgumentError(f"unknown element pair {name!r}")
    return pair


class FESpace:
    """DOF management for one mixed pair over one mesh."""

    def __init__(self, mesh: Mesh, pair: ElementPair | str):
        self.mesh = mesh
        self.pair = element_pair(pair)
        nv, ne, nt = mesh.nv, mesh.ne, mesh.nt

        if self.pair.kind_code == _kernels.KIND_P2:
            self.n_scalar = nv + ne
            extra = mesh.tri_edges + nv
            node_coords = np.vstack([mesh.vertices, mesh.edge_midpoints()])
            scalar_boundary = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
        else:
            self.n_scalar = nv + nt
            extra = np.arange(nt, dtype=np.int64)[:, None] + nv
            node_coords = np.vstack([mesh.vertices, mesh.centroids])
            scalar_boundary = np.concatenate([mesh.boundary_vertex, np.zeros(nt, bool)])

        self.vel_elem_dofs = np.ascontiguousarray(
            np.hstack([mesh.triangles, extra]), dtype=np.int64)
        self.vel_node_coords = node_coords
        self.scalar_dirichlet = scalar_boundary
        self.n_velocity = 2 * self.n_scalar
        self.n_pressure = nv
        self.dirichlet_mask = np.tile(scalar_boundary, 2)
        for arr in (self.vel_elem_dofs, self.vel_node_coords,
                    self.scalar_dirichlet, self.dirichlet_mask):
            arr.setflags(write=False)
        self._cache: dict = {}

    def dof_count(self, role: str) -> int:
        return self.n_velocity if role == VELOCITY else self.n_pressure

    def zero_field(self, role: str, time: float | None = None) -> "Field":
        return Field(self, role, np.zeros(self.dof_count(role)), time)


@dataclass
class Field:
    """Coefficient vector of one unknown, tied to its space."""

    space: FESpace
    role: str
    coefs: np.ndarray
    time: float | None = None

    def __post_init__(self):
        self.coefs = np.asarray(self.coefs, dtype=float)
        if self.role not in (VELOCITY, PRESSURE):
            raise InvalidArgumentError(f"unknown field role {self.role!r}")
        if self.coefs.shape != (self.space.dof_count(self.role),):
            raise InvalidArgumentError(
                f"coefficient vector has length {self.coefs.shape}, "
                f"expected ({self.space.dof_count(self.role)},)")

    def copy(self) -> "Field":
        return Field(self.space, self.role, self.coefs.copy(), self.time)

    def components(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.space.n_scalar
        return self.coefs[:n], self.coefs[n:]


@dataclass
class P1VectorField:
    """A continuous piecewise-linear velocity given by its vertex values."""

    mesh: Mesh
    vertex_values: np.ndarray  # (nv, 2)

    def __post_init__(self):
        self.vertex_values = np.ascontiguousarray(self.vertex_values, dtype=float)
        if self.vertex_values.shape != (self.mesh.nv, 2):
            raise InvalidArgumentError("vertex_values must have shape (nv, 2)")

    def at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        els = self.mesh.locate_many(pts)
        if (els < 0).any():
            raise InvalidArgumentError(
                f"point {pts[els < 0][0]} outside the mesh")
        out = np.empty((len(pts), 2))
        for i, (t, p) in enumerate(zip(els, pts)):
            lam = self.mesh.barycentric(int(t), p)
            out[i] = lam @ self.vertex_values[self.mesh.triangles[t]]
        return out


def _check_bary(bary) -> np.ndarray:
    lam = np.asarray(bary, dtype=float)
    if lam.shape != (3,):
        raise InvalidArgumentError("barycentric point must have 3 components")
    if abs(lam.sum() - 1.0) > 1e-12 or lam.min() < -1e-12:
        raise InvalidArgumentError(f"invalid barycentric point {lam}")
    return lam


def eval_basis(pair: ElementPair, space_role: str, ref_point) -> np.ndarray:
    """Values of the local shape functions at a barycentric point."""
    lam = _check_bary(ref_point)
    pair = element_pair(pair)
    if space_role == PRESSURE:
        return lam.copy()
    out = np.empty(8)
    n = _kernels.vel_basis(pair.kind_code, lam[0], lam[1], lam[2], out)
    return out[:n].copy()


def _dbasis_dlambda(pair: ElementPair, space_role: str, lam) -> np.ndarray:
    """Partials of the shape functions w.r.t. the barycentric coordinates."""
    if space_role == PRESSURE:
        return np.eye(3)
    l1, l2, l3 = lam
    if pair.kind_code == _kernels.KIND_P2:
        d = np.zeros((6, 3))
        d[0, 0] = 4 * l1 - 1
        d[1, 1] = 4 * l2 - 1
        d[2, 2] = 4 * l3 - 1
        d[3, 1] = 4 * l3
        d[3, 2] = 4 * l2
        d[4, 2] = 4 * l1
        d[4, 0] = 4 * l3
        d[5, 0] = 4 * l2
        d[5, 1] = 4 * l1
        return d
    d = np.zeros((4, 3))
    d[0, 0] = d[1, 1] = d[2, 2] = 1.0
    d[3] = 27.0 * np.array([l2 * l3, l1 * l3, l1 * l2])
    return d


def eval_basis_grad(pair: ElementPair, space_role: str, ref_point,
                    element_vertices) -> np.ndarray:
    """Physical gradients of the local shape functions on one element."""
    lam = _check_bary(ref_point)
    pair = element_pair(pair)
    pts = np.asarray(element_vertices, dtype=float)
    e1 = pts[1] - pts[0]
    e2 = pts[2] - pts[0]
    det = e1[0] * e2[1] - e2[0] * e1[1]
    if abs(det) < 1e-14:
        raise SingularGeometryError("degenerate element geometry")
    grad_lam = np.empty((3, 2))
    grad_lam[1] = np.array([e2[1], -e2[0]]) / det
    grad_lam[2] = np.array([-e1[1], e1[0]]) / det
    grad_lam[0] = -grad_lam[1] - grad_lam[2]
    return _dbasis_dlambda(pair, space_role, lam) @ grad_lam


def p1_linearize(u_h: Field) -> P1VectorField:
    """Vertex-interpolated piecewise-linear version of a velocity field."""
    if u_h.role != VELOCITY:
        raise InvalidArgumentError("p1_linearize expects a velocity field")
    nv = u_h.space.mesh.nv
    ux, uy = u_h.components()
    return P1VectorField(u_h.space.mesh, np.column_stack([ux[:nv], uy[:nv]]))


def lagrange_interpolate(space: FESpace, f, space_role: str,
                         remove_mean: bool = False,
                         time: float | None = None) -> Field:
    """Nodal interpolant of a smooth function.

    ``f`` maps an (m, 2) array of points to values: shape (m, 2) for the
    velocity role, (m,) for the pressure role. Bubble coefficients of the
    MINI pair are zero (the interpolant is the piecewise-linear one).
    ``remove_mean`` subtracts the discrete mean, for comparisons in the
    zero-mean pressure space.
    """
    if space_role == VELOCITY:
        if space.pair.kind_code == _kernels.KIND_P2:
            vals = np.asarray(f(space.vel_node_coords), dtype=float)
            if vals.shape != (space.n_scalar, 2):
                raise InvalidArgumentError("velocity function must return (m, 2) values")
            coefs = np.concatenate([vals[:, 0], vals[:, 1]])
        else:
            nv = space.mesh.nv
            vals = np.asarray(f(space.mesh.vertices), dtype=float)
            if vals.shape != (nv, 2):
                raise InvalidArgumentError("velocity function must return (m, 2) values")
            cx = np.zeros(space.n_scalar)
            cy = np.zeros(space.n_scalar)
            cx[:nv] = vals[:, 0]
            cy[:nv] = vals[:, 1]
            coefs = np.concatenate([cx, cy])
        return Field(space, VELOCITY, coefs, time)

    vals = np.asarray(f(space.mesh.vertices), dtype=float)
    if vals.shape != (space.n_pressure,):
        raise InvalidArgumentError("pressure function must return (m,) values")
    coefs = vals.copy()
    if remove_mean:
        from .system import pressure_mean_vector  # local import, no cycle at call time

        m = pressure_mean_vector(space)
        coefs = coefs - (m @ coefs) / m.sum()
    return Field(space, PRESSURE, coefs, time)


def sup_grad_p1(w: P1VectorField) -> float:
    """Max over elements of the Frobenius norm of the (constant) gradient."""
    mesh = w.mesh
    vals = w.vertex_values[mesh.triangles]        # (nt, 3, 2)
    grads = np.einsum("tkc,tkd->tcd", vals, mesh.grad_lambda)
    return float(np.sqrt((grads ** 2).sum(axis=(1, 2))).max()) if mesh.nt else 0.0


def evaluate_field(field: Field, points) -> np.ndarray:
    """Pointwise values of an FE function (velocity (m, 2), pressure (m,))."""
    space = field.space
    mesh = space.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    els = mesh.locate_many(pts)
    if (els < 0).any():
        bad = pts[els < 0][0]
        raise InvalidArgumentError(f"point {bad} outside the mesh")
    if field.role == PRESSURE:
        out = np.empty(len(pts))
        for i, (t, p) in enumerate(zip(els, pts)):
            lam = mesh.barycentric(int(t), p)
            out[i] = lam @ field.coefs[mesh.triangles[t]]
        return out
    out = np.empty((len(pts), 2))
    ns = space.n_scalar
    buf = np.empty(8)
    for i, (t, p) in enumerate(zip(els, pts)):
        lam = mesh.barycentric(int(t), p)
        n = _kernels.vel_basis(space.pair.kind_code, lam[0], lam[1], lam[2], buf)
        dofs = space.vel_elem_dofs[t, :n]
        out[i, 0] = buf[:n] @ field.coefs[dofs]
        out[i, 1] = buf[:n] @ field.coefs[ns + dofs]
    return out
