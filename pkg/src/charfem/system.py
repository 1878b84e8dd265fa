"""Operator assembly, constrained saddle-point solves, Stokes projection.

The per-step linear system is

    [ M/dt + A   B^T   0 ] [u]   [rhs_u]
    [ B          0     m ] [p] = [rhs_p]
    [ 0          m^T   0 ] [l]   [0    ]

with homogeneous or nodal-interpolated Dirichlet data eliminated
symmetrically from the velocity block and the zero pressure mean enforced
by the single multiplier row m (the vector of pressure basis integrals).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SolverFailureError
from .fem import Field, FESpace, PRESSURE, VELOCITY, _dbasis_dlambda, eval_basis
from .quadrature import default_rule


# -- reference tables, cached per space ---------------------------------------

def _ref_tables(space: FESpace):
    cache = space._cache
    if "ref_tables" not in cache:
        rule = default_rule()
        nq = rule.npoints
        nl = space.pair.n_vel_local
        vals = np.empty((nq, nl))
        dvals = np.empty((nq, nl, 3))
        pvals = np.empty((nq, 3))
        for q, lam in enumerate(rule.bary):
            vals[q] = eval_basis(space.pair, VELOCITY, lam)
            dvals[q] = _dbasis_dlambda(space.pair, VELOCITY, lam)
            pvals[q] = lam
        cache["ref_tables"] = (rule, vals, dvals, pvals)
    return cache["ref_tables"]


def _phys_grads(space: FESpace):
    """G[t, q, l, d] = d(phi_l)/dx_d at rule point q of element t."""
    cache = space._cache
    if "phys_grads" not in cache:
        _, _, dvals, _ = _ref_tables(space)
        cache["phys_grads"] = np.einsum("qlk,tkd->tqld", dvals,
                                        space.mesh.grad_lambda)
    return cache["phys_grads"]


def quadrature_points(space: FESpace):
    """Physical rule points (nt, nq, 2) and weights (nt, nq) carrying areas."""
    cache = space._cache
    if "quad_points" not in cache:
        rule, _, _, _ = _ref_tables(space)
        pts = np.einsum("qk,tkd->tqd", rule.bary,
                        space.mesh.vertices[space.mesh.triangles])
        aw = space.mesh.areas[:, None] * rule.weights[None, :]
        cache["quad_points"] = (pts, aw)
    return cache["quad_points"]


def _scatter(space: FESpace, local, rows_dofs, cols_dofs, shape):
    nt, nr, nc = local.shape
    rows = np.repeat(rows_dofs, nc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nr)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.eliminate_zeros()
    return mat


def _symmetrized(mat: sp.csr_matrix) -> sp.csr_matrix:
    # commutes the duplicate-sum rounding away: (M + M^T) is exactly symmetric
    out = ((mat + mat.T) * 0.5).tocsr()
    out.eliminate_zeros()
    return out


def assemble_scalar_mass(space: FESpace) -> sp.csr_matrix:
    cache = space._cache
    if "mass_scalar" not in cache:
        rule, vals, _, _ = _ref_tables(space)
        ref = np.einsum("q,qa,qb->ab", rule.weights, vals, vals)
        local = space.mesh.areas[:, None, None] * ref[None, :, :]
        cache["mass_scalar"] = _symmetrized(
            _scatter(space, local, space.vel_elem_dofs, space.vel_elem_dofs,
                     (space.n_scalar, space.n_scalar)))
    return cache["mass_scalar"]


def assemble_mass(space: FESpace) -> sp.csr_matrix:
    """Velocity mass matrix, block-diagonal over the two components."""
    ms = assemble_scalar_mass(space)
    return sp.block_diag([ms, ms], format="csr")


def assemble_pressure_mass(space: FESpace) -> sp.csr_matrix:
    cache = space._cache
    if "mass_pressure" not in cache:
        rule, _, _, pvals = _ref_tables(space)
        ref = np.einsum("q,qa,qb->ab", rule.weights, pvals, pvals)
        local = space.mesh.areas[:, None, None] * ref[None, :, :]
        cache["mass_pressure"] = _symmetrized(
            _scatter(space, local, space.mesh.triangles, space.mesh.triangles,
                     (space.n_pressure, space.n_pressure)))
    return cache["mass_pressure"]


def assemble_scalar_stiffness(space: FESpace) -> sp.csr_matrix:
    cache = space._cache
    if "stiff_scalar" not in cache:
        rule, _, _, _ = _ref_tables(space)
        g = _phys_grads(space)
        local = np.einsum("q,tqld,tqmd->tlm", rule.weights, g, g)
        local *= space.mesh.areas[:, None, None]
        cache["stiff_scalar"] = _symmetrized(
            _scatter(space, local, space.vel_elem_dofs, space.vel_elem_dofs,
                     (space.n_scalar, space.n_scalar)))
    return cache["stiff_scalar"]


def assemble_stiffness(space: FESpace, nu: float) -> sp.csr_matrix:
    """nu * (grad u, grad v) over both velocity components."""
    if nu <= 0:
        raise InvalidArgumentError(f"viscosity must be positive, got {nu}")
    a = assemble_scalar_stiffness(space)
    return sp.block_diag([nu * a, nu * a], format="csr")


def assemble_divergence(space: FESpace) -> sp.csr_matrix:
    """B[q, j] = -(d_c phi_j, psi_q) over the component-blocked velocity."""
    cache = space._cache
    if "divergence" not in cache:
        rule, _, _, pvals = _ref_tables(space)
        g = _phys_grads(space)
        local = -np.einsum("q,qa,tqld->tald", rule.weights, pvals, g)
        local *= space.mesh.areas[:, None, None, None]
        n_s = space.n_scalar
        blocks = []
        for c in (0, 1):
            blocks.append(_scatter(space, local[:, :, :, c],
                                   space.mesh.triangles, space.vel_elem_dofs,
                                   (space.n_pressure, n_s)))
        cache["divergence"] = sp.hstack(blocks, format="csr")
    return cache["divergence"]


def pressure_mean_vector(space: FESpace) -> np.ndarray:
    cache = space._cache
    if "mean_vector" not in cache:
        rule, _, _, pvals = _ref_tables(space)
        ref = rule.weights @ pvals  # (3,)
        m = np.zeros(space.n_pressure)
        np.add.at(m, space.mesh.triangles.ravel(),
                  (space.mesh.areas[:, None] * ref[None, :]).ravel())
        cache["mean_vector"] = m
    return cache["mean_vector"]


def assemble_load(f, t: float, space: FESpace) -> np.ndarray:
    """r_i = (f(., t), phi_i) with the shared fixed rule."""
    rule, vals, _, _ = _ref_tables(space)
    pts, aw = quadrature_points(space)
    nt, nq = aw.shape
    fv = np.asarray(f(pts.reshape(-1, 2), t), dtype=float).reshape(nt, nq, 2)
    contrib = np.einsum("tq,tqc,ql->tlc", aw, fv, vals)
    r = np.zeros(space.n_velocity)
    np.add.at(r, space.vel_elem_dofs.ravel(), contrib[:, :, 0].ravel())
    np.add.at(r, space.n_scalar + space.vel_elem_dofs.ravel(),
              contrib[:, :, 1].ravel())
    return r


# -- constrained saddle system -------------------------------------------------

@dataclass
class SolveInfo:
    residual: float
    rhs_norm: float
    multiplier: float


class SaddleSystem:
    """Factorized, constraint-applied saddle operator for repeated solves.

    ``dt=None`` builds the Stokes operator (A alone); otherwise the velocity
    block is M/dt + A. ``dirichlet_values`` is a full-length velocity vector
    whose entries on the Dirichlet mask are the boundary data.
    """

    def __init__(self, space: FESpace, nu: float, dt: float | None = None,
                 dirichlet_values: np.ndarray | None = None):
        if dt is not None and dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {dt}")
        self.space = space
        self.nu = float(nu)
        self.dt = dt
        k = assemble_stiffness(space, nu)
        if dt is not None:
            k = (k + assemble_mass(space) / dt).tocsr()
        self.velocity_block = k
        self.divergence = assemble_divergence(space)
        self.mean_row = pressure_mean_vector(space)

        nvel = space.n_velocity
        n_p = space.n_pressure
        mask = space.dirichlet_mask
        if dirichlet_values is None:
            g = np.zeros(nvel)
        else:
            g = np.where(mask, np.asarray(dirichlet_values, dtype=float), 0.0)
        self.dirichlet_values = g
        self.lift_u = k @ g
        self.lift_p = self.divergence @ g

        free = sp.diags((~mask).astype(float))
        pin = sp.diags(mask.astype(float))
        kc = (free @ k @ free + pin).tocsr()
        kc.eliminate_zeros()
        bc = (self.divergence @ free).tocsr()
        bc.eliminate_zeros()
        m_col = sp.csr_matrix(self.mean_row.reshape(-1, 1))
        full = sp.bmat([[kc, bc.T, None],
                        [bc, None, m_col],
                        [None, m_col.T, None]], format="csc")
        self.matrix = full
        self.n_total = nvel + n_p + 1
        try:
            self._lu = spla.splu(full)
        except RuntimeError as exc:  # pragma: no cover - singular inputs
            raise SolverFailureError(f"factorization failed: {exc}") from exc

    def solve(self, rhs_u: np.ndarray, rhs_p: np.ndarray | None = None
              ) -> tuple[Field, Field, SolveInfo]:
        space = self.space
        mask = space.dirichlet_mask
        g = self.dirichlet_values
        ru = np.where(mask, g, np.asarray(rhs_u, dtype=float) - self.lift_u)
        rp = -self.lift_p.copy()
        if rhs_p is not None:
            rp += rhs_p
        rhs = np.concatenate([ru, rp, [0.0]])
        x = self._lu.solve(rhs)
        resid = float(np.linalg.norm(self.matrix @ x - rhs))
        rhs_norm = float(np.linalg.norm(rhs))
        if resid > 1e-10 * max(rhs_norm, 1e-300):
            raise SolverFailureError(
                f"solver residual {resid:.3e} exceeds 1e-10 * |rhs| = "
                f"{1e-10 * rhs_norm:.3e}",
                diagnostic={"residual": resid, "rhs_norm": rhs_norm})
        nvel = space.n_velocity
        u = x[:nvel]
        u[mask] = g[mask]
        p = x[nvel:nvel + space.n_pressure]
        lam = float(x[-1])
        mean = float(self.mean_row @ p)
        if abs(mean) > 1e-10 * max(float(np.linalg.norm(p)), 1.0):
            raise SolverFailureError(f"pressure mean {mean:.3e} not zero")
        info = SolveInfo(residual=resid, rhs_norm=rhs_norm, multiplier=lam)
        return (Field(space, VELOCITY, u), Field(space, PRESSURE, p), info)


def solve_saddle(system: SaddleSystem, rhs_u, rhs_p=None):
    """Module-level alias of :meth:`SaddleSystem.solve`."""
    return system.solve(rhs_u, rhs_p)


def divergence_residual(system: SaddleSystem, u: Field) -> float:
    """max_q |(B u)_q|, the discrete-divergence defect of a velocity."""
    return float(np.abs(system.divergence @ u.coefs).max())


# -- Stokes projection ----------------------------------------------------------

def _rhs_from_analytic(space: FESpace, nu, grad_w=None, r=None):
    """Quadrature of a(w, phi_i) + b(phi_i, r) and b(w, psi_q)."""
    rule, _, _, pvals = _ref_tables(space)
    g = _phys_grads(space)
    pts, aw = quadrature_points(space)
    nt, nq = aw.shape
    rhs_u = np.zeros(space.n_velocity)
    rhs_p = np.zeros(space.n_pressure)
    n_s = space.n_scalar
    if grad_w is not None:
        gw = np.asarray(grad_w(pts.reshape(-1, 2)), dtype=float).reshape(nt, nq, 2, 2)
        contrib = nu * np.einsum("tq,tqcd,tqld->tlc", aw, gw, g)
        np.add.at(rhs_u, space.vel_elem_dofs.ravel(), contrib[:, :, 0].ravel())
        np.add.at(rhs_u, n_s + space.vel_elem_dofs.ravel(), contrib[:, :, 1].ravel())
        div_w = gw[:, :, 0, 0] + gw[:, :, 1, 1]
        pc = -np.einsum("tq,tq,qa->ta", aw, div_w, pvals)
        np.add.at(rhs_p, space.mesh.triangles.ravel(), pc.ravel())
    if r is not None:
        rv = np.asarray(r(pts.reshape(-1, 2)), dtype=float).reshape(nt, nq)
        contrib = -np.einsum("tq,tq,tqlc->tlc", aw, rv, g)
        np.add.at(rhs_u, space.vel_elem_dofs.ravel(), contrib[:, :, 0].ravel())
        np.add.at(rhs_u, n_s + space.vel_elem_dofs.ravel(), contrib[:, :, 1].ravel())
    return rhs_u, rhs_p


def stokes_projection(w, r, nu: float, space: FESpace
                      ) -> tuple[Field, Field, SolveInfo]:
    """Discrete pair matching (w, r) in the Stokes bilinear forms.

    ``w`` is a velocity Field or a pair (value_fn, grad_fn) of callables on
    point arrays; ``r`` is a pressure Field, a callable, or None for zero.
    """
    system = SaddleSystem(space, nu, dt=None)
    rhs_u = np.zeros(space.n_velocity)
    rhs_p = np.zeros(space.n_pressure)
    if isinstance(w, Field):
        if w.role != VELOCITY:
            raise InvalidArgumentError("w must be a velocity field")
        rhs_u += system.velocity_block @ w.coefs
        rhs_p += system.divergence @ w.coefs
    elif w is not None:
        value_fn, grad_fn = w
        del value_fn  # only derivatives enter the Stokes forms
        ru, rp = _rhs_from_analytic(space, nu, grad_w=grad_fn)
        rhs_u += ru
        rhs_p += rp
    if isinstance(r, Field):
        if r.role != PRESSURE:
            raise InvalidArgumentError("r must be a pressure field")
        rhs_u += system.divergence.T @ r.coefs
    elif r is not None:
        ru, _ = _rhs_from_analytic(space, nu, r=r)
        rhs_u += ru
    return system.solve(rhs_u, rhs_p)


# -- discrete inf-sup constant ----------------------------------------------------

def inf_sup_constant(space: FESpace) -> float:
    """Smallest nonzero generalized singular value of B against the H1 Gram.

    Dense eigensolve of B K^-1 B^T q = s^2 M_p q on the free velocity DOFs;
    the constant-pressure null mode is skipped.
    """
    import scipy.linalg as la

    free = ~space.dirichlet_mask
    k = (assemble_scalar_stiffness(space) + assemble_scalar_mass(space)).tocsr()
    k2 = sp.block_diag([k, k], format="csr")
    kff = k2[free][:, free].tocsc()
    b = assemble_divergence(space)[:, free].tocsr()
    lu = spla.splu(kff)
    bt = np.asarray(b.todense()).T
    s = b @ lu.solve(bt)
    mp = np.asarray(assemble_pressure_mass(space).todense())
    eigs = la.eigh(s, mp, eigvals_only=True)
    eigs = np.sort(eigs)
    if eigs[1] <= 0:
        return 0.0
    return float(np.sqrt(eigs[1]))
