import numpy as np
import pytest

from charfem.errors import (
    InvalidArgumentError,
    OutOfDomainError,
    SingularMapError,
)
from charfem.fem import P1VectorField, p1_linearize
from charfem.geometry import (
    AffineMap,
    clip,
    find_overlaps,
    foot_map_on_element,
    integrate_poly_product,
)
from charfem.transport import sup_grad_p1

from conftest import random_admissible_velocity
from oracles import triangle_monomial_moment

IDENT = AffineMap(np.eye(2), np.zeros(2), 0)
UNIT_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _zero_p1(mesh):
    return P1VectorField(mesh, np.zeros((mesh.nv, 2)))


# -- foot maps --------------------------------------------------------------------

def test_foot_map_zero_velocity_is_identity(mesh_n4):
    f = foot_map_on_element(_zero_p1(mesh_n4), 0.1, 3)
    assert np.allclose(f.matrix, np.eye(2), atol=1e-15)
    assert np.allclose(f.offset, 0.0, atol=1e-15)
    assert f.det == pytest.approx(1.0)


def test_foot_map_constant_velocity_translates(mesh_n4):
    c = np.array([0.3, -0.2])
    w = P1VectorField(mesh_n4, np.tile(c, (mesh_n4.nv, 1)))
    dt = 0.05
    f = foot_map_on_element(w, dt, 7)
    assert np.allclose(f.matrix, np.eye(2), atol=1e-14)
    assert np.allclose(f.offset, -c * dt, atol=1e-15)


def test_foot_map_matches_pointwise_formula(mesh_n4, rng):
    w = P1VectorField(mesh_n4, rng.standard_normal((mesh_n4.nv, 2)))
    dt = 0.01
    for k0 in (0, 5, 17):
        f = foot_map_on_element(w, dt, k0)
        tri = mesh_n4.vertices[mesh_n4.triangles[k0]]
        lam = rng.dirichlet([1, 1, 1], size=10)
        pts = lam @ tri
        expect = pts - dt * w.at(pts)
        assert np.abs(f.apply(pts) - expect).max() < 1e-14


def test_foot_map_requires_positive_dt(mesh_n4):
    with pytest.raises(InvalidArgumentError):
        foot_map_on_element(_zero_p1(mesh_n4), -0.1, 0)


# -- clipping ---------------------------------------------------------------------

def test_clip_identity_self(mesh_n4):
    tri = mesh_n4.vertices[mesh_n4.triangles[4]]
    poly = clip(tri, IDENT, tri)
    assert poly is not None
    assert poly.area == pytest.approx(mesh_n4.areas[4], abs=1e-14)


def test_clip_disjoint_is_none():
    far = UNIT_TRI + 5.0
    assert clip(UNIT_TRI, IDENT, far) is None


def test_clip_translated_area_vs_monte_carlo(rng):
    shift = np.array([0.25, 0.0])
    target = UNIT_TRI + shift
    poly = clip(UNIT_TRI, IDENT, target)
    n = 10 ** 6
    pts = rng.random((n, 2))
    pts = pts[pts.sum(axis=1) <= 1.0]  # uniform in the unit right triangle
    q = pts - shift
    inside = (q[:, 0] >= 0) & (q[:, 1] >= 0) & (q.sum(axis=1) <= 1.0)
    p_hat = inside.mean()
    mc_area = 0.5 * p_hat
    sigma = 0.5 * np.sqrt(p_hat * (1 - p_hat) / len(pts))
    assert abs(poly.area - mc_area) <= 3 * sigma


def test_clip_singular_map_rejected():
    bad = AffineMap(np.zeros((2, 2)), np.zeros(2), 0)
    with pytest.raises(SingularMapError):
        clip(UNIT_TRI, bad, UNIT_TRI)


def test_clip_vertices_stay_in_source(mesh_n4, rng):
    from charfem.fem import FESpace

    u = random_admissible_velocity(FESpace(mesh_n4, "TaylorHood_P2P1"),
                                   0.02, rng)
    w = p1_linearize(u)
    f = foot_map_on_element(w, 0.02, 9)
    tri = mesh_n4.vertices[mesh_n4.triangles[9]]
    for k1 in range(mesh_n4.nt):
        poly = clip(tri, f, mesh_n4.vertices[mesh_n4.triangles[k1]],
                    target_element=k1)
        if poly is None:
            continue
        lam = np.stack([mesh_n4.barycentric(9, v) for v in poly.vertices])
        assert lam.min() > -1e-10
        img = f.apply(poly.vertices)
        lam1 = np.stack([mesh_n4.barycentric(k1, v) for v in img])
        assert lam1.min() > -1e-10


def test_clip_vertex_count_bounded(space_th_n8, rng):
    mesh = space_th_n8.mesh
    dt = 0.01
    for _ in range(5):
        u = random_admissible_velocity(space_th_n8, dt, rng, target=0.25)
        w = p1_linearize(u)
        for k0 in range(0, mesh.nt, 11):
            f = foot_map_on_element(w, dt, k0)
            for poly in find_overlaps(mesh, k0, f):
                assert len(poly.vertices) <= 7


# -- exact integration ---------------------------------------------------------------

def test_integrate_constant_over_element(mesh_n4):
    tri = mesh_n4.vertices[mesh_n4.triangles[2]]
    poly = clip(tri, IDENT, tri, target_element=2)
    one = lambda p: np.ones(len(p))
    val = integrate_poly_product(poly, IDENT, one, one, 0, 0)
    assert val == pytest.approx(mesh_n4.areas[2], abs=1e-15)


def test_integrate_first_moment_unit_triangle():
    poly = clip(UNIT_TRI, IDENT, UNIT_TRI)
    val = integrate_poly_product(poly, IDENT, lambda p: p[:, 0],
                                 lambda p: np.ones(len(p)), 1, 0)
    assert val == pytest.approx(1.0 / 6.0, abs=1e-15)


def test_integrate_degree_guard():
    poly = clip(UNIT_TRI, IDENT, UNIT_TRI)
    one = lambda p: np.ones(len(p))
    with pytest.raises(RuntimeError):
        integrate_poly_product(poly, IDENT, one, one, 5, 4)


def test_integrate_random_product_vs_subdivision(rng):
    # rotate the unit triangle about its centroid so the clip is a hexagon
    theta = 0.25
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    centroid = UNIT_TRI.mean(axis=0)
    f = AffineMap(rot, centroid - rot @ centroid, 0)
    poly = clip(UNIT_TRI, f, UNIT_TRI)
    assert len(poly.vertices) >= 5

    ct = rng.standard_normal(6)
    cs = rng.standard_normal(6)

    def poly2(c):
        return lambda p: (c[0] + c[1] * p[:, 0] + c[2] * p[:, 1]
                          + c[3] * p[:, 0] ** 2 + c[4] * p[:, 0] * p[:, 1]
                          + c[5] * p[:, 1] ** 2)

    val = integrate_poly_product(poly, f, poly2(ct), poly2(cs), 2, 2)

    # subdivision oracle: split the fan triangles three times and apply the
    # independent seven-point rule, exact for the degree-4 integrand
    from charfem.quadrature import seven_point_degree5

    rule = seven_point_degree5()
    gt, gs = poly2(ct), poly2(cs)
    tris = []
    c = poly.vertices.mean(axis=0)
    v = poly.vertices
    for i in range(len(v)):
        tris.append(np.array([c, v[i], v[(i + 1) % len(v)]]))
    for _ in range(3):
        nxt = []
        for t in tris:
            m01, m12, m20 = (t[0] + t[1]) / 2, (t[1] + t[2]) / 2, (t[2] + t[0]) / 2
            nxt += [np.array([t[0], m01, m20]), np.array([t[1], m12, m01]),
                    np.array([t[2], m20, m12]), np.array([m01, m12, m20])]
        tris = nxt
    oracle = 0.0
    for t in tris:
        area = 0.5 * abs((t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1]) - (t[2, 0] - t[0, 0]) * (t[1, 1] - t[0, 1]))
        pts = rule.bary @ t
        oracle += area * float(np.sum(rule.weights * gt(f.apply(pts)) * gs(pts)))
    assert val == pytest.approx(oracle, rel=1e-10)


def test_monomial_moments_exact(rng):
    for _ in range(5):
        tri = rng.random((3, 2))
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        if 0.5 * abs(e1[0] * e2[1] - e2[0] * e1[1]) < 0.05:
            continue
        poly = clip(tri, IDENT, tri)
        for (a, b) in [(0, 0), (1, 0), (2, 1), (3, 2), (4, 4)]:
            val = integrate_poly_product(
                poly, IDENT, lambda p: p[:, 0] ** a * p[:, 1] ** b,
                lambda p: np.ones(len(p)), a + b, 0)
            assert val == pytest.approx(triangle_monomial_moment(tri, a, b),
                                        rel=1e-13, abs=1e-15)


# -- find_overlaps ---------------------------------------------------------------

def test_overlaps_identity(mesh_n4):
    f = foot_map_on_element(_zero_p1(mesh_n4), 0.1, 6)
    polys = find_overlaps(mesh_n4, 6, f)
    assert len(polys) == 1
    assert polys[0].target_element == 6
    assert polys[0].area == pytest.approx(mesh_n4.areas[6], abs=1e-14)


def test_overlaps_small_translation(mesh_n4):
    c = np.array([0.04, 0.03])
    w = P1VectorField(mesh_n4, np.tile(c, (mesh_n4.nv, 1)))
    for k0 in (10, 11, 20, 21):  # interior cells: their images stay inside
        f = foot_map_on_element(w, 1.0, k0)
        polys = find_overlaps(mesh_n4, k0, f)
        assert len(polys) > 1
        total = sum(p.area for p in polys)
        assert total == pytest.approx(mesh_n4.areas[k0], abs=1e-12)


def test_overlaps_global_partition(space_th_n8, rng):
    mesh = space_th_n8.mesh
    u = random_admissible_velocity(space_th_n8, 0.01, rng, target=0.2)
    w = p1_linearize(u)
    total = 0.0
    for k0 in range(mesh.nt):
        f = foot_map_on_element(w, 0.01, k0)
        total += sum(p.area for p in find_overlaps(mesh, k0, f))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_overlaps_out_of_domain(mesh_n4):
    c = np.array([1.0, 0.0])
    w = P1VectorField(mesh_n4, np.tile(c, (mesh_n4.nv, 1)))
    f = foot_map_on_element(w, 1.0, 0)  # shifts far outside
    with pytest.raises(OutOfDomainError):
        find_overlaps(mesh_n4, 0, f)


# -- Jacobian bounds --------------------------------------------------------------

def test_jacobian_bounds_at_quarter(space_th_n8, rng):
    mesh = space_th_n8.mesh
    dt = 0.01
    for _ in range(100):
        u = random_admissible_velocity(space_th_n8, dt, rng, target=0.25)
        w = p1_linearize(u)
        assert dt * sup_grad_p1(w) == pytest.approx(0.25, rel=1e-12)
        dets = []
        for k0 in range(0, mesh.nt, 7):
            dets.append(foot_map_on_element(w, dt, k0).det)
        dets = np.array(dets)
        assert (dets >= 0.5 - 1e-12).all() and (dets <= 1.5 + 1e-12).all()
