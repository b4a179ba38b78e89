import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtures import cell_containment, wedge_grid
from oracles import active_edges_loop
from sdcmesh.contour import (active_edges, build_faces, edge_points, midpoint_vertices,
                             qef_vertices, solve_qef, triangulate)
from sdcmesh.errors import PreconditionError
from sdcmesh.field import estimate_gradients
from sdcmesh.grid import Box, Plane, SdfGrid, Sphere, Torus, sample_analytic


def grid_of(shape, n=16, lo=-1.0, hi=1.0):
    return sample_analytic(shape, (n, n, n), (lo, lo, lo), (hi - lo) / (n - 1))


def test_active_edges_plane_single_layer():
    l, m, n = 7, 5, 6
    h = 0.2
    x0 = 0.0
    g = sample_analytic(Plane((1.0, 0.0, 0.0), x0 + 2.5 * h), (l, m, n), (x0, 0, 0), h)
    e = active_edges(g)
    assert len(e) == m * n
    assert np.all(e.axis == 0)
    assert np.all(np.diff(e.lo) > 0)


def test_active_edges_empty_for_constant_sign():
    g = SdfGrid((4, 4, 4), (0, 0, 0), 1.0, np.ones(64))
    assert len(active_edges(g)) == 0
    assert build_faces(g).n_quads == 0


def test_active_edges_sphere_matches_loop():
    g = grid_of(Sphere(), 32)
    e = active_edges(g)
    got = {(int(a), int(lo), int(hi)) for a, lo, hi in zip(e.axis, e.lo, e.hi)}
    ref = {(a, int(g.linear_index(lo)), int(g.linear_index(hi))) for a, lo, hi in active_edges_loop(g.values)}
    assert got == ref
    assert len(got) == len(e)


def test_plane_quad_count():
    n = 8
    g = sample_analytic(Plane((0.0, 1.0, 0.0), 0.05), (n, n, n), (-0.5, -0.5, -0.5), 1 / 7)
    d = build_faces(g)
    assert d.n_quads == (n - 2) * (n - 2)
    assert d.n_quads < len(active_edges(g))


def test_single_negative_node_quads():
    vals = np.ones((5, 5, 5))
    vals[2, 2, 2] = -1.0
    g = SdfGrid((5, 5, 5), (0, 0, 0), 1.0, vals)
    d = build_faces(g)
    assert d.n_quads == 6
    e = active_edges(g)
    assert len(e) == 6
    i = int(np.nonzero((d.edge_axis == 0) & (d.edge_lo == g.linear_index((2, 2, 2))))[0][0])
    cells = {tuple(c) for c in d.cells[d.quads[i]]}
    assert cells == {(2, 1, 1), (2, 2, 1), (2, 2, 2), (2, 1, 2)}


@pytest.mark.parametrize("shape", [Sphere(), Box(half_extents=(0.45, 0.35, 0.3)), Torus()])
def test_dual_invariants(shape):
    g = grid_of(shape, 20)
    d = build_faces(g)
    f = g.values.reshape(-1)
    assert all(len(set(q)) == 4 for q in d.quads.tolist())
    assert np.all((d.cells >= 0) & (d.cells <= np.array(g.dims) - 2))
    assert np.all((f[d.edge_lo] >= 0) != (f[d.edge_hi] >= 0))
    assert len(d.tri_indices()) == 2 * d.n_quads
    assert d.n_quads <= len(active_edges(g))
    # each quad's normal points from the negative endpoint to the positive one
    m = triangulate(midpoint_vertices(d))
    v = m.vertices[d.quads]
    N = np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 1])
    pos = g.node_positions().reshape(-1, 3)
    step = pos[d.edge_hi] - pos[d.edge_lo]
    s = np.where(f[d.edge_lo] < 0, 1.0, -1.0)
    assert np.all(s * np.einsum("ij,ij->i", N, step) > 0)


def test_equal_counts_without_boundary_contact():
    g = grid_of(Sphere(), 24)
    assert build_faces(g).n_quads == len(active_edges(g))


def test_sphere_quads_face_outward():
    g = grid_of(Sphere(), 24)
    m = triangulate(midpoint_vertices(build_faces(g)))
    c = m.corners().mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", m.face_cross(), c) > 0)


def test_midpoint_vertices():
    vals = np.ones((3, 3, 3))
    vals[0, 0, 0] = -1
    d = build_faces(SdfGrid((3, 3, 3), (0, 0, 0), 1.0, vals))
    assert d.n_quads == 0  # every active edge touches the boundary
    g = grid_of(Sphere(), 12)
    d = midpoint_vertices(build_faces(g))
    assert cell_containment(d).all()
    np.testing.assert_allclose(d.vertices - d.cell_origins(), g.h / 2)
    d0 = build_faces(SdfGrid((5, 5, 5), (0, 0, 0), 1.0, np.where(np.arange(125) == 62, -1.0, 1.0)))
    assert (1, 1, 1) in {tuple(c) for c in d0.cells}
    v = midpoint_vertices(d0).vertices[[tuple(c) for c in d0.cells].index((1, 1, 1))]
    np.testing.assert_array_equal(v, [1.5, 1.5, 1.5])


@given(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.2),
       st.floats(-0.2, 0.2))
def test_midpoint_mesh_near_plane(n, d):
    n = np.asarray(n) / np.linalg.norm(n)
    g = sample_analytic(Plane(tuple(n), d), (10, 10, 10), (-0.5,) * 3, 1 / 9)
    dual = build_faces(g)
    if dual.n_quads == 0:
        return
    v = midpoint_vertices(dual).vertices
    dist = np.abs(v @ n - d)
    assert dist.max() <= 0.5 * g.h * np.abs(n).sum() + 1e-12
    if np.count_nonzero(np.abs(n) > 1e-9) == 1:
        assert dist.max() <= 0.5 * g.h + 1e-12


# ---- QEF ---------------------------------------------------------------------

def test_qef_corner_exact():
    x = np.array([0.3, 0.3, 0.3])
    normals = np.eye(3)
    points = np.array([[0.3, 0.9, 0.1], [0.7, 0.3, 0.5], [0.2, 0.4, 0.3]])
    np.testing.assert_allclose(solve_qef(normals, points), x, atol=1e-9)
    # repeated constraints do not change the minimizer
    np.testing.assert_allclose(solve_qef(np.repeat(normals, 3, 0), np.repeat(points, 3, 0)), x,
                               atol=1e-9)


@given(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.integers(0, 1000))
def test_qef_single_plane_matches_dense_solve(n, seed):
    rng = np.random.default_rng(seed)
    n = np.asarray(n) / np.linalg.norm(n)
    d = 0.3
    # points on the plane n.x = d near the unit cell
    base = rng.uniform(0, 1, size=(4, 3))
    pts = base - ((base @ n) - d)[:, None] * n
    N = np.repeat(n[None], 4, 0)
    m = pts.mean(0)
    A = N.T @ N
    b = N.T @ (N * pts).sum(1)
    lam = 1e-2
    dense = np.linalg.solve(A + lam * np.eye(3), b + lam * m)
    np.testing.assert_allclose(solve_qef(N, pts), dense, atol=1e-6)
    center = np.array([0.5, 0.5, 0.5])
    proj = center - (center @ n - d) * n
    np.testing.assert_allclose(solve_qef(N, pts, anchor=center), proj, atol=1e-9)


@given(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.2),
       st.floats(-0.15, 0.15))
def test_qef_planar_grid_on_plane_and_inside(n, d):
    n = np.asarray(n) / np.linalg.norm(n)
    g = sample_analytic(Plane(tuple(n), d), (10, 10, 10), (-0.5,) * 3, 1 / 9)
    dual = build_faces(g)
    if dual.n_quads == 0:
        return
    q = qef_vertices(dual, g, estimate_gradients(g))
    assert np.abs(q.vertices @ n - d).max() < 1e-9
    assert cell_containment(q, closed=True).all()


def test_wedge_produces_out_of_cell_qef_vertex():
    g = wedge_grid()
    dual = build_faces(g)
    fld = estimate_gradients(g)
    free = qef_vertices(dual, g, fld, clamp=False)
    assert (~cell_containment(free, closed=True)).sum() >= 1
    clamped = qef_vertices(dual, g, fld, clamp=True)
    assert cell_containment(clamped, closed=True).all()


# ---- triangulation --------------------------------------------------------------

def test_triangulate_one_quad():
    g = sample_analytic(Plane((1.0, 0.0, 0.0), 1.5), (4, 3, 3), (0, 0, 0), 1.0)
    d = midpoint_vertices(build_faces(g))
    assert d.n_quads == 1
    m = triangulate(d)
    assert m.n_faces == 2
    t0, t1 = (set(t) for t in m.triangles.tolist())
    q = d.quads[0]
    assert t0 & t1 == {q[0], q[2]}
    n = m.face_normals()
    np.testing.assert_allclose(n[0], n[1], atol=1e-15)
    v = d.vertices[q]
    N = np.cross(v[2] - v[0], v[3] - v[1])
    np.testing.assert_allclose(n[0], N / np.linalg.norm(N), atol=1e-15)


def test_triangulated_area_equals_quad_area_for_planar_quads():
    g = sample_analytic(Plane((0.0, 0.0, 1.0), 0.05), (9, 9, 9), (-0.5,) * 3, 1 / 8)
    d = qef_vertices(build_faces(g), g, estimate_gradients(g))
    m = triangulate(d)
    v = d.vertices[d.quads]
    quad_area = 0.5 * np.linalg.norm(np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 1]), axis=1).sum()
    assert m.face_areas().sum() == pytest.approx(quad_area, abs=1e-9)


def test_triangulate_requires_vertices():
    g = grid_of(Sphere(), 8)
    with pytest.raises(PreconditionError):
        triangulate(build_faces(g))


def test_edge_points_on_crossings():
    g = grid_of(Sphere(), 16)
    e = active_edges(g)
    p = edge_points(g, e.lo, e.hi)
    f = g.values.reshape(-1)
    pos = g.node_positions().reshape(-1, 3)
    t = np.linalg.norm(p - pos[e.lo], axis=1) / g.h
    np.testing.assert_allclose((1 - t) * f[e.lo] + t * f[e.hi], 0, atol=1e-15)


def test_faces_deterministic():
    g = grid_of(Torus(), 18)
    a, b = build_faces(g), build_faces(g)
    assert np.array_equal(a.quads, b.quads) and np.array_equal(a.cells, b.cells)
