from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtures import cell_containment, random_shape_grid, sdc_fd_errors
from oracles import mesh_distance
from sdcmesh.contour import build_faces, midpoint_vertices, qef_vertices, triangulate
from sdcmesh.errors import EmptyMeshError, ParameterError
from sdcmesh.field import estimate_gradients
from sdcmesh.geom import TriMesh, sample_surface
from sdcmesh.grid import Plane, SdfGrid, Sphere, Torus, sample_analytic
from sdcmesh.sdc import (THETA_LIMIT, SdcConfig, SdcProblem, distance_nodes, loss_distance,
                         loss_normal, mesh_sdc, optimize_vertices, params_to_vertices,
                         vertices_to_params)


def plane_x_grid(n=12, h=0.1, x0=0.55):
    return sample_analytic(Plane((1.0, 0.0, 0.0), x0), (n, n, n), (0.0, 0.0, 0.0), h)


def exact_plane_dual(g):
    return qef_vertices(build_faces(g), g, estimate_gradients(g))


# ---- parameterization ------------------------------------------------------------

def test_theta_zero_is_cell_center():
    o = np.array([[0.0, 1.0, -2.0]])
    v, _ = params_to_vertices(np.zeros((1, 3)), o, 0.25)
    np.testing.assert_array_equal(v, o + 0.125)


@given(st.lists(st.floats(-THETA_LIMIT, THETA_LIMIT), min_size=3, max_size=3),
       st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(1e-3, 10))
def test_sigmoid_containment(theta, origin, h):
    o = np.array([origin])
    v, dv = params_to_vertices(np.array([theta]), o, h)
    assert np.all(v > o) and np.all(v < o + h)
    assert np.all(dv > 0)


# ---- distance loss ---------------------------------------------------------------

def test_distance_loss_zero_on_plane():
    g = plane_x_grid()
    d = exact_plane_dual(g)
    nodes = distance_nodes(g)
    loss, grad, empty = loss_distance(g, nodes, triangulate(d))
    assert not empty and len(nodes) > 0
    assert loss < 1e-28
    assert np.abs(grad).max() < 1e-13


def test_distance_loss_translated_plane():
    g = plane_x_grid()
    d = exact_plane_dual(g)
    nodes = distance_nodes(g)
    delta = 0.01
    m = triangulate(d)
    moved = TriMesh(m.vertices + [delta, 0, 0], m.triangles)
    loss, _, _ = loss_distance(g, nodes, moved)
    assert loss == pytest.approx(len(nodes) * delta ** 2, rel=1e-9)
    # closest points are interior: d = |f| -+ delta for every node, by brute force
    pos = nodes.positions(g)
    f = nodes.values(g)
    for p, fv in zip(pos[::7], f[::7]):
        dist = mesh_distance(moved.vertices, moved.triangles, p)
        assert dist == pytest.approx(abs(fv) - np.sign(fv) * delta, abs=1e-12)


def test_distance_loss_empty_nodes_flagged():
    g = plane_x_grid()
    m = triangulate(exact_plane_dual(g))
    empty_nodes = distance_nodes(g, band=100)
    loss, grad, flag = loss_distance(g, empty_nodes, m)
    assert flag and loss == 0 and not grad.any()


def test_distance_nodes_band():
    g = sample_analytic(Sphere(radius=0.95), (16,) * 3, (-1.0,) * 3, 2 / 15)
    nodes = distance_nodes(g, band=2)
    idx = nodes.indices
    assert len(nodes) > 0
    assert idx.min() >= 2 and idx.max() <= 13
    assert np.all(np.abs(nodes.values(g)) < 2.0 * g.h)


# ---- normal loss ----------------------------------------------------------------

def test_normal_loss_zero_on_axis_plane():
    g = plane_x_grid()
    d = exact_plane_dual(g)
    loss, grad, flag = loss_normal(g, estimate_gradients(g), d)
    assert not flag
    assert loss < 1e-28 and np.abs(grad).max() < 1e-12


def test_flipped_quad_contributes_two():
    g = plane_x_grid()
    d = exact_plane_dual(g)
    fld = estimate_gradients(g)
    flipped = d.quads.copy()
    flipped[0] = flipped[0][::-1]
    loss, _, _ = loss_normal(g, fld, replace(d, quads=flipped))
    assert loss == pytest.approx(2.0, abs=1e-12)


def test_normal_loss_degenerate_flag():
    g = plane_x_grid()
    d = build_faces(g)
    d = d.with_vertices(np.zeros((len(d.cells), 3)))
    loss, grad, flag = loss_normal(g, estimate_gradients(g), d)
    assert flag and loss == 0 and not grad.any()


# ---- gradients ----------------------------------------------------------------------

@pytest.mark.parametrize("kind, seed", [("sphere", 11), ("box", 12), ("torus", 13)])
def test_loss_gradients_match_finite_differences(kind, seed):
    g, rng = random_shape_grid(kind, seed)
    prob = SdcProblem(g)
    theta = rng.normal(0, 0.1, (len(prob.dual.cells), 3))
    err_d, err_n = sdc_fd_errors(g, theta, rng)
    assert err_d < 1e-4
    assert err_n < 1e-4


def test_theta_gradient_chain_rule():
    g, rng = random_shape_grid("torus", 5)
    prob = SdcProblem(g)
    theta = rng.normal(0, 0.1, (len(prob.dual.cells), 3))
    rep = prob.evaluate(theta)
    eps = 1e-7
    got, fds = [], []
    for c in rng.choice(len(theta), 10, replace=False):
        ax = int(rng.integers(3))
        tp, tm = theta.copy(), theta.copy()
        tp[c, ax] += eps
        tm[c, ax] -= eps
        got.append(rep.grad[c, ax])
        fds.append((prob.evaluate(tp).l_mesh - prob.evaluate(tm).l_mesh) / (2 * eps))
    assert np.abs(np.subtract(got, fds)).max() <= 1e-4 * np.abs(fds).max()


def test_accelerated_distance_equals_plain_query():
    g, rng = random_shape_grid("box", 3)
    prob = SdcProblem(g)
    theta = rng.uniform(-THETA_LIMIT, THETA_LIMIT, (len(prob.dual.cells), 3))
    rep = prob.evaluate(theta)
    mesh = TriMesh(prob.vertices(theta), prob.tris)
    ref, ref_grad, _ = loss_distance(g, prob.nodes, mesh)
    assert rep.l_d == pytest.approx(ref, rel=1e-12)


# ---- optimization ---------------------------------------------------------------

@pytest.mark.parametrize("normal, offset", [
    ((1.0, 0.0, 0.0), 0.03),
    ((1.0, 2.0, 2.0), -0.05),
    ((0.3, -0.5, 0.8), 0.1),
])
def test_plane_recovery(normal, offset):
    n = np.asarray(normal) / np.linalg.norm(normal)
    g = sample_analytic(Plane(tuple(n), offset), (16,) * 3, (-1.0,) * 3, 2 / 15)
    dual, _ = optimize_vertices(g)
    dist = np.abs(dual.vertices @ n - offset)
    assert dist.max() < 1e-3 * g.h
    prob = SdcProblem(g)
    rep = prob.evaluate(vertices_to_params(dual.vertices, dual.cell_origins(), g.h))
    assert rep.l_d < 1e-8 and rep.l_n < 1e-6
    assert cell_containment(dual).all()


def test_zero_loss_fixed_point():
    g = plane_x_grid()
    prob = SdcProblem(g)
    d = exact_plane_dual(g)
    theta = vertices_to_params(d.vertices, d.cell_origins(), g.h)
    rep = prob.evaluate(theta)
    assert rep.l_mesh < 1e-26
    assert np.abs(rep.grad).max() < 1e-12


def test_scale_equivariance_of_exact_solution():
    for s in (1.0, 0.01, 37.0):
        g = sample_analytic(Plane((0.0, 0.6, 0.8), 0.05 * s), (12,) * 3, (-0.5 * s,) * 3, s / 11)
        d = exact_plane_dual(g)
        loss, _, _ = loss_distance(g, distance_nodes(g), triangulate(d))
        assert loss <= 1e-24 * s * s


def test_best_so_far_non_increasing_and_containment():
    g = sample_analytic(Torus(), (20,) * 3, (-1.0,) * 3, 2 / 19)
    dual, trace = optimize_vertices(g, SdcConfig(max_iters=60, polish_iters=5))
    b = np.array(trace.best)
    assert np.all(np.diff(b) <= 0)
    assert b[-1] <= trace.l_mesh[0]
    assert cell_containment(dual).all()


def test_sphere_beats_midpoint():
    r = 0.5
    g = sample_analytic(Sphere(radius=r), (32,) * 3, (-1.0,) * 3, 2 / 31)
    def err(mesh):
        p, _, _ = sample_surface(mesh, 20000, seed=0)
        return np.abs(np.linalg.norm(p, axis=1) - r).mean()

    sdc = mesh_sdc(g, SdcConfig(max_iters=200))
    mid = triangulate(midpoint_vertices(build_faces(g)))
    assert err(sdc) < err(mid)


def test_deterministic():
    g = sample_analytic(Sphere(), (16,) * 3, (-1.0,) * 3, 2 / 15)
    cfg = SdcConfig(max_iters=40, polish_iters=3)
    a, b = mesh_sdc(g, cfg), mesh_sdc(g, cfg)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


def test_empty_grid_raises():
    g = SdfGrid((6, 6, 6), (0, 0, 0), 1.0, np.ones(216))
    with pytest.raises(EmptyMeshError):
        optimize_vertices(g)


def test_config_validation():
    with pytest.raises(ParameterError):
        SdcConfig(alpha1=-1)
    with pytest.raises(ParameterError):
        SdcConfig(max_iters=0)
