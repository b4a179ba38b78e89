import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import stencil_kind_loop
from sdcmesh.errors import ParameterError, PreconditionError
from sdcmesh.field import (BACKWARD, CENTRAL5, FORWARD, ORIENTATION_CONSISTENT, SIGN_WEIGHTED,
                           edge_crossing, edge_crossings, estimate_gradients, interpolated_normal,
                           interpolated_normals, sign, stencil_map)
from sdcmesh.grid import Plane, SdfGrid, Sphere, lattice_points, sample_analytic

MONOMIALS = [e for e in itertools.product(range(5), repeat=3) if sum(e) <= 4]


def poly_grid(coef, dims, origin, h):
    p = lattice_points(dims, origin, h)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    f = sum(c * x ** a * y ** b * z ** d for c, (a, b, d) in zip(coef, MONOMIALS))
    g = [sum(c * a * x ** max(a - 1, 0) * y ** b * z ** d for c, (a, b, d) in zip(coef, MONOMIALS)),
         sum(c * b * x ** a * y ** max(b - 1, 0) * z ** d for c, (a, b, d) in zip(coef, MONOMIALS)),
         sum(c * d * x ** a * y ** b * z ** max(d - 1, 0) for c, (a, b, d) in zip(coef, MONOMIALS))]
    return SdfGrid(dims, origin, h, f), np.stack(g, axis=-1)


def test_sign_zero_positive():
    assert sign(0.0) == 1.0
    assert list(sign(np.array([-2.0, -0.0, 3.0]))) == [-1.0, 1.0, 1.0]


@given(st.tuples(*[st.integers(2, 9)] * 3))
def test_stencil_map_matches_loop(dims):
    sm = stencil_map(dims)
    for a in range(3):
        for idx in range(dims[a]):
            sl = [slice(None)] * 3
            sl[a] = idx
            assert np.all(sm[tuple(sl)][..., a] == stencil_kind_loop(dims[a], idx))
    assert {CENTRAL5, FORWARD, BACKWARD} == {0, 1, 2}


@given(st.lists(st.floats(-2, 2), min_size=len(MONOMIALS), max_size=len(MONOMIALS)),
       st.floats(0.05, 0.3))
def test_five_point_exact_on_quartics(coef, h):
    grid, exact = poly_grid(coef, (9, 8, 10), (-0.4, -0.3, -0.5), h)
    raw = estimate_gradients(grid).raw
    inner = (slice(2, -2),) * 3
    scale = max(1.0, max(abs(c) for c in coef))
    # h-dependent rounding: values O(1) divided by 12h
    tol = 1e-10 * scale
    np.testing.assert_allclose(raw[inner], exact[inner], rtol=0, atol=tol)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), st.floats(0.05, 0.5))
def test_two_point_exact_on_linear(a, b, c, d, h):
    dims = (6, 3, 7)  # one axis below 5 nodes
    p = lattice_points(dims, (0.1, -0.2, 0.3), h)
    grid = SdfGrid(dims, (0.1, -0.2, 0.3), h, p @ np.array([a, b, c]) + d)
    raw = estimate_gradients(grid).raw
    np.testing.assert_allclose(raw, np.broadcast_to([a, b, c], raw.shape), rtol=0, atol=1e-12)


def test_boundary_uses_one_sided_difference():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(7, 6, 3))
    grid = SdfGrid(vals.shape, (0, 0, 0), 0.5, vals)
    raw = estimate_gradients(grid).raw
    assert raw[0, 2, 1, 0] == pytest.approx((vals[1, 2, 1] - vals[0, 2, 1]) / 0.5, abs=1e-14)
    assert raw[1, 2, 1, 0] == pytest.approx((vals[2, 2, 1] - vals[1, 2, 1]) / 0.5, abs=1e-14)
    assert raw[5, 2, 1, 0] == pytest.approx((vals[5, 2, 1] - vals[4, 2, 1]) / 0.5, abs=1e-14)
    assert raw[6, 2, 1, 0] == pytest.approx((vals[6, 2, 1] - vals[5, 2, 1]) / 0.5, abs=1e-14)
    five = (-vals[5, 2, 1] + 8 * vals[4, 2, 1] - 8 * vals[2, 2, 1] + vals[1, 2, 1]) / 6.0
    assert raw[3, 2, 1, 0] == pytest.approx(five, abs=1e-13)
    # axis with 3 nodes: forward, forward, backward
    assert raw[3, 2, 1, 2] == pytest.approx((vals[3, 2, 2] - vals[3, 2, 1]) / 0.5, abs=1e-14)
    assert raw[3, 2, 2, 2] == pytest.approx((vals[3, 2, 2] - vals[3, 2, 1]) / 0.5, abs=1e-14)


def test_quadratic_example():
    grid = sample_analytic(type("Q", (), {"sdf": staticmethod(lambda p: p[..., 0] ** 2)}),
                           (9, 5, 5), (-0.1, 0, 0), 0.1)
    raw = estimate_gradients(grid).raw
    assert raw[4, 2, 2, 0] == pytest.approx(0.6, abs=1e-12)


def test_sphere_normals_radial_and_unit():
    grid = sample_analytic(Sphere(), (20, 20, 20), (-1, -1, -1), 2 / 19)
    f = estimate_gradients(grid)
    p = grid.node_positions()[2:-2, 2:-2, 2:-2]
    n = f.normals[2:-2, 2:-2, 2:-2]
    r = np.linalg.norm(p, axis=-1)
    ok = r > 0.2
    cos = np.einsum("...i,...i->...", n, p)[ok] / r[ok]
    assert cos.min() > 0.999
    lens = np.linalg.norm(f.normals[f.valid], axis=-1)
    assert np.all(np.abs(lens - 1) < 1e-9)


def test_constant_field_invalid():
    grid = SdfGrid((5, 5, 5), (0, 0, 0), 1.0, np.ones(125))
    f = estimate_gradients(grid)
    assert not f.valid.any()
    assert np.all(f.normals == 0)


def test_edge_crossing_examples():
    assert edge_crossing(1, -1) == 0.5
    assert edge_crossing(0.25, -0.75) == 0.25
    assert edge_crossing(1e-30, -1) == pytest.approx(0.0, abs=1e-29)
    assert edge_crossing(0.0, -1.0) == 0.0
    with pytest.raises(PreconditionError):
        edge_crossing(1, 2)
    with pytest.raises(PreconditionError):
        edge_crossing(0.0, 3.0)
    with pytest.raises(PreconditionError):
        edge_crossings([1.0, 1.0], [-1.0, 1.0])


@given(st.floats(0, 1e6), st.floats(-1e6, -1e-300), st.booleans())
def test_edge_crossing_in_unit_interval(fp, fn, swap):
    fi, fj = (fn, fp) if swap else (fp, fn)
    t = edge_crossing(fi, fj)
    assert 0.0 <= t <= 1.0
    assert abs((1 - t) * fi + t * fj) <= 1e-15 * max(abs(fi), abs(fj))


def test_plane_normal_modes():
    # crossing exactly at the edge midpoint: sign factors cancel
    grid = sample_analytic(Plane((1.0, 0.0, 0.0), 0.0), (6, 6, 6), (-1.25, -1, -1), 0.5)
    fld = estimate_gradients(grid)
    edge = ((2, 3, 3), (3, 3, 3))
    np.testing.assert_allclose(interpolated_normal(fld, edge, grid), [1, 0, 0], atol=1e-12)
    assert interpolated_normal(fld, edge, grid, SIGN_WEIGHTED) is None
    with pytest.raises(ParameterError):
        interpolated_normal(fld, edge, grid, "bogus")


def test_sphere_interpolated_normals_within_two_degrees():
    grid = sample_analytic(Sphere(), (24, 24, 24), (-1, -1, -1), 2 / 23)
    fld = estimate_gradients(grid)
    from sdcmesh.contour import active_edges, edge_points

    e = active_edges(grid)
    n, ok = interpolated_normals(fld, grid, e.lo, e.hi, ORIENTATION_CONSISTENT)
    assert ok.all()
    p = edge_points(grid, e.lo, e.hi)
    radial = p / np.linalg.norm(p, axis=1)[:, None]
    ang = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", n, radial), -1, 1)))
    assert ang.max() < 2.0
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
