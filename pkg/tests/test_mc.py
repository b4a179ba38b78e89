import numpy as np
import pytest

from sdcmesh._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE
from sdcmesh.grid import Box, SdfGrid, Sphere, Torus, sample_analytic
from sdcmesh.mc import marching_cubes


def test_single_corner_case_one_triangle():
    vals = np.ones((2, 2, 2))
    vals[0, 0, 0] = -1.0
    m = marching_cubes(SdfGrid((2, 2, 2), (0, 0, 0), 1.0, vals))
    assert m.n_faces == 1
    np.testing.assert_allclose(np.sort(m.vertices, axis=0),
                               [[0, 0, 0], [0, 0, 0], [0.5, 0.5, 0.5]])
    # normal points away from the negative corner
    assert m.face_normals()[0] @ np.ones(3) > 0


def test_constant_sign_is_empty():
    m = marching_cubes(SdfGrid((3, 3, 3), (0, 0, 0), 1.0, np.ones(27)))
    assert m.n_faces == 0


@pytest.mark.parametrize("case", range(256))
def test_every_case_vertices_on_sign_changes(case):
    vals = np.empty((2, 2, 2))
    for c, (i, j, k) in enumerate(CORNER_OFFSETS):
        vals[i, j, k] = -1.0 if case >> c & 1 else 1.0
    m = marching_cubes(SdfGrid((2, 2, 2), (0, 0, 0), 1.0, vals))
    assert m.n_faces == len(TRI_TABLE[case]) // 3
    crossing = []
    for a, b in EDGE_CORNERS:
        if (case >> a & 1) != (case >> b & 1):
            crossing.append((np.add(CORNER_OFFSETS[a], CORNER_OFFSETS[b])) / 2)
    if m.n_faces:
        d = np.linalg.norm(m.vertices[:, None] - np.array(crossing)[None], axis=2)
        assert d.min(axis=1).max() < 1e-15
        assert np.all(m.face_areas() > 0)


def test_sphere_vertices_near_surface():
    r = 0.5
    h = 2.0 / 63
    g = sample_analytic(Sphere(radius=r), (64,) * 3, (-1.0,) * 3, h)
    m = marching_cubes(g)
    err = np.abs(np.linalg.norm(m.vertices, axis=1) - r)
    assert err.max() <= 2 * h * h / r


@pytest.mark.parametrize("shape", [Sphere(), Torus(), Box(half_extents=(0.45, 0.35, 0.3))])
def test_closed_and_outward(shape):
    g = sample_analytic(shape, (32,) * 3, (-1.0,) * 3, 2 / 31)
    m = marching_cubes(g)
    assert m.is_watertight()
    # signed volume positive means outward winding
    c = m.corners()
    vol = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6
    assert vol > 0
