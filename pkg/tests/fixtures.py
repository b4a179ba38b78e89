"""Shared grids and meshes for the test suite."""

import numpy as np

from sdcmesh.grid import SdfGrid, lattice_points


def wedge_grid(angle_deg=40.0, offset=0.12, n=8, h=0.1, origin=-0.35):
    """Ridge f = max(n1.p, n2.p) - offset with n1, n2 = (cos a, +-sin a, 0).

    Cells along the ridge see two nearly coplanar constraint families whose
    interpolated normals blend, which pushes unclamped QEF solutions out of
    their cells.
    """
    a = np.radians(angle_deg)
    n1 = np.array([np.cos(a), np.sin(a), 0.0])
    n2 = np.array([np.cos(a), -np.sin(a), 0.0])
    p = lattice_points((n, n, n), (origin,) * 3, h)
    f = np.maximum(p @ n1, p @ n2) - offset
    return SdfGrid((n, n, n), (origin,) * 3, h, f)


def cell_containment(dual, closed=False, tol=1e-12):
    """Per-vertex bool: inside its cell (open box unless closed=True).

    The closed test allows `tol` of rounding at the faces.
    """
    lo = dual.cell_origins()
    hi = lo + dual.spacing
    v = dual.vertices
    if closed:
        return np.all((v >= lo - tol) & (v <= hi + tol), axis=1)
    return np.all((v > lo) & (v < hi), axis=1)


# ---- finite-difference audit of the meshing losses ---------------------------------

def random_shape_grid(kind, seed):
    """Randomized sphere/box/torus grid at 16^3 to 32^3 with a jittered frame."""
    from sdcmesh.grid import Box, Sphere, Torus, sample_analytic

    rng = np.random.default_rng(seed)
    n = int(rng.integers(16, 33))
    if kind == "sphere":
        shape = Sphere(radius=rng.uniform(0.4, 0.7), center=tuple(rng.uniform(-0.1, 0.1, 3)))
    elif kind == "box":
        shape = Box(half_extents=tuple(rng.uniform(0.3, 0.6, 3)), center=tuple(rng.uniform(-0.1, 0.1, 3)))
    else:
        shape = Torus(major=rng.uniform(0.45, 0.55), minor=rng.uniform(0.18, 0.25))
    h = 2.0 / (n - 1)
    origin = -1.0 + rng.uniform(-0.5, 0.5, 3) * h
    return sample_analytic(shape, (n, n, n), tuple(origin), h), rng


def _distance_loss_and_regions(grid, nodes, verts, tris):
    from sdcmesh.geom import SpatialIndex, TriMesh

    mesh = TriMesh(verts, tris)
    res = SpatialIndex(mesh).closest(nodes.positions(grid))
    r = np.abs(nodes.values(grid)) - res.distance
    loss = float(np.sum(np.where(res.distance >= 1e-9, r * r, 0.0)))
    return loss, res.triangle, res.region


def sdc_fd_errors(grid, theta, rng, n_coords=12, step_frac=1e-5):
    """Max relative FD error of dL_D/dv, dL_N/dv and dL_mesh/dtheta on sampled coordinates.

    L_D coordinates whose perturbation changes some node's closest triangle or
    region are skipped; the min over triangles is only piecewise smooth there.
    """
    from sdcmesh.field import estimate_gradients
    from sdcmesh.sdc import SdcConfig, SdcProblem, loss_distance, loss_normal

    prob = SdcProblem(grid, SdcConfig())
    dual = prob.dual.with_vertices(prob.vertices(theta))
    verts, tris = dual.vertices, prob.tris
    h = grid.spacing
    eps = step_frac * h
    from sdcmesh.geom import TriMesh

    _, g_d, _ = loss_distance(grid, prob.nodes, TriMesh(verts, tris))
    fld = estimate_gradients(grid)
    _, g_n, _ = loss_normal(grid, fld, dual)

    def rel_err(g, fd):
        g, fd = np.asarray(g), np.asarray(fd)
        scale = max(np.abs(fd).max(), 1e-300)
        return float(np.abs(g - fd).max() / scale)

    # distance loss
    cand = np.unique(np.nonzero(np.abs(g_d).sum(1) > 0)[0])
    picks = rng.choice(cand, size=min(n_coords, len(cand)), replace=False)
    got, fds = [], []
    for c in picks:
        ax = int(rng.integers(3))
        vp, vm = verts.copy(), verts.copy()
        vp[c, ax] += eps
        vm[c, ax] -= eps
        lp, tp, rp = _distance_loss_and_regions(grid, prob.nodes, vp, tris)
        lm, tm, rm = _distance_loss_and_regions(grid, prob.nodes, vm, tris)
        if not (np.array_equal(tp, tm) and np.array_equal(rp, rm)):
            continue
        got.append(g_d[c, ax])
        fds.append((lp - lm) / (2 * eps))
    err_d = rel_err(got, fds)

    # normal loss
    got, fds = [], []
    for c in rng.choice(len(verts), size=min(n_coords, len(verts)), replace=False):
        ax = int(rng.integers(3))
        vp, vm = verts.copy(), verts.copy()
        vp[c, ax] += eps
        vm[c, ax] -= eps
        lp = loss_normal(grid, fld, dual.with_vertices(vp))[0]
        lm = loss_normal(grid, fld, dual.with_vertices(vm))[0]
        got.append(g_n[c, ax])
        fds.append((lp - lm) / (2 * eps))
    err_n = rel_err(got, fds)
    return err_d, err_n


# ---- desk-scale comparison corpus ------------------------------------------------------

TABLE_DIMS = 64
BOX_HALF = (0.45, 0.35, 0.3)


def comparison_fixtures(dims=TABLE_DIMS):
    """Ten fixtures on a dims^3 grid over [-1, 1]^3: (name, grid, reference mesh, noisy).

    Analytic shapes are paired with finely tessellated reference meshes;
    mesh-derived fixtures use their source mesh. Noisy variants add
    N(0, (h/3)^2) with a fixed seed.
    """
    from sdcmesh.geom.shapes import (box_mesh, icosphere_mesh, l_shape_mesh, tetrahedron_mesh,
                                     torus_mesh)
    from sdcmesh.grid import Box, Sphere, Torus, add_noise, sample_analytic, sdf_from_mesh

    h = 2.0 / (dims - 1)
    lattice = ((dims,) * 3, (-1.0,) * 3, h)
    sphere = sample_analytic(Sphere(), *lattice)
    box = sample_analytic(Box(half_extents=BOX_HALF), *lattice)
    torus = sample_analytic(Torus(), *lattice)
    l_mesh = l_shape_mesh(size=0.6)
    l_grid = sdf_from_mesh(l_mesh, *lattice)
    tet = tetrahedron_mesh(0.45)
    refs = {
        "sphere": icosphere_mesh(0.5, 6),
        "box": box_mesh(half=BOX_HALF),
        "torus": torus_mesh(0.5, 0.2, 400, 160),
        "l_shape": l_mesh,
        "tetrahedron": tet,
    }
    out = [
        ("sphere", sphere, refs["sphere"], False),
        ("box", box, refs["box"], False),
        ("torus", torus, refs["torus"], False),
        ("l_shape", l_grid, refs["l_shape"], False),
        ("tetrahedron", sdf_from_mesh(tet, *lattice), tet, False),
        ("noisy_sphere", add_noise(sphere, 0), refs["sphere"], True),
        ("noisy_box", add_noise(box, 1), refs["box"], True),
        ("noisy_torus", add_noise(torus, 2), refs["torus"], True),
        ("noisy_l_shape", add_noise(l_grid, 3), refs["l_shape"], True),
        ("noisy_tetrahedron", add_noise(sdf_from_mesh(tet, *lattice), 4), tet, True),
    ]
    return out
