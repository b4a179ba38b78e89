"""Procedural watertight test meshes."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import TriMesh


def _weld(verts: np.ndarray, tris: np.ndarray, decimals: int = 12) -> TriMesh:
    key = np.round(verts, decimals)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    # keep first-seen coordinates rather than rounded ones
    first = np.full(len(uniq), -1)
    for i, u in enumerate(inv.ravel()):
        if first[u] < 0:
            first[u] = i
    return TriMesh(verts[first], inv.ravel()[tris])


def voxel_mesh(occupancy, origin=(0.0, 0.0, 0.0), size: float = 1.0) -> TriMesh:
    """Boundary of a union of unit voxels, two outward triangles per exposed face."""
    occ = np.pad(np.asarray(occupancy, dtype=bool), 1)
    origin = np.asarray(origin, dtype=np.float64) - size
    verts = []
    tris = []
    for a in range(3):
        u, w = (a + 1) % 3, (a + 2) % 3
        diff = occ[tuple(slice(1, None) if d == a else slice(None) for d in range(3))].astype(int) \
            - occ[tuple(slice(None, -1) if d == a else slice(None) for d in range(3))].astype(int)
        for idx in zip(*np.nonzero(diff)):
            s = diff[idx]  # +1: solid above the face along a, so outward is -a
            base = np.array(idx, dtype=np.float64)
            base[a] += 1
            corners = []
            for du, dw in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = base.copy()
                p[u] += du
                p[w] += dw
                corners.append(origin + size * p)
            if s > 0:
                corners = corners[::-1]
            k = len(verts)
            verts.extend(corners)
            tris.append((k, k + 1, k + 2))
            tris.append((k, k + 2, k + 3))
    return _weld(np.array(verts), np.array(tris, dtype=np.int64))


def box_mesh(center=(0.0, 0.0, 0.0), half=(0.5, 0.5, 0.5)) -> TriMesh:
    c = np.asarray(center, dtype=np.float64)
    he = np.broadcast_to(np.asarray(half, dtype=np.float64), (3,))
    m = voxel_mesh(np.ones((1, 1, 1)), origin=(0, 0, 0), size=1.0)
    return TriMesh(c + (m.vertices * 2 - 1) * he, m.triangles)


def l_shape_mesh(center=(0.0, 0.0, 0.0), size: float = 0.6) -> TriMesh:
    """An L-shaped prism built from three cubes (concave and convex sharp edges)."""
    occ = np.zeros((2, 2, 1), dtype=bool)
    occ[0, 0, 0] = occ[1, 0, 0] = occ[0, 1, 0] = True
    m = voxel_mesh(occ, size=size)
    mid = 0.5 * (m.vertices.min(axis=0) + m.vertices.max(axis=0))
    return TriMesh(m.vertices - mid + np.asarray(center, dtype=np.float64), m.triangles)


def convex_hull_mesh(points) -> TriMesh:
    """Outward-oriented hull triangulation of a point cloud."""
    pts = np.asarray(points, dtype=np.float64)
    hull = ConvexHull(pts)
    tris = hull.simplices.copy()
    c = pts[hull.vertices].mean(axis=0)
    v = pts[tris]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    flip = np.einsum("ij,ij->i", n, v[:, 0] - c) < 0
    tris[flip] = tris[flip][:, ::-1]
    used = np.unique(tris)
    remap = np.full(len(pts), -1)
    remap[used] = np.arange(len(used))
    return TriMesh(pts[used], remap[tris])


def beveled_box_mesh(half: float = 0.5, bevel: float = 0.1) -> TriMesh:
    """Cube with its edges chamfered by ``bevel``."""
    pts = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                s = np.array([sx, sy, sz], dtype=np.float64)
                for a in range(3):
                    p = s * half
                    for b in range(3):
                        if b != a:
                            p[b] -= s[b] * bevel
                    pts.append(p)
    return convex_hull_mesh(np.array(pts))


def icosphere_mesh(radius: float = 0.5, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    f = faces
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = v[i] + v[j]
                v.append(p / np.linalg.norm(p))
                cache[key] = len(v) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return TriMesh(np.asarray(center, dtype=np.float64) + radius * np.array(v),
                   np.array(f, dtype=np.int64))


def torus_mesh(major: float = 0.5, minor: float = 0.2, nu: int = 48, nv: int = 24) -> TriMesh:
    u = np.arange(nu) * 2 * np.pi / nu
    w = np.arange(nv) * 2 * np.pi / nv
    U, W = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(W)) * np.cos(U)
    y = (major + minor * np.cos(W)) * np.sin(U)
    z = minor * np.sin(W)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = i * nv + j
    b = ((i + 1) % nu) * nv + j
    c = ((i + 1) % nu) * nv + (j + 1) % nv
    d = i * nv + (j + 1) % nv
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                           np.stack([a, c, d], -1).reshape(-1, 3)])
    return TriMesh(verts, tris)


def tetrahedron_mesh(scale: float = 1.0, flip: bool = False) -> TriMesh:
    v = scale * np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    if flip:
        v = -v
    t = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int64)
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    out = np.einsum("ij,ij->i", n, v[t].mean(axis=1)) < 0
    t[out] = t[out][:, ::-1]
    return TriMesh(v, t)


def merge(*meshes: TriMesh) -> TriMesh:
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += len(m.vertices)
    return TriMesh(np.concatenate(verts), np.concatenate(tris))
