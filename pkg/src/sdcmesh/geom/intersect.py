"""Triangle-triangle intersection with adjacency handling, and ray parity."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .index import SpatialIndex
from .mesh import TriMesh

SHARED_OFFSET = 1e-6
PLANE_EPS = 1e-12
GRAZE_EPS = 1e-9


def _arrange(t1, t2, shared):
    """Reorder corners so shared vertices come first (matched by position)."""
    t1 = np.asarray(t1, dtype=np.float64).reshape(3, 3)
    t2 = np.asarray(t2, dtype=np.float64).reshape(3, 3)
    if shared == 0:
        return t1.copy(), t2.copy()
    pairs = [(i, j) for i in range(3) for j in range(3) if np.array_equal(t1[i], t2[j])]
    if len(pairs) < shared:
        raise ValueError(f"triangles share fewer than {shared} vertices")
    pairs = pairs[:shared]
    o1 = [p[0] for p in pairs] + [i for i in range(3) if i not in [p[0] for p in pairs]]
    o2 = [p[1] for p in pairs] + [j for j in range(3) if j not in [p[1] for p in pairs]]
    return t1[o1].copy(), t2[o2].copy()


def tri_tri_intersect(t1, t2, shared: int = 0, offset: float = SHARED_OFFSET) -> bool:
    """Do two triangles intersect beyond their shared vertices?

    ``shared`` counts common vertices (0, 1 or 2); shared corners are matched by
    exact position. Zero-area triangles never intersect.
    """
    a, b = _arrange(t1, t2, shared)
    return bool(K.tri_tri(a, b, int(shared), offset, PLANE_EPS))


def is_degenerate(tri, h: float = 1.0) -> bool:
    t = np.asarray(tri, dtype=np.float64).reshape(3, 3)
    return 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) < 1e-12 * h * h


def ray_parity(mesh: TriMesh, origin, direction=None) -> bool:
    """Inside test by crossing parity.

    With ``direction`` the single ray decides; otherwise the three +axis rays vote.
    Grazing rays are re-cast from a slightly jittered origin.
    """
    o = np.asarray(origin, dtype=np.float64)
    dirs = [np.asarray(direction, dtype=np.float64)] if direction is not None else list(np.eye(3))
    scale = float(np.ptp(mesh.vertices, axis=0).max()) or 1.0
    votes = 0
    for ax, d in enumerate(dirs):
        start = o
        for attempt in range(16):
            hits = K.ray_hits(start[0], start[1], start[2], d[0], d[1], d[2],
                              mesh.vertices, mesh.triangles, GRAZE_EPS)
            if hits >= 0:
                break
            rng = np.random.default_rng([ax, attempt, 7])
            start = o + 1e-7 * scale * rng.standard_normal(3)
        votes += int(hits % 2 == 1) if hits >= 0 else 0
    return votes * 2 > len(dirs)


def candidate_pairs(mesh: TriMesh, index: SpatialIndex | None = None) -> np.ndarray:
    if index is None:
        index = SpatialIndex(mesh)
    pairs = K.candidate_pairs(index.start, index.items, index.n_cells, index.tmin, index.tmax)
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    return np.unique(pairs, axis=0)


def intersecting_pairs(mesh: TriMesh, pairs: np.ndarray, h: float | None = None):
    """Evaluate candidate pairs; returns (hit mask, degenerate triangle mask)."""
    areas = mesh.face_areas()
    if h is None:
        h = _mean_edge(mesh)
    degen = areas < 1e-12 * h * h
    pairs = np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2)
    keep = ~(degen[pairs[:, 0]] | degen[pairs[:, 1]])
    hit = np.zeros(len(pairs), dtype=np.bool_)
    sub = np.ascontiguousarray(pairs[keep])
    sub_hit = np.zeros(len(sub), dtype=np.bool_)
    K.self_intersect_pairs(mesh.vertices, mesh.triangles, sub, SHARED_OFFSET, PLANE_EPS, sub_hit)
    hit[keep] = sub_hit
    return hit, degen


def _mean_edge(mesh: TriMesh) -> float:
    if mesh.n_faces == 0:
        return 1.0
    c = mesh.corners()
    e = np.linalg.norm(c - np.roll(c, 1, axis=1), axis=2)
    m = float(e.mean())
    return m if m > 0 else 1.0
