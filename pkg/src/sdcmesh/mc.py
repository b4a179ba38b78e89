"""Marching cubes baseline: standard 256-case table, vertices at linear edge crossings."""

from __future__ import annotations

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE
from .geom.mesh import TriMesh
from .grid import SdfGrid

_CORNERS = np.array(CORNER_OFFSETS, dtype=np.int64)
_EDGES = np.array(EDGE_CORNERS, dtype=np.int64)


def marching_cubes(grid: SdfGrid) -> TriMesh:
    """Triangles wound so their normals point toward positive values."""
    l, m, n = grid.dims
    f = grid.values
    cdims = (l - 1, m - 1, n - 1)
    case = np.zeros(cdims, dtype=np.int64)
    for c, (di, dj, dk) in enumerate(_CORNERS):
        corner = f[di:di + l - 1, dj:dj + m - 1, dk:dk + n - 1]
        case |= (corner < 0).astype(np.int64) << c
    case = case.reshape(-1)
    cell_ids = np.nonzero((case != 0) & (case != 255))[0]
    if len(cell_ids) == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cell_ijk = np.stack(np.unravel_index(cell_ids, cdims), axis=-1)
    cases = case[cell_ids]
    n_nodes = l * m * n
    tri_cell, tri_slot, tri_edge_ids = [], [], []
    for cs in np.unique(cases):
        sel = np.nonzero(cases == cs)[0]
        row = np.array(TRI_TABLE[cs], dtype=np.int64).reshape(-1, 3)
        if len(row) == 0:
            continue
        base = cell_ijk[sel]
        for s, tri in enumerate(row):
            ids = []
            for e in tri:
                a, b = _EDGES[e]
                pa = base + _CORNERS[a]
                pb = base + _CORNERS[b]
                lo = np.minimum(pa, pb)
                axis = int(np.argmax(np.abs(_CORNERS[b] - _CORNERS[a])))
                ids.append(axis * n_nodes + (lo[:, 0] * m + lo[:, 1]) * n + lo[:, 2])
            tri_cell.append(cell_ids[sel])
            tri_slot.append(np.full(len(sel), s))
            tri_edge_ids.append(np.stack(ids, axis=-1))
    tri_cell = np.concatenate(tri_cell)
    tri_slot = np.concatenate(tri_slot)
    tris = np.concatenate(tri_edge_ids)
    order = np.lexsort((tri_slot, tri_cell))
    tris = tris[order]
    uniq, inv = np.unique(tris.reshape(-1), return_inverse=True)
    axis = uniq // n_nodes
    lo = uniq % n_nodes
    step = np.array([m * n, n, 1], dtype=np.int64)[axis]
    fv = f.reshape(-1)
    pos = grid.node_positions().reshape(-1, 3)
    fa, fb = fv[lo], fv[lo + step]
    t = fa / (fa - fb)
    verts = pos[lo] + t[:, None] * (pos[lo + step] - pos[lo])
    faces = inv.reshape(-1, 3)
    # table winding yields normals toward negative values; reverse
    return TriMesh(verts, faces[:, ::-1].copy())
