"""Dual faces on sign-change edges, vertex placement baselines and triangulation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .field import ORIENTATION_CONSISTENT, GradientField, edge_crossings, interpolated_normals
from .errors import PreconditionError
from .geom.mesh import TriMesh
from .grid import SdfGrid

QEF_CUTOFF = 1e-2

# (du, dw) offsets of the four cells around an edge along axis a, with
# u = (a+1)%3 and w = (a+2)%3; counter-clockwise in (u, w), so the quad
# normal points along +a.
_RING = np.array([(-1, -1), (0, -1), (0, 0), (-1, 0)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ActiveEdges:
    """Sign-change edges ordered by axis, then by linear index of the lower node."""

    axis: np.ndarray
    lo: np.ndarray  # linear node index of the endpoint at the smaller coordinate
    hi: np.ndarray

    def __len__(self):
        return len(self.axis)


@dataclass(frozen=True, eq=False)
class DualMesh:
    grid_dims: tuple
    origin: np.ndarray
    spacing: float
    cells: np.ndarray  # (C, 3) active cell indices, sorted by linear cell index
    quads: np.ndarray  # (Q, 4) rows into ``cells``, in winding order
    edge_axis: np.ndarray  # (Q,) provenance edge per quad
    edge_lo: np.ndarray
    edge_hi: np.ndarray
    vertices: np.ndarray | None = None  # (C, 3)

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def cell_origins(self) -> np.ndarray:
        return self.origin + self.spacing * self.cells.astype(np.float64)

    def with_vertices(self, vertices) -> "DualMesh":
        v = np.asarray(vertices, dtype=np.float64).reshape(len(self.cells), 3)
        return replace(self, vertices=v)

    def tri_indices(self) -> np.ndarray:
        """Two triangles per quad, split along the (0, 2) diagonal."""
        q = self.quads
        return np.stack([q[:, [0, 1, 2]], q[:, [0, 2, 3]]], axis=1).reshape(-1, 3)


def _signs(grid: SdfGrid) -> np.ndarray:
    return grid.values >= 0


def active_edges(grid: SdfGrid) -> ActiveEdges:
    s = _signs(grid)
    l, m, n = grid.dims
    step = (m * n, n, 1)
    axes, los = [], []
    for a in range(3):
        lo_sl = tuple(slice(None, -1) if d == a else slice(None) for d in range(3))
        hi_sl = tuple(slice(1, None) if d == a else slice(None) for d in range(3))
        ijk = np.nonzero(s[lo_sl] != s[hi_sl])
        lin = (ijk[0] * m + ijk[1]) * n + ijk[2]
        axes.append(np.full(len(lin), a, dtype=np.int64))
        los.append(lin.astype(np.int64))
    axis = np.concatenate(axes)
    lo = np.concatenate(los)
    hi = lo + np.array(step, dtype=np.int64)[axis]
    return ActiveEdges(axis, lo, hi)


def _cell_linear(cells, dims):
    return (cells[..., 0] * (dims[1] - 1) + cells[..., 1]) * (dims[2] - 1) + cells[..., 2]


def build_faces(grid: SdfGrid) -> DualMesh:
    """One quad per active edge whose four surrounding cells are in bounds."""
    dims = grid.dims
    edges = active_edges(grid)
    lo_ijk = np.stack(np.unravel_index(edges.lo, dims), axis=-1)
    f_lo = grid.values.reshape(-1)[edges.lo]
    cells_all, keep_all = [], []
    for a in range(3):
        sel = edges.axis == a
        u, w = (a + 1) % 3, (a + 2) % 3
        base = lo_ijk[sel]
        ring = np.repeat(base[:, None, :], 4, axis=1)
        ring[:, :, u] += _RING[:, 0]
        ring[:, :, w] += _RING[:, 1]
        ok = ((base[:, u] >= 1) & (base[:, u] <= dims[u] - 2)
              & (base[:, w] >= 1) & (base[:, w] <= dims[w] - 2))
        cells_all.append(ring)
        keep_all.append(ok)
    ring = np.concatenate(cells_all) if cells_all else np.zeros((0, 4, 3), np.int64)
    keep = np.concatenate(keep_all)
    ring = ring[keep]
    flip = f_lo[keep] >= 0
    ring[flip] = ring[flip][:, [0, 3, 2, 1]]
    lin = _cell_linear(ring, dims)
    uniq, inv = np.unique(lin, return_inverse=True)
    cells = np.stack(np.unravel_index(uniq, (dims[0] - 1, dims[1] - 1, dims[2] - 1)), axis=-1)
    quads = inv.reshape(-1, 4).astype(np.int64)
    return DualMesh(dims, grid.origin.copy(), grid.spacing, cells.astype(np.int64), quads,
                    edges.axis[keep], edges.lo[keep], edges.hi[keep])


def midpoint_vertices(dual: DualMesh, grid: SdfGrid | None = None) -> DualMesh:
    return dual.with_vertices(dual.cell_origins() + 0.5 * dual.spacing)


def edge_points(grid: SdfGrid, lo, hi) -> np.ndarray:
    """Zero-crossing positions on edges lo -> hi."""
    f = grid.values.reshape(-1)
    pos = grid.node_positions().reshape(-1, 3)
    t = edge_crossings(f[lo], f[hi])
    return pos[lo] + t[:, None] * (pos[hi] - pos[lo])


def solve_qef(normals, points, cutoff: float = QEF_CUTOFF, anchor=None):
    """Minimize sum (n.(x - p))^2, anchored at the mass point of ``points``.

    Directions whose eigenvalue is below ``cutoff`` times the largest one are
    left at the anchor (truncated pseudo-inverse). ``anchor`` defaults to the
    mass point.
    """
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mass = points.mean(axis=0) if anchor is None else np.asarray(anchor, dtype=np.float64)
    A = normals.T @ normals
    b = np.einsum("ki,kj,kj->i", normals, normals, points)
    return _solve_batch(A[None], b[None], mass[None], cutoff)[0]


def _solve_batch(A, b, mass, cutoff):
    lam, Q = np.linalg.eigh(A)
    top = lam[:, -1:]
    keep = lam > cutoff * np.maximum(top, 0.0)
    keep &= top > 0
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    r = b - np.einsum("cij,cj->ci", A, mass)
    y = np.einsum("cji,cj->ci", Q, r) * inv
    return mass + np.einsum("cij,cj->ci", Q, y)


def qef_vertices(dual: DualMesh, grid: SdfGrid, field: GradientField, clamp: bool = False,
                 mode: str = ORIENTATION_CONSISTENT, cutoff: float = QEF_CUTOFF) -> DualMesh:
    """Classic dual-contouring vertex per active cell from all of its active edges."""
    dims = grid.dims
    edges = active_edges(grid)
    p = edge_points(grid, edges.lo, edges.hi)
    nrm, ok = interpolated_normals(field, grid, edges.lo, edges.hi, mode)
    nrm = np.where(ok[:, None], nrm, 0.0)
    lo_ijk = np.stack(np.unravel_index(edges.lo, dims), axis=-1)
    cell_lin = _cell_linear(dual.cells, dims)
    C = len(dual.cells)
    A = np.zeros((C, 3, 3))
    b = np.zeros((C, 3))
    msum = np.zeros((C, 3))
    cnt = np.zeros(C)
    nnT = nrm[:, :, None] * nrm[:, None, :]
    nnTp = np.einsum("eij,ej->ei", nnT, p)
    for k in range(4):
        ring = lo_ijk.copy()
        for a in range(3):
            sel = edges.axis == a
            u, w = (a + 1) % 3, (a + 2) % 3
            ring[sel, u] += _RING[k, 0]
            ring[sel, w] += _RING[k, 1]
        inb = np.all((ring >= 0) & (ring <= np.array(dims) - 2), axis=1)
        lin = _cell_linear(ring, dims)
        pos = np.searchsorted(cell_lin, lin)
        pos = np.minimum(pos, C - 1)
        hit = inb & (cell_lin[pos] == lin)
        idx = pos[hit]
        np.add.at(A, idx, nnT[hit])
        np.add.at(b, idx, nnTp[hit])
        np.add.at(msum, idx, p[hit])
        np.add.at(cnt, idx, 1.0)
    mass = msum / np.maximum(cnt, 1.0)[:, None]
    v = _solve_batch(A, b, mass, cutoff)
    if clamp:
        lo = dual.cell_origins()
        v = np.clip(v, lo, lo + dual.spacing)
    return dual.with_vertices(v)


def triangulate(dual: DualMesh) -> TriMesh:
    if dual.vertices is None:
        raise PreconditionError("dual mesh has no vertices yet")
    return TriMesh(dual.vertices, dual.tri_indices())
