"""Uniform-grid spatial index over triangles and exact closest-point queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from . import _kernels as K
from .mesh import TriMesh

REGION_NAMES = ("face", "vertex0", "vertex1", "vertex2", "edge01", "edge12", "edge20")

_MAX_CELLS_PER_AXIS = 256
_MAX_CELLS = 4_000_000


@dataclass(frozen=True)
class ClosestPointResult:
    distance: float
    triangle: int
    point: np.ndarray
    barycentric: np.ndarray
    region: str


@dataclass(frozen=True)
class ClosestPoints:
    """Batched closest-point answers, one row per query."""

    distance: np.ndarray
    triangle: np.ndarray
    point: np.ndarray
    barycentric: np.ndarray
    region: np.ndarray  # int codes, see REGION_NAMES

    def __getitem__(self, q) -> ClosestPointResult:
        return ClosestPointResult(float(self.distance[q]), int(self.triangle[q]),
                                  self.point[q].copy(), self.barycentric[q].copy(),
                                  REGION_NAMES[int(self.region[q])])


class SpatialIndex:
    """Triangles registered in every cell of a uniform grid their bounding box overlaps.

    The cell size defaults to the median triangle bounding-box diagonal, capped so
    the grid stays small. Nearest-triangle queries use a bounding-box hierarchy
    built lazily on first use; ``closest_ring`` is the grid-only search.
    """

    def __init__(self, mesh: TriMesh, cell_size: float | None = None):
        if mesh.n_faces == 0:
            raise ParameterError("cannot index an empty mesh")
        self.mesh = mesh
        c = mesh.corners()
        self.tmin = np.ascontiguousarray(c.min(axis=1))
        self.tmax = np.ascontiguousarray(c.max(axis=1))
        lo = self.tmin.min(axis=0)
        hi = self.tmax.max(axis=0)
        extent = np.maximum(hi - lo, 0.0)
        if cell_size is None:
            cell_size = float(np.median(np.linalg.norm(self.tmax - self.tmin, axis=1)))
        span = float(extent.max())
        if not cell_size > 0:
            cell_size = span if span > 0 else 1.0
        cell_size = max(cell_size, span / _MAX_CELLS_PER_AXIS)
        dims = np.maximum(np.ceil(extent / cell_size).astype(np.int64), 1)
        while np.prod(dims) > _MAX_CELLS:
            cell_size *= 1.25
            dims = np.maximum(np.ceil(extent / cell_size).astype(np.int64), 1)
        self.cell_size = float(cell_size)
        self.origin = lo.astype(np.float64)
        self.dims = dims
        self._bvh = None
        self.start, self.items = K.build_cells(self.tmin, self.tmax, self.origin,
                                               self.cell_size, self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def query(self, point, radius: float) -> np.ndarray:
        """Sorted triangle ids registered in any cell touching the ball's bounding box."""
        p = np.asarray(point, dtype=np.float64)
        return K.query_cells(p - radius, p + radius, self.origin, self.cell_size,
                             self.dims, self.start, self.items, self.mesh.n_faces)

    def closest(self, points) -> ClosestPoints:
        """Exact nearest triangles by branch-and-bound over the box hierarchy."""
        if self._bvh is None:
            self._bvh = K.build_bvh(self.tmin, self.tmax, 4)
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = _alloc(len(pts))
        K.closest_bvh(pts, self.mesh.vertices, self.mesh.triangles, *self._bvh, *out)
        return ClosestPoints(*out)

    def closest_ring(self, points) -> ClosestPoints:
        """Exact nearest triangles by expanding rings of grid cells.

        Cheap for points near the surface, slow for far ones.
        """
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = _alloc(len(pts))
        K.closest_indexed(pts, self.mesh.vertices, self.mesh.triangles, self.origin,
                          self.cell_size, self.dims, self.start, self.items, *out)
        return ClosestPoints(*out)


def _alloc(n):
    return (np.empty(n), np.empty(n, dtype=np.int64), np.empty((n, 3)),
            np.empty((n, 3)), np.empty(n, dtype=np.int64))


def closest_points(mesh: TriMesh, points, index: SpatialIndex | None = None) -> ClosestPoints:
    """Exact nearest-triangle query for many points (ties go to the lowest triangle id)."""
    if mesh.n_faces == 0:
        raise ParameterError("closest point on an empty mesh")
    if index is None:
        index = SpatialIndex(mesh)
    return index.closest(points)


def closest_point(mesh: TriMesh, q, index: SpatialIndex | None = None) -> ClosestPointResult:
    return closest_points(mesh, np.asarray(q, dtype=np.float64).reshape(1, 3), index)[0]


def closest_points_brute(mesh: TriMesh, points) -> ClosestPoints:
    """Reference scan over all triangles."""
    if mesh.n_faces == 0:
        raise ParameterError("closest point on an empty mesh")
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    out = _alloc(len(pts))
    K.closest_brute(pts, mesh.vertices, mesh.triangles, *out)
    return ClosestPoints(*out)
