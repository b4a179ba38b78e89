"""Triangle meshes, spatial queries and intersection tests."""

from .index import (ClosestPointResult, ClosestPoints, SpatialIndex, closest_point,
                    closest_points, closest_points_brute)
from .intersect import ray_parity, tri_tri_intersect
from .mesh import TriMesh, read_obj, sample_surface, write_obj

__all__ = [
    "ClosestPointResult", "ClosestPoints", "SpatialIndex", "TriMesh", "closest_point",
    "closest_points", "closest_points_brute", "ray_parity", "read_obj", "sample_surface",
    "tri_tri_intersect", "write_obj",
]
