"""Triangle-mesh extraction from signed-distance grids with self-supervised
dual contouring, classic baselines, mesh metrics and a toy implicit network."""

__version__ = "0.1.0"

from .errors import (DivergenceError, EmptyMeshError, FormatError, ParameterError,  # noqa: E402
                     PreconditionError)
from .geom.mesh import TriMesh, read_obj, write_obj  # noqa: E402
from .grid import SdfGrid, read_grid, sample_analytic, write_grid  # noqa: E402
from .sdc import SdcConfig, mesh_sdc, optimize_vertices  # noqa: E402

__all__ = [
    "DivergenceError", "EmptyMeshError", "FormatError", "ParameterError", "PreconditionError",
    "SdcConfig", "SdfGrid", "TriMesh", "__version__", "mesh_sdc", "optimize_vertices",
    "read_grid", "read_obj", "sample_analytic", "write_grid", "write_obj",
]
