"""Signed-distance grids: construction, noise, near-surface shells and file IO."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .geom import _kernels as K
from .geom.index import SpatialIndex
from .geom.mesh import TriMesh

MAGIC = b"SDFG"
VERSION = 1
HEADER = struct.Struct("<4sIIIIddddB3x")  # 56 bytes: spacing at 44, flag at 52, reserved 53..55
DEFAULT_TAU = 2.0
GRAZE_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Samples of a distance field on a regular lattice.

    ``values`` has shape (l, m, n); flattening it in C order gives the
    z-fastest linear index (i*m + j)*n + k.
    """

    dims: tuple
    origin: np.ndarray
    spacing: float
    values: np.ndarray
    signed: bool = True

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise ParameterError(f"dims must be three counts >= 2, got {self.dims}")
        h = float(self.spacing)
        if not (np.isfinite(h) and h > 0):
            raise ParameterError(f"spacing must be positive, got {self.spacing}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size != dims[0] * dims[1] * dims[2]:
            raise ParameterError("values size does not match dims")
        vals = vals.reshape(dims).copy()
        if not np.all(np.isfinite(vals)):
            raise ParameterError("grid values must be finite")
        vals.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "values", vals)

    @property
    def h(self) -> float:
        return self.spacing

    def node_position(self, i, j, k) -> np.ndarray:
        return self.origin + self.spacing * np.array([i, j, k], dtype=np.float64)

    def node_positions(self) -> np.ndarray:
        """(l, m, n, 3) world coordinates of every node."""
        return lattice_points(self.dims, self.origin, self.spacing)

    def with_values(self, values, signed=None) -> "SdfGrid":
        return SdfGrid(self.dims, self.origin, self.spacing, values,
                       self.signed if signed is None else signed)

    def linear_index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.int64)
        l, m, n = self.dims
        return (ijk[..., 0] * m + ijk[..., 1]) * n + ijk[..., 2]


def lattice_points(dims, origin, spacing) -> np.ndarray:
    idx = np.stack(np.meshgrid(*[np.arange(d) for d in dims], indexing="ij"), axis=-1)
    return np.asarray(origin, dtype=np.float64) + spacing * idx.astype(np.float64)


# ---------------------------------------------------------------------------
# analytic shapes (exact SDFs, negative inside)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("sphere radius must be positive")

    def sdf(self, p):
        return np.linalg.norm(np.asarray(p) - np.asarray(self.center, dtype=np.float64), axis=-1) - self.radius


@dataclass(frozen=True)
class Box:
    center: tuple = (0.0, 0.0, 0.0)
    half_extents: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ParameterError("box half-extents must be positive")

    def sdf(self, p):
        q = np.abs(np.asarray(p) - np.asarray(self.center, dtype=np.float64)) - np.asarray(self.half_extents, dtype=np.float64)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Torus:
    """Torus around the z axis."""

    center: tuple = (0.0, 0.0, 0.0)
    major: float = 0.5
    minor: float = 0.2

    def __post_init__(self):
        if not (self.major > 0 and self.minor > 0):
            raise ParameterError("torus radii must be positive")

    def sdf(self, p):
        d = np.asarray(p) - np.asarray(self.center, dtype=np.float64)
        ring = np.hypot(d[..., 0], d[..., 1]) - self.major
        return np.hypot(ring, d[..., 2]) - self.minor


@dataclass(frozen=True)
class Plane:
    """Half-space n.p - d (positive on the side the normal points to)."""

    normal: tuple = (1.0, 0.0, 0.0)
    offset: float = 0.0

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ParameterError("plane normal must have unit length")

    def sdf(self, p):
        return np.asarray(p) @ np.asarray(self.normal, dtype=np.float64) - self.offset


def _check_lattice(dims, spacing):
    dims = tuple(int(d) for d in np.broadcast_to(np.asarray(dims), (3,)))
    if min(dims) < 2:
        raise ParameterError(f"dims must be >= 2 per axis, got {dims}")
    if not (np.isfinite(spacing) and spacing > 0):
        raise ParameterError(f"spacing must be positive, got {spacing}")
    return dims


def sample_analytic(shape, dims, origin, spacing) -> SdfGrid:
    dims = _check_lattice(dims, spacing)
    pts = lattice_points(dims, origin, spacing)
    return SdfGrid(dims, origin, spacing, shape.sdf(pts))


def sdf_from_mesh(mesh: TriMesh, dims, origin, spacing) -> SdfGrid:
    """Exact unsigned distance to the mesh, signed by axis-ray parity votes.

    A mesh that is not watertight yields an unsigned grid (``signed=False``)
    and a warning.
    """
    dims = _check_lattice(dims, spacing)
    if mesh.n_faces == 0:
        raise ParameterError("cannot compute distances to an empty mesh")
    pts = lattice_points(dims, origin, spacing).reshape(-1, 3)
    dist = SpatialIndex(mesh).closest(pts).distance.reshape(dims)
    if not mesh.is_watertight():
        warnings.warn("mesh is not watertight; producing unsigned distances", RuntimeWarning,
                      stacklevel=2)
        return SdfGrid(dims, origin, spacing, dist, signed=False)
    votes = K.axis_parity_votes(mesh.vertices, mesh.triangles,
                                np.asarray(origin, dtype=np.float64), float(spacing),
                                np.array(dims, dtype=np.int64), GRAZE_EPS, 1e-3)
    return SdfGrid(dims, origin, spacing, np.where(votes >= 2, -dist, dist))


def add_noise(grid: SdfGrid, rng_seed) -> SdfGrid:
    """Add N(0, (h/3)^2) noise to every node."""
    rng = np.random.default_rng(rng_seed)
    eps = rng.normal(0.0, grid.spacing / 3.0, size=grid.values.shape)
    return grid.with_values(grid.values + eps)


# ---------------------------------------------------------------------------
# node sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NodeSet:
    """Deduplicated node indices sorted by linear index."""

    dims: tuple
    linear: np.ndarray = field(repr=False)

    def __post_init__(self):
        lin = np.unique(np.asarray(self.linear, dtype=np.int64))
        total = int(np.prod(self.dims))
        if lin.size and (lin[0] < 0 or lin[-1] >= total):
            raise ParameterError("node index out of range")
        object.__setattr__(self, "linear", lin)

    def __len__(self):
        return len(self.linear)

    @property
    def indices(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.linear, self.dims), axis=-1)

    def positions(self, grid: SdfGrid) -> np.ndarray:
        return grid.origin + grid.spacing * self.indices.astype(np.float64)

    def values(self, grid: SdfGrid) -> np.ndarray:
        return grid.values.reshape(-1)[self.linear]


def near_surface_nodes(grid: SdfGrid, tau: float = DEFAULT_TAU) -> NodeSet:
    if not tau > 0:
        raise ParameterError("tau must be positive")
    flat = grid.values.reshape(-1)
    return NodeSet(grid.dims, np.nonzero(np.abs(flat) < tau * grid.spacing)[0])


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def write_grid(grid: SdfGrid, path) -> None:
    l, m, n = grid.dims
    head = HEADER.pack(MAGIC, VERSION, l, m, n, *grid.origin, grid.spacing, 1 if grid.signed else 0)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(grid.values.astype("<f4").tobytes(order="C"))


def read_grid(path) -> SdfGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < HEADER.size:
        raise FormatError(f"file too short for the {HEADER.size}-byte header", offset=len(data))
    magic, version, l, m, n, ox, oy, oz, h, flag = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if min(l, m, n) < 2:
        raise FormatError(f"invalid dims {(l, m, n)}", offset=8)
    if not (np.isfinite(h) and h > 0):
        raise FormatError(f"invalid spacing {h}", offset=44)
    if flag not in (0, 1):
        raise FormatError(f"invalid signed flag {flag}", offset=52)
    if any(data[53:56]):
        raise FormatError("reserved header bytes must be zero", offset=53)
    count = l * m * n
    need = HEADER.size + 4 * count
    if len(data) < need:
        raise FormatError(f"truncated payload: expected {need} bytes, got {len(data)}",
                          offset=len(data))
    if len(data) > need:
        raise FormatError("trailing bytes after payload", offset=need)
    vals = np.frombuffer(data, dtype="<f4", count=count, offset=HEADER.size)
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        raise FormatError("non-finite grid value", offset=HEADER.size + 4 * int(bad[0]))
    return SdfGrid((l, m, n), (ox, oy, oz), h, vals.astype(np.float64).reshape(l, m, n),
                   signed=bool(flag))
