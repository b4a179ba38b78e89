"""Finite-difference gradients and the edge-crossing / normal-interpolation formulas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PreconditionError
from .grid import SdfGrid

EPS_GRAD = 1e-8

CENTRAL5 = 0
FORWARD = 1
BACKWARD = 2

ORIENTATION_CONSISTENT = "orientation_consistent"
SIGN_WEIGHTED = "sign_weighted"  # weights multiplied by sign(f) of each endpoint
NORMAL_MODES = (ORIENTATION_CONSISTENT, SIGN_WEIGHTED)


@dataclass(frozen=True, eq=False)
class GradientField:
    dims: tuple
    raw: np.ndarray  # (l, m, n, 3)
    normals: np.ndarray  # (l, m, n, 3), zero where invalid
    valid: np.ndarray  # (l, m, n) bool


def stencil_map(dims) -> np.ndarray:
    """Per node and axis: CENTRAL5, FORWARD or BACKWARD."""
    out = np.empty(tuple(dims) + (3,), dtype=np.int8)
    for a, n in enumerate(dims):
        kinds = np.empty(n, dtype=np.int8)
        if n >= 5:
            kinds[:] = CENTRAL5
            kinds[:2] = FORWARD
            kinds[-2:] = BACKWARD
        else:
            kinds[:] = FORWARD
            kinds[-1] = BACKWARD
        shape = [1, 1, 1]
        shape[a] = n
        out[..., a] = kinds.reshape(shape)
    return out


def _axis_derivative(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    d = np.empty_like(f)
    if n >= 5:
        d[2:-2] = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * h)
        d[:2] = (f[1:3] - f[:2]) / h
        d[-2:] = (f[-2:] - f[-3:-1]) / h
    else:
        d[:-1] = (f[1:] - f[:-1]) / h
        d[-1] = (f[-1] - f[-2]) / h
    return np.moveaxis(d, 0, axis)


def estimate_gradients(grid: SdfGrid) -> GradientField:
    f = grid.values
    raw = np.stack([_axis_derivative(f, a, grid.spacing) for a in range(3)], axis=-1)
    norm = np.linalg.norm(raw, axis=-1)
    valid = norm >= EPS_GRAD
    normals = np.zeros_like(raw)
    normals[valid] = raw[valid] / norm[valid][:, None]
    return GradientField(grid.dims, raw, normals, valid)


def sign(x):
    """Sign with sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def edge_crossing(f_i: float, f_j: float) -> float:
    if (f_i >= 0) == (f_j >= 0):
        raise PreconditionError(f"edge values {f_i}, {f_j} do not change sign")
    return f_i / (f_i - f_j)


def edge_crossings(f_i, f_j) -> np.ndarray:
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if np.any((f_i >= 0) == (f_j >= 0)):
        raise PreconditionError("edge values do not change sign")
    return f_i / (f_i - f_j)


def interpolated_normals(field: GradientField, grid: SdfGrid, lo, hi, mode=ORIENTATION_CONSISTENT):
    """Normals at the zero crossings of edges lo -> hi (linear node indices).

    Returns (normals, ok); rows with ok=False are zero and must be skipped.
    """
    if mode not in NORMAL_MODES:
        raise ParameterError(f"unknown normal mode {mode!r}")
    f = grid.values.reshape(-1)
    nrm = field.normals.reshape(-1, 3)
    val = field.valid.reshape(-1)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    t = edge_crossings(f[lo], f[hi])
    wi = 1.0 - t
    wj = t
    if mode == SIGN_WEIGHTED:
        wi = wi * sign(f[lo])
        wj = wj * sign(f[hi])
    v = wi[:, None] * nrm[lo] + wj[:, None] * nrm[hi]
    ln = np.linalg.norm(v, axis=1)
    ok = val[lo] & val[hi] & (ln >= EPS_GRAD)
    out = np.zeros_like(v)
    out[ok] = v[ok] / ln[ok][:, None]
    return out, ok


def interpolated_normal(field: GradientField, edge, grid: SdfGrid, mode=ORIENTATION_CONSISTENT):
    """Normal at the crossing of one edge ((i,j,k), (i,j,k)); None if degenerate."""
    a, b = (grid.linear_index(np.asarray(e)) for e in edge)
    n, ok = interpolated_normals(field, grid, [a], [b], mode)
    return n[0] if ok[0] else None
