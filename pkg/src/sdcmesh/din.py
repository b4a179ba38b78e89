"""Toy deep implicit network: an auto-decoder MLP with per-shape latent codes,
trained on SDF samples with an optional mesh-consistency (SDR) regularizer."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.blas import dsyrk

from .contour import triangulate
from .errors import DivergenceError, EmptyMeshError, FormatError, ParameterError
from .geom.index import SpatialIndex
from .geom.mesh import TriMesh
from .grid import DEFAULT_TAU, NodeSet, SdfGrid, lattice_points, near_surface_nodes
from .sdc import SdcConfig, mesh_sdc, optimize_vertices

LATENT_DIM = 16
HIDDEN = (128, 128, 128, 128)


@dataclass(frozen=True)
class GridSpec:
    dims: tuple = (32, 32, 32)
    origin: tuple = (-1.0, -1.0, -1.0)
    spacing: float = 2.0 / 31

    @classmethod
    def cube(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "GridSpec":
        return cls((n, n, n), (lo, lo, lo), (hi - lo) / (n - 1))

    def points(self) -> np.ndarray:
        return lattice_points(self.dims, self.origin, self.spacing).reshape(-1, 3)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

@dataclass
class ImplicitNet:
    """MLP [latent+3, hidden..., 1] with tanh hidden units; W[k] has shape (out, in)."""

    weights: list
    biases: list

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def latent_dim(self) -> int:
        return self.sizes[0] - 3

    @classmethod
    def create(cls, latent_dim: int = LATENT_DIM, hidden=HIDDEN, seed: int = 0) -> "ImplicitNet":
        rng = np.random.default_rng(seed)
        sizes = [latent_dim + 3, *hidden, 1]
        W, b = [], []
        for k in range(len(sizes) - 1):
            fan_in, fan_out = sizes[k], sizes[k + 1]
            W.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_out, fan_in)))
            b.append(np.zeros(fan_out))
        return cls(W, b)

    def params(self) -> list:
        return [*self.weights, *self.biases]

    def copy(self) -> "ImplicitNet":
        return ImplicitNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _inputs(net: ImplicitNet, lam, x):
    lam = np.asarray(lam, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, 3)
    if lam.shape[-1] != net.latent_dim:
        raise ParameterError(f"latent has {lam.shape[-1]} entries, network expects {net.latent_dim}")
    lam = np.broadcast_to(lam, (len(x), net.latent_dim))
    return np.concatenate([lam, x], axis=1), single


def forward_batch(net: ImplicitNet, lam, x):
    """Outputs (B,) and the activations needed by ``backward_batch``."""
    z, _ = _inputs(net, lam, x)
    acts = [z]
    L = len(net.weights)
    for k in range(L):
        z = z @ net.weights[k].T + net.biases[k]
        if k < L - 1:
            z = np.tanh(z)
        acts.append(z)
    return z[:, 0], acts


def forward(net: ImplicitNet, lam, x):
    out, _ = forward_batch(net, lam, x)
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def backward_batch(net: ImplicitNet, acts, upstream):
    """Gradients of sum(upstream * output): (dW list, db list, d input (B, in))."""
    g = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
    L = len(net.weights)
    dW = [None] * L
    db = [None] * L
    for k in range(L - 1, -1, -1):
        if k < L - 1:
            g = g * (1.0 - acts[k + 1] ** 2)
        dW[k] = g.T @ acts[k]
        db[k] = g.sum(axis=0)
        g = g @ net.weights[k]
    return dW, db, g


def backward(net: ImplicitNet, lam, x, upstream: float = 1.0):
    """Gradients of upstream * f(lam, x) w.r.t. weights, biases and the latent."""
    _, acts = forward_batch(net, lam, x)
    up = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (acts[0].shape[0],))
    dW, db, dz = backward_batch(net, acts, up)
    return dW, db, dz[:, :net.latent_dim].sum(axis=0)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SdfSampleSet:
    points: np.ndarray  # (K, 3)
    sdf: np.ndarray  # (K,)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        s = np.asarray(self.sdf, dtype=np.float64).reshape(-1)
        if len(p) == 0 or len(p) != len(s):
            raise ParameterError("sample set needs K >= 1 points with one value each")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(s))):
            raise ParameterError("sample values must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "sdf", s)


def sample_sdf(shape, count: int, seed: int = 0, near_fraction: float = 0.8,
               band: float = 0.1, bounds=(-1.0, 1.0)) -> SdfSampleSet:
    """Points concentrated near the zero set (|f| < band) plus uniform volume points."""
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    n_near = int(round(near_fraction * count))
    near = np.zeros((0, 3))
    while len(near) < n_near:
        cand = rng.uniform(lo, hi, size=(max(4 * n_near, 1024), 3))
        near = np.concatenate([near, cand[np.abs(shape.sdf(cand)) < band]])
    pts = np.concatenate([near[:n_near], rng.uniform(lo, hi, size=(count - n_near, 3))])
    return SdfSampleSet(pts, shape.sdf(pts))


@dataclass
class Gradients:
    dW: list
    db: list
    dlat: np.ndarray  # (S, latent_dim)

    @classmethod
    def zeros(cls, net: ImplicitNet, n_shapes: int):
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases],
                   np.zeros((n_shapes, net.latent_dim)))

    def add(self, other: "Gradients", scale: float = 1.0):
        for a, b in zip(self.dW, other.dW):
            a += scale * b
        for a, b in zip(self.db, other.db):
            a += scale * b
        self.dlat += scale * other.dlat

    def flat(self) -> np.ndarray:
        return np.concatenate([x.ravel() for x in (*self.dW, *self.db, self.dlat)])


def loss_sdf(net: ImplicitNet, latents, samples, sigma_lat: float = 10.0):
    """sum_j [ sum_i (f(lam_j, x_i) - s_i)^2 + |lam_j|^2 / sigma^2 ].

    Returns (total, data term, latent term, Gradients).
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if isinstance(samples, SdfSampleSet):
        samples = [samples]
    grads = Gradients.zeros(net, len(latents))
    data = 0.0
    lat = 0.0
    w = 1.0 / sigma_lat ** 2
    for j, s in enumerate(samples):
        out, acts = forward_batch(net, latents[j], s.points)
        r = out - s.sdf
        data += float(r @ r)
        dW, db, dz = backward_batch(net, acts, 2.0 * r)
        for a, b in zip(grads.dW, dW):
            a += b
        for a, b in zip(grads.db, db):
            a += b
        lat += w * float(latents[j] @ latents[j])
        grads.dlat[j] += dz[:, :net.latent_dim].sum(axis=0) + 2.0 * w * latents[j]
    return data + lat, data, lat, grads


@dataclass(frozen=True, eq=False)
class SdrTargets:
    """Frozen distances from shell nodes of a regularizer grid to the extracted mesh."""

    points: np.ndarray
    distances: np.ndarray
    mesh: TriMesh | None = None


def loss_sdr(net: ImplicitNet, lam, targets: SdrTargets):
    """sum over shell nodes of (|f(lam, g)| - d*(g))^2; returns (loss, dW, db, dlam)."""
    out, acts = forward_batch(net, lam, targets.points)
    r = np.abs(out) - targets.distances
    sgn = np.sign(out)  # subgradient 0 at exactly 0
    dW, db, dz = backward_batch(net, acts, 2.0 * r * sgn)
    return float(r @ r), dW, db, dz[:, :net.latent_dim].sum(axis=0)


def predict_grid(net: ImplicitNet, lam, lattice: GridSpec, chunk: int = 65536) -> SdfGrid:
    pts = lattice.points()
    vals = np.concatenate([forward_batch(net, lam, pts[i:i + chunk])[0]
                           for i in range(0, len(pts), chunk)])
    return SdfGrid(lattice.dims, lattice.origin, lattice.spacing, vals)


def sdr_targets(grid: SdfGrid, sdc_config: SdcConfig, tau: float = DEFAULT_TAU):
    """Extract the mesh of ``grid`` and measure shell-node distances to it.

    Returns None when the grid has no surface.
    """
    try:
        dual, _ = optimize_vertices(grid, sdc_config)
    except EmptyMeshError:
        return None
    mesh = triangulate(dual)
    shell = near_surface_nodes(grid, tau)
    if len(shell) == 0:
        return None
    pts = shell.positions(grid)
    d = SpatialIndex(mesh).closest(pts).distance
    return SdrTargets(pts, d, mesh)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DinTrainConfig:
    steps: int = 2000
    lr: float = 1e-3
    latent_lr: float = 1e-3
    lr_final: float = 1e-2  # learning rates decay geometrically to lr * lr_final
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sigma_lat: float = 10.0
    alpha2: float = 0.01
    refresh_every: int = 25
    sdr_start: int = 0  # SDR is applied from this step on (final-phase regularization)
    grid: GridSpec = field(default_factory=GridSpec)
    tau: float = DEFAULT_TAU
    sdc: SdcConfig = field(default_factory=lambda: SdcConfig(max_iters=100, polish_iters=5))
    latent_dim: int = LATENT_DIM
    hidden: tuple = HIDDEN
    optimizer: str = "adam"  # "adam" or "lm"
    lm_damping: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "lm"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if not self.sigma_lat > 0:
            raise ParameterError("sigma_lat must be positive")
        if self.refresh_every < 1:
            raise ParameterError("refresh_every must be at least 1")


@dataclass
class DinTrace:
    """Per-step rows: data term, latent term, SDR term, training loss."""

    data: list = field(default_factory=list)
    latent: list = field(default_factory=list)
    sdr: list = field(default_factory=list)
    total: list = field(default_factory=list)
    refreshes: list = field(default_factory=list)  # (step, shape, status)

    def as_array(self) -> np.ndarray:
        return np.column_stack([np.arange(len(self.total)), self.data, self.latent, self.sdr,
                                self.total])


class _Adam:
    def __init__(self, arrays, b1, b2, eps):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0

    def step(self, arrays, grads, lrs, scale=1.0):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for a, g, m, v, lr in zip(arrays, grads, self.m, self.v, lrs):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            a -= scale * lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _row_jacobian(net: ImplicitNet, lam, x):
    """Per-row backward signals: outputs, activations, G_k (dout/dz_k) and dout/dlam."""
    out, acts = forward_batch(net, lam, x)
    L = len(net.weights)
    g = np.ones((len(out), 1))
    G = [None] * L
    for k in range(L - 1, -1, -1):
        if k < L - 1:
            g = g * (1.0 - acts[k + 1] ** 2)
        G[k] = g
        g = g @ net.weights[k]
    return out, acts, G, g[:, :net.latent_dim]


def _loss_values(net, latents, samples, targets, config, sdr_on):
    data = 0.0
    for j, s in enumerate(samples):
        r = forward_batch(net, latents[j], s.points)[0] - s.sdf
        data += float(r @ r)
    lat = float(np.sum(latents * latents)) / config.sigma_lat ** 2
    l_sdr = 0.0
    if sdr_on:
        for j, tg in enumerate(targets):
            if tg is not None:
                r = np.abs(forward_batch(net, latents[j], tg.points)[0]) - tg.distances
                l_sdr += float(r @ r)
    total = data + lat + (config.alpha2 * l_sdr if sdr_on else 0.0)
    return total, data, lat, l_sdr


class _LevenbergMarquardt:
    """Gauss-Newton steps solved in residual space: (J J^T + mu I) c = r, step = -J^T c.

    Cheap when the number of residual rows is far below the parameter count.
    """

    def __init__(self, mu=1e-3, tries=10):
        self.mu = mu
        self.tries = tries
        self.stalled = False  # no damping level decreased the loss

    def step(self, net, latents, samples, targets, config, sdr_on, current):
        S, D = latents.shape
        rows = []  # (shape index, residual, weight per row, acts, G, dlam)
        for j, s in enumerate(samples):
            out, acts, G, dl = _row_jacobian(net, latents[j], s.points)
            rows.append((j, out - s.sdf, np.ones(len(out)), acts, G, dl))
        if sdr_on:
            w = np.sqrt(config.alpha2)
            for j, tg in enumerate(targets):
                if tg is None:
                    continue
                out, acts, G, dl = _row_jacobian(net, latents[j], tg.points)
                sg = np.sign(out)
                rows.append((j, w * (np.abs(out) - tg.distances), w * sg, acts, G, dl))
        n_net = sum(len(r[1]) for r in rows)
        R = n_net + S * D
        L = len(net.weights)
        acts = [np.concatenate([r[3][k] for r in rows]) for k in range(L)]
        G = [np.concatenate([r[2][:, None] * r[4][k] for r in rows]) for k in range(L)]
        J_lat = np.zeros((R, S * D))
        o = 0
        for j, res, wt, _, _, dl in rows:
            J_lat[o:o + len(res), j * D:(j + 1) * D] = wt[:, None] * dl
            o += len(res)
        J_lat[n_net:, :] = np.eye(S * D) / config.sigma_lat
        r = np.concatenate([*(row[1] for row in rows), latents.ravel() / config.sigma_lat])
        # upper triangle only; the Cholesky below reads nothing else
        K = dsyrk(1.0, J_lat)
        for k in range(L):
            K[:n_net, :n_net] += dsyrk(1.0, G[k]) * (dsyrk(1.0, acts[k]) + 1.0)
        saved = ([w.copy() for w in net.weights], [b.copy() for b in net.biases], latents.copy())
        eye = np.eye(R)
        for _ in range(self.tries):
            try:
                c = cho_solve(cho_factor(K + self.mu * eye, lower=False, check_finite=False),
                              r, check_finite=False)
            except np.linalg.LinAlgError:
                c = None
            if c is None or not np.all(np.isfinite(c)):
                self.mu *= 4.0
                continue
            cn = c[:n_net]
            for k in range(L):
                gc = G[k] * cn[:, None]
                net.weights[k] -= gc.T @ acts[k]
                net.biases[k] -= gc.sum(axis=0)
            latents -= (J_lat.T @ c).reshape(S, D)
            new = _loss_values(net, latents, samples, targets, config, sdr_on)[0]
            if np.isfinite(new) and new < current:
                self.mu = max(self.mu / 3.0, 1e-12)
                return
            for a, b in zip(net.weights, saved[0]):
                a[...] = b
            for a, b in zip(net.biases, saved[1]):
                a[...] = b
            latents[...] = saved[2]
            self.mu *= 4.0
        self.stalled = True


def train_din(samples, config: DinTrainConfig = DinTrainConfig(), use_sdr: bool = False,
              net: ImplicitNet | None = None, latents=None):
    """Jointly fit network weights and per-shape latents; returns (net, latents, trace).

    With use_sdr the mesh-consistency term is active (it is inert when alpha2 == 0).
    """
    if isinstance(samples, SdfSampleSet):
        samples = [samples]
    if len(samples) == 0:
        raise ParameterError("need at least one shape")
    rng = np.random.default_rng(config.seed)
    if net is None:
        net = ImplicitNet.create(config.latent_dim, config.hidden, seed=int(rng.integers(2 ** 31)))
    else:
        net = net.copy()
    if latents is None:
        latents = rng.normal(0.0, 0.01, size=(len(samples), net.latent_dim))
    else:
        latents = np.array(latents, dtype=np.float64, copy=True)
    sdr_on = use_sdr and config.alpha2 > 0
    arrays = [*net.weights, *net.biases, latents]
    lrs = [config.lr] * (len(arrays) - 1) + [config.latent_lr]
    adam = _Adam(arrays, config.beta1, config.beta2, config.eps)
    lm = _LevenbergMarquardt(config.lm_damping)
    trace = DinTrace()
    targets = [None] * len(samples)
    for step in range(config.steps):
        sdr_now = sdr_on and step >= config.sdr_start
        if sdr_now and (step - config.sdr_start) % config.refresh_every == 0:
            for j in range(len(samples)):
                grid = predict_grid(net, latents[j], config.grid)
                targets[j] = sdr_targets(grid, config.sdc, config.tau)
                trace.refreshes.append((step, j, "ok" if targets[j] is not None else "empty"))
            lm.stalled = False
        if config.optimizer == "lm":
            total, data, lat, l_sdr = _loss_values(net, latents, samples, targets, config, sdr_now)
        else:
            total, data, lat, grads = loss_sdf(net, latents, samples, config.sigma_lat)
            l_sdr = 0.0
            if sdr_now:
                for j, tg in enumerate(targets):
                    if tg is None:
                        continue
                    ls, dW, db, dl = loss_sdr(net, latents[j], tg)
                    l_sdr += ls
                    for a, b in zip(grads.dW, dW):
                        a += config.alpha2 * b
                    for a, b in zip(grads.db, db):
                        a += config.alpha2 * b
                    grads.dlat[j] += config.alpha2 * dl
                total += config.alpha2 * l_sdr
        trace.data.append(data)
        trace.latent.append(lat)
        trace.sdr.append(l_sdr)
        trace.total.append(total)
        if not np.isfinite(total):
            raise DivergenceError(f"training loss became non-finite at step {step}", trace=trace)
        if config.optimizer == "lm":
            if not lm.stalled:
                lm.step(net, latents, samples, targets, config, sdr_now, total)
        else:
            scale = config.lr_final ** (step / max(config.steps - 1, 1))
            adam.step(arrays, [*grads.dW, *grads.db, grads.dlat], lrs, scale)
    return net, latents, trace


def self_consistency(net: ImplicitNet, lam, lattice: GridSpec, sdc_config: SdcConfig = SdcConfig(),
                     tau: float = DEFAULT_TAU) -> float:
    """LSD-P between the network's grid values and the mesh extracted from them."""
    grid = predict_grid(net, lam, lattice)
    mesh = mesh_sdc(grid, sdc_config)
    shell = near_surface_nodes(grid, tau)
    d = SpatialIndex(mesh).closest(shell.positions(grid)).distance
    return float(np.mean(np.abs(np.abs(shell.values(grid)) - d)))


def reconstruct(net: ImplicitNet, lam, lattice: GridSpec, sdc_config: SdcConfig = SdcConfig()) -> TriMesh:
    return mesh_sdc(predict_grid(net, lam, lattice), sdc_config)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"DINC"
CKPT_VERSION = 1


def save_checkpoint(path, net: ImplicitNet, latents) -> None:
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    sizes = net.sizes
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<II", latents.shape[0], latents.shape[1]))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(latents, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (net, latents)."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FormatError("truncated checkpoint", offset=pos)
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    magic, version, n = take("<4sII")
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}", offset=0)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    if n < 2:
        raise FormatError("checkpoint needs at least two layer sizes", offset=8)
    sizes = take(f"<{n}I")
    n_shapes, lat_dim = take("<II")
    if sizes[0] != lat_dim + 3:
        raise FormatError("latent size does not match input layer", offset=pos - 4)

    def block(count):
        nonlocal pos
        if pos + 8 * count > len(data):
            raise FormatError("truncated checkpoint", offset=pos)
        a = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        return a

    W, b = [], []
    for k in range(n - 1):
        W.append(block(sizes[k + 1] * sizes[k]).reshape(sizes[k + 1], sizes[k]))
        b.append(block(sizes[k + 1]))
    lat = block(n_shapes * lat_dim).reshape(n_shapes, lat_dim)
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint", offset=pos)
    return ImplicitNet(W, b), lat
