"""Self-supervised dual contouring: distance and normal-consistency losses and
per-cell vertex optimization under a scaled-sigmoid parameterization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .contour import DualMesh, build_faces, triangulate
from .errors import EmptyMeshError, ParameterError
from .field import ORIENTATION_CONSISTENT, GradientField, estimate_gradients, interpolated_normals
from .geom import _kernels as K
from .geom.index import SpatialIndex, _alloc
from .geom.mesh import TriMesh
from .grid import DEFAULT_TAU, NodeSet, SdfGrid, near_surface_nodes

SIGMOID_SCALE = 10.0
THETA_LIMIT = 3.0  # keeps sigmoid(10*theta) representably away from 0 and 1
LM_SCALE_FLOOR = 1e-2  # relative floor on the Marquardt scaling diagonal
MIN_DIST = 1e-9
MIN_AREA = 1e-12


@dataclass(frozen=True)
class SdcConfig:
    alpha1: float = 0.01
    tau: float = DEFAULT_TAU
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iters: int = 500
    tol: float = 1e-6
    tol_window: int = 20
    normal_mode: str = ORIENTATION_CONSISTENT
    boundary_band: int = 2
    polish_iters: int = 30
    moment: str = "global"  # second-moment estimate: "global" or "per_coordinate"

    def __post_init__(self):
        if self.alpha1 < 0:
            raise ParameterError("alpha1 must be non-negative")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if not self.tau > 0:
            raise ParameterError("tau must be positive")
        if self.moment not in ("global", "per_coordinate"):
            raise ParameterError(f"unknown moment mode {self.moment!r}")


@dataclass
class LossReport:
    l_d: float
    l_n: float
    l_mesh: float
    grad: np.ndarray  # d L_mesh / d theta, (C, 3)
    grad_vertices: np.ndarray  # d L_mesh / d v, (C, 3)
    empty_nodes: bool = False
    all_faces_degenerate: bool = False


@dataclass
class SdcTrace:
    """Per-iteration losses; ``best`` is the running minimum of ``l_mesh``."""

    l_d: list = field(default_factory=list)
    l_n: list = field(default_factory=list)
    l_mesh: list = field(default_factory=list)
    best: list = field(default_factory=list)
    best_iter: int = 0
    converged: bool = False

    def as_array(self) -> np.ndarray:
        return np.column_stack([np.arange(len(self.l_mesh)), self.l_d, self.l_n,
                                self.l_mesh, self.best])


# ---------------------------------------------------------------------------
# parameterization
# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def params_to_vertices(theta, cell_origins, h):
    """v = cell_origin + h * sigmoid(10 theta); returns (v, dv/dtheta)."""
    s = _sigmoid(SIGMOID_SCALE * np.asarray(theta, dtype=np.float64))
    return cell_origins + h * s, SIGMOID_SCALE * h * s * (1.0 - s)


def vertices_to_params(vertices, cell_origins, h):
    s = (np.asarray(vertices) - cell_origins) / h
    s = np.clip(s, 1e-15, 1 - 1e-15)
    return np.clip(np.log(s / (1 - s)) / SIGMOID_SCALE, -THETA_LIMIT, THETA_LIMIT)


# ---------------------------------------------------------------------------
# distance loss
# ---------------------------------------------------------------------------

def _distance_terms(targets, dist, cp, bary, tri_ids, tris, points, n_verts):
    keep = dist >= MIN_DIST
    r = np.abs(targets) - dist
    loss = float(np.sum(np.where(keep, r * r, 0.0)))
    grad = np.zeros((n_verts, 3))
    k = np.nonzero(keep)[0]
    if len(k):
        coef = 2.0 * r[k] / dist[k]
        dirv = (points[k] - cp[k]) * coef[:, None]
        corners = tris[tri_ids[k]]
        for c in range(3):
            np.add.at(grad, corners[:, c], bary[k, c][:, None] * dirv)
    return loss, grad


def loss_distance(grid: SdfGrid, nodes: NodeSet, mesh: TriMesh):
    """L_D = sum over nodes of (|f(g)| - d(g, mesh))^2 and its vertex gradient.

    Returns (loss, grad (V, 3), empty_flag).
    """
    if len(nodes) == 0 or mesh.n_faces == 0:
        return 0.0, np.zeros_like(mesh.vertices), True
    pts = nodes.positions(grid)
    res = SpatialIndex(mesh).closest(pts)
    loss, grad = _distance_terms(nodes.values(grid), res.distance, res.point, res.barycentric,
                                 res.triangle, mesh.triangles, pts, len(mesh.vertices))
    return loss, grad, False


def distance_nodes(grid: SdfGrid, tau: float = DEFAULT_TAU, band: int = 2) -> NodeSet:
    """Near-surface nodes at least ``band`` nodes away from every grid face.

    Faces dual to boundary edges are dropped, so the mesh stops short of the
    outer node layers and distances measured there cannot match the field.
    """
    shell = near_surface_nodes(grid, tau)
    if band <= 0 or len(shell) == 0:
        return shell
    idx = shell.indices
    inner = np.all((idx >= band) & (idx <= np.array(grid.dims) - 1 - band), axis=1)
    return NodeSet(grid.dims, shell.linear[inner])


class _DistanceAccel:
    """Certified candidate lists for node-to-dual-mesh queries.

    Each dual vertex stays inside its cell, so a quad never leaves the union of
    its four cells. A node's candidates are the triangles whose quad box is
    within ``|f| + margin`` of it, sorted by that box distance; answers beyond
    the radius fall back to a full search. The previous answer seeds the next
    query.
    """

    def __init__(self, dual: DualMesh, points: np.ndarray, values: np.ndarray, margin: float):
        h = dual.spacing
        qc = dual.cell_origins()[dual.quads]
        qmin = qc.min(axis=1)
        qmax = qc.max(axis=1) + h
        self.radius = np.abs(values) + margin
        self.points = np.ascontiguousarray(points)
        n = len(points)
        centers = 0.5 * (qmin + qmax)
        half = 0.5 * float(np.linalg.norm(qmax - qmin, axis=1).max())
        lists = cKDTree(centers).query_ball_point(points, self.radius + half + 1e-12 * h)
        lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=n)
        node = np.repeat(np.arange(n), lens)
        quad = np.fromiter((i for x in lists for i in x), dtype=np.int64, count=int(lens.sum()))
        p = self.points[node]
        gap = np.maximum(np.maximum(qmin[quad] - p, p - qmax[quad]), 0.0)
        bd = np.linalg.norm(gap, axis=1)
        keep = bd <= self.radius[node]
        node, quad, bd = node[keep], quad[keep], bd[keep]
        order = np.lexsort((quad, bd, node))
        node, quad, bd = node[order], quad[order], bd[order]
        self.items = np.stack([2 * quad, 2 * quad + 1], axis=1).reshape(-1)
        self.boxd = np.repeat(bd, 2)
        self.start = np.zeros(n + 1, dtype=np.int64)
        self.start[1:] = np.cumsum(np.bincount(node, minlength=n) * 2)
        self.warm = np.full(n, -1, dtype=np.int64)
        self.n_fallback = 0

    def closest(self, verts, tris):
        n = len(self.points)
        out = _alloc(n)
        need = np.zeros(n, dtype=np.bool_)
        K.closest_candidates(self.points, verts, tris, self.start, self.items, self.boxd,
                             self.radius, self.warm, *out, need)
        if need.any():
            idx = np.nonzero(need)[0]
            self.n_fallback += len(idx)
            sub = SpatialIndex(TriMesh(verts, tris)).closest(self.points[idx])
            for dst, src in zip(out, (sub.distance, sub.triangle, sub.point, sub.barycentric,
                                      sub.region)):
                dst[idx] = src
        self.warm = out[1].copy()
        return out


# ---------------------------------------------------------------------------
# normal loss
# ---------------------------------------------------------------------------

def quad_normals(dual: DualMesh, grid: SdfGrid, field: GradientField,
                 mode: str = ORIENTATION_CONSISTENT):
    """Interpolated field normal at each quad's provenance edge, with validity mask."""
    return interpolated_normals(field, grid, dual.edge_lo, dual.edge_hi, mode)


def _normal_terms(verts, quads, target, ok, h):
    v = verts[quads]
    a = v[:, 2] - v[:, 0]
    b = v[:, 3] - v[:, 1]
    N = np.cross(a, b)
    ln = np.linalg.norm(N, axis=1)
    use = ok & (0.5 * ln >= MIN_AREA * h * h)
    grad = np.zeros_like(verts)
    if not use.any():
        return 0.0, grad, True
    u = N[use] / ln[use][:, None]
    t = target[use]
    c = np.einsum("ij,ij->i", u, t)
    # 1 - cos == |u - t|^2 / 2 for unit vectors; this form never rounds below 0
    loss = float(0.5 * np.sum((u - t) ** 2))
    G = -(t - c[:, None] * u) / ln[use][:, None]
    da = np.cross(b[use], G)
    db = np.cross(G, a[use])
    q = quads[use]
    np.add.at(grad, q[:, 2], da)
    np.add.at(grad, q[:, 0], -da)
    np.add.at(grad, q[:, 3], db)
    np.add.at(grad, q[:, 1], -db)
    return loss, grad, False


def loss_normal(grid: SdfGrid, field: GradientField, dual: DualMesh,
                mode: str = ORIENTATION_CONSISTENT):
    """L_N = sum over quads of (1 - cos(quad normal, interpolated normal)).

    Returns (loss, grad (C, 3), all_degenerate_flag).
    """
    target, ok = quad_normals(dual, grid, field, mode)
    return _normal_terms(dual.vertices, dual.quads, target, ok, dual.spacing)


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

class SdcProblem:
    """L_mesh = L_D + alpha1 * L_N as a function of the per-cell parameters."""

    def __init__(self, grid: SdfGrid, config: SdcConfig = SdcConfig(), dual: DualMesh | None = None,
                 field: GradientField | None = None):
        self.grid = grid
        self.config = config
        self.dual = build_faces(grid) if dual is None else dual
        if self.dual.n_quads == 0:
            raise EmptyMeshError("grid has no interior sign change; nothing to mesh")
        self.field = estimate_gradients(grid) if field is None else field
        self.nodes = distance_nodes(grid, config.tau, config.boundary_band)
        self.tris = np.ascontiguousarray(self.dual.tri_indices())
        self.cell_origins = self.dual.cell_origins()
        self.target, self.ok = quad_normals(self.dual, grid, self.field, config.normal_mode)
        self.points = self.nodes.positions(grid)
        self.values = self.nodes.values(grid)
        self.accel = None
        if len(self.nodes):
            self.accel = _DistanceAccel(self.dual, self.points, self.values, 2.0 * grid.spacing)

    def vertices(self, theta):
        return params_to_vertices(theta, self.cell_origins, self.grid.spacing)[0]

    def inverted_triangles(self, verts) -> int:
        """Triangles whose normal opposes their quad's target normal.

        L_N sees only the quad's diagonal cross product, so one half of a quad
        can fold over without raising the loss much.
        """
        v = verts[self.tris]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        c = np.einsum("ij,ij->i", n, np.repeat(self.target, 2, axis=0))
        return int(np.count_nonzero((c < 0) & np.repeat(self.ok, 2)))

    def evaluate(self, theta) -> LossReport:
        h = self.grid.spacing
        verts, dvdt = params_to_vertices(theta, self.cell_origins, h)
        if self.accel is None:
            l_d, g_d, empty = 0.0, np.zeros_like(verts), True
        else:
            d, t, c, b, _ = self.accel.closest(verts, self.tris)
            l_d, g_d = _distance_terms(self.values, d, c, b, t, self.tris, self.points, len(verts))
            empty = False
        l_n, g_n, degen = _normal_terms(verts, self.dual.quads, self.target, self.ok, h)
        a1 = self.config.alpha1
        gv = g_d + a1 * g_n
        return LossReport(l_d, l_n, l_d + a1 * l_n, gv * dvdt, gv, empty, degen)


def _skew(x):
    z = np.zeros(len(x))
    return np.stack([np.stack([z, -x[:, 2], x[:, 1]], -1),
                     np.stack([x[:, 2], z, -x[:, 0]], -1),
                     np.stack([-x[:, 1], x[:, 0], z], -1)], axis=1)


def _residuals(prob: "SdcProblem", theta):
    """Residual vector r with sum(r**2) == L_mesh and its sparse Jacobian in theta."""
    h = prob.grid.spacing
    verts, dvdt = params_to_vertices(theta, prob.cell_origins, h)
    nv = len(verts)
    rows, cols, vals, res = [], [], [], []
    off = 0
    if prob.accel is not None:
        d, t, c, b, _ = prob.accel.closest(verts, prob.tris)
        keep = d >= MIN_DIST
        k = np.nonzero(keep)[0]
        r = np.abs(prob.values[k]) - d[k]
        unit = (prob.points[k] - c[k]) / d[k][:, None]
        corners = prob.tris[t[k]]
        for ci in range(3):
            jac = b[k, ci][:, None] * unit
            for ax in range(3):
                rows.append(off + np.arange(len(k)))
                cols.append(3 * corners[:, ci] + ax)
                vals.append(jac[:, ax])
        res.append(r)
        off += len(k)
    a1 = prob.config.alpha1
    if a1 > 0:
        v = verts[prob.dual.quads]
        a = v[:, 2] - v[:, 0]
        bb = v[:, 3] - v[:, 1]
        N = np.cross(a, bb)
        ln = np.linalg.norm(N, axis=1)
        use = np.nonzero(prob.ok & (0.5 * ln >= MIN_AREA * h * h))[0]
        if len(use):
            w = np.sqrt(0.5 * a1)
            u = N[use] / ln[use][:, None]
            P = (np.eye(3)[None] - u[:, :, None] * u[:, None, :]) / ln[use][:, None, None]
            Sa = np.einsum("qij,qjk->qik", P, _skew(a[use]))
            Sb = np.einsum("qij,qjk->qik", P, _skew(bb[use]))
            q = prob.dual.quads[use]
            blocks = ((q[:, 2], -Sb), (q[:, 0], Sb), (q[:, 3], Sa), (q[:, 1], -Sa))
            for comp in range(3):
                rr = off + 3 * np.arange(len(use)) + comp
                for vid, M in blocks:
                    for ax in range(3):
                        rows.append(rr)
                        cols.append(3 * vid + ax)
                        vals.append(w * M[:, comp, ax])
            res.append((w * (u - prob.target[use])).reshape(-1))
            off += 3 * len(use)
    r = np.concatenate(res) if res else np.zeros(0)
    if not rows:
        return r, sparse.csr_matrix((0, 3 * nv))
    J = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(off, 3 * nv)).tocsr()
    return r, J @ sparse.diags(dvdt.reshape(-1))


def _polish(prob: "SdcProblem", theta, loss, iters, trace=None):
    """Levenberg-Marquardt refinement.

    A step is accepted only if it lowers L_mesh without adding inverted
    triangles, so the result never folds more than its starting point.
    """
    mu = 1e-3
    folds = prob.inverted_triangles(prob.vertices(theta))
    for _ in range(iters):
        r, J = _residuals(prob, theta)
        if r.size == 0 or loss <= 0.0:
            break
        JtJ = (J.T @ J).tocsc()
        g = J.T @ r
        diag = JtJ.diagonal()
        # floor the Marquardt scaling so near-null (tangential) coordinates stay damped
        scale = np.maximum(diag, LM_SCALE_FLOOR * max(diag.max(), 1e-300))
        improved = False
        for _ in range(8):
            damp = mu * scale
            A = JtJ + sparse.diags(damp, format="csc")
            step, _ = cg(A, -g, M=sparse.diags(1.0 / (diag + damp)), rtol=1e-12, maxiter=400)
            if not np.all(np.isfinite(step)):
                mu *= 4.0
                continue
            cand = np.clip(theta + step.reshape(theta.shape), -THETA_LIMIT, THETA_LIMIT)
            rep = prob.evaluate(cand)
            cand_folds = prob.inverted_triangles(prob.vertices(cand))
            if np.isfinite(rep.l_mesh) and rep.l_mesh < loss and cand_folds <= folds:
                rel = (loss - rep.l_mesh) / loss
                theta, loss, folds = cand, rep.l_mesh, cand_folds
                mu = max(mu / 3.0, 1e-12)
                improved = True
                if trace is not None:
                    trace.append(rep)
                break
            mu *= 4.0
        if not improved or rel < 1e-12:
            break
    return theta, loss


def optimize_vertices(grid: SdfGrid, config: SdcConfig = SdcConfig(), theta0=None):
    """Adam on the cell parameters from cell centers, then a Levenberg-Marquardt
    refinement; returns (DualMesh, SdcTrace) with the best-so-far vertices.

    With ``moment="global"`` one second-moment estimate is shared by all
    parameters, so coordinates with negligible gradients (tangential motion on
    flat patches) are not blown up to full-size steps.
    """
    prob = SdcProblem(grid, config)
    theta = np.zeros((len(prob.dual.cells), 3)) if theta0 is None else np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = SdcTrace()
    best = np.inf
    best_theta = theta.copy()
    b1, b2 = config.beta1, config.beta2
    for it in range(config.max_iters):
        rep = prob.evaluate(theta)
        L = rep.l_mesh
        if not np.isfinite(L):
            break
        if L < best:
            best = L
            best_theta = theta.copy()
            trace.best_iter = it
        trace.l_d.append(rep.l_d)
        trace.l_n.append(rep.l_n)
        trace.l_mesh.append(L)
        trace.best.append(best)
        w = config.tol_window
        if it >= w:
            prev = trace.l_mesh[it - w]
            if abs(prev - L) <= config.tol * max(abs(prev), 1e-300):
                trace.converged = True
                break
        g = rep.grad
        m = b1 * m + (1 - b1) * g
        g2 = float(np.mean(g * g)) if config.moment == "global" else g * g
        v = b2 * v + (1 - b2) * g2
        mh = m / (1 - b1 ** (it + 1))
        vh = v / (1 - b2 ** (it + 1))
        theta = np.clip(theta - config.lr * mh / (np.sqrt(vh) + config.adam_eps),
                        -THETA_LIMIT, THETA_LIMIT)
    if config.polish_iters > 0 and np.isfinite(best):
        reports = []
        best_theta, best = _polish(prob, best_theta, best, config.polish_iters, reports)
        for rep in reports:
            trace.l_d.append(rep.l_d)
            trace.l_n.append(rep.l_n)
            trace.l_mesh.append(rep.l_mesh)
            trace.best.append(rep.l_mesh)
        if reports:
            trace.best_iter = len(trace.l_mesh) - 1
    dual = prob.dual.with_vertices(prob.vertices(best_theta))
    return dual, trace


def mesh_sdc(grid: SdfGrid, config: SdcConfig = SdcConfig()) -> TriMesh:
    dual, _ = optimize_vertices(grid, config)
    return triangulate(dual)
