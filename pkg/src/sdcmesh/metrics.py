"""Mesh quality metrics: CD, NC, ECD, SI, IoU, LSD-P, LSD-A."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .geom.index import SpatialIndex, closest_points_brute
from .geom.intersect import candidate_pairs, intersecting_pairs
from .geom.mesh import TriMesh, sample_surface
from .grid import NodeSet, SdfGrid, sdf_from_mesh

SCALE = 1e3
SHARP_ANGLE = 30.0
EDGE_SAMPLES = 4096


def _points(x):
    p = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise ParameterError("point set is empty")
    return p


def chamfer(A, B) -> float:
    """Symmetric mean nearest-neighbour distance (unsquared)."""
    A, B = _points(A), _points(B)
    da = cKDTree(B).query(A)[0]
    db = cKDTree(A).query(B)[0]
    return float(da.mean() + db.mean())


def chamfer_brute(A, B) -> float:
    A, B = _points(A), _points(B)
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return float(D.min(axis=1).mean() + D.min(axis=0).mean())


def _require(mesh: TriMesh):
    if mesh.n_faces == 0:
        raise ParameterError("mesh is empty")


def normal_consistency(mesh_a: TriMesh, mesh_b: TriMesh, n_samples: int = 10000, seed: int = 0,
                       signed: bool = False) -> float:
    """Mean |cos| between sample normals and the normal at their closest point on the
    other mesh, both directions, in percent."""
    _require(mesh_a)
    _require(mesh_b)
    cos = []
    for src, dst, s in ((mesh_a, mesh_b, seed), (mesh_b, mesh_a, seed + 1)):
        p, n, _ = sample_surface(src, n_samples, s)
        tri = SpatialIndex(dst).closest(p).triangle
        cos.append(np.einsum("ij,ij->i", n, dst.face_normals()[tri]))
    c = np.concatenate(cos)
    return float(100.0 * np.mean(c if signed else np.abs(c)))


def sharp_edges(mesh: TriMesh, angle_deg: float = SHARP_ANGLE) -> np.ndarray:
    """Edges (E, 2) with exactly two incident faces whose normals differ by more than angle_deg."""
    if mesh.n_faces == 0:
        return np.zeros((0, 2), dtype=np.int64)
    tri = mesh.triangles
    e = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    face = np.repeat(np.arange(len(tri)), 3)
    uniq, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    two = np.nonzero(counts == 2)[0]
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    f0 = face[order[starts[two]]]
    f1 = face[order[starts[two] + 1]]
    n = mesh.face_normals()
    cosang = np.clip(np.einsum("ij,ij->i", n[f0], n[f1]), -1.0, 1.0)
    sharp = np.degrees(np.arccos(cosang)) > angle_deg
    return uniq[two[sharp]]


def edge_samples(mesh: TriMesh, angle_deg: float = SHARP_ANGLE, n_samples: int = EDGE_SAMPLES,
                 seed: int = 0):
    """Points on sharp edges, length-proportional; (points, used_surface_fallback)."""
    _require(mesh)
    edges = sharp_edges(mesh, angle_deg)
    rng = np.random.default_rng(seed)
    if len(edges) == 0:
        return sample_surface(mesh, n_samples, seed)[0], True
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    ln = np.linalg.norm(b - a, axis=1)
    if not ln.sum() > 0:
        return sample_surface(mesh, n_samples, seed)[0], True
    cdf = np.cumsum(ln) / ln.sum()
    idx = np.minimum(np.searchsorted(cdf, rng.random(n_samples), side="right"), len(edges) - 1)
    t = rng.random(n_samples)[:, None]
    return a[idx] + t * (b[idx] - a[idx]), False


def edge_chamfer(mesh_a: TriMesh, mesh_b: TriMesh, angle_deg: float = SHARP_ANGLE,
                 n_samples: int = EDGE_SAMPLES, seed: int = 0, return_flags: bool = False):
    """Chamfer distance between sharp-edge samples of two meshes."""
    pa, fa = edge_samples(mesh_a, angle_deg, n_samples, seed)
    pb, fb = edge_samples(mesh_b, angle_deg, n_samples, seed)
    value = chamfer(pa, pb)
    return (value, fa, fb) if return_flags else value


def _count_triangles(pairs, hit):
    return int(len(np.unique(pairs[hit]))) if hit.any() else 0


def self_intersections(mesh: TriMesh, return_degenerate: bool = False):
    """Number of distinct triangles involved in at least one intersecting pair."""
    if mesh.n_faces < 2:
        return (0, 0) if return_degenerate else 0
    pairs = candidate_pairs(mesh)
    hit, degen = intersecting_pairs(mesh, pairs)
    n = _count_triangles(pairs, hit)
    return (n, int(degen.sum())) if return_degenerate else n


def self_intersections_brute(mesh: TriMesh) -> int:
    T = mesh.n_faces
    if T < 2:
        return 0
    i, j = np.triu_indices(T, k=1)
    pairs = np.stack([i, j], axis=1)
    hit, _ = intersecting_pairs(mesh, pairs)
    return _count_triangles(pairs, hit)


def _occupancy(g):
    if isinstance(g, SdfGrid):
        return g.values < 0
    return np.asarray(g, dtype=bool)


def iou3d(grid_a, grid_b) -> float:
    a, b = _occupancy(grid_a), _occupancy(grid_b)
    if a.shape != b.shape:
        raise ParameterError(f"occupancy shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 100.0
    return float(100.0 * np.count_nonzero(a & b) / union)


def _gt_distances(gt, grid: SdfGrid, shell: NodeSet):
    if callable(gt):
        return np.abs(gt(shell.positions(grid)))
    if isinstance(gt, TriMesh):
        return SpatialIndex(gt).closest(shell.positions(grid)).distance
    d = np.asarray(gt, dtype=np.float64).reshape(-1)
    if len(d) == len(shell):
        return np.abs(d)
    return np.abs(d[shell.linear])


def lsd_p(gt, mesh: TriMesh, shell: NodeSet, grid: SdfGrid, brute: bool = False) -> float:
    """Mean over shell nodes of | |d(gt)| - d(mesh) |.

    ``gt`` is an exact SDF callable, a reference TriMesh, or an array of
    distances (per shell node or per grid node).
    """
    if len(shell) == 0:
        raise ParameterError("shell is empty")
    _require(mesh)
    pts = shell.positions(grid)
    ref = _gt_distances(gt, grid, shell)
    d = closest_points_brute(mesh, pts).distance if brute else SpatialIndex(mesh).closest(pts).distance
    return float(np.mean(np.abs(ref - d)))


def lsd_a(gt_mesh: TriMesh, mesh: TriMesh, n_samples: int = 10000, seed: int = 0,
          brute: bool = False) -> float:
    """Mean distance from samples on the reference mesh to the generated mesh."""
    _require(gt_mesh)
    _require(mesh)
    q, _, _ = sample_surface(gt_mesh, n_samples, seed)
    d = closest_points_brute(mesh, q).distance if brute else SpatialIndex(mesh).closest(q).distance
    return float(d.mean())


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

_SCALED = {"cd": SCALE, "ecd": SCALE, "lsd_p": SCALE, "lsd_a": SCALE}


@dataclass
class MetricsReport:
    """Raw metric values; CD, ECD and LSD are reported x1e3 when scaled."""

    cd: float
    nc: float
    ecd: float
    si_count: float
    lsd_a: float
    iou: float | None = None
    lsd_p: float | None = None
    n_samples: int = 0
    seed: int = 0
    flags: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for name in ("cd", "nc", "ecd", "si_count", "iou", "lsd_p", "lsd_a"):
            raw = getattr(self, name)
            if raw is None:
                continue
            out.append((name, raw, raw * _SCALED.get(name, 1.0), self.seed))
        return out

    def to_text(self) -> str:
        lines = [f"{name} = {scaled:.6g}" for name, _, scaled, _ in self.rows()]
        lines.append(f"samples = {self.n_samples}")
        lines.append(f"seed = {self.seed}")
        for k, v in sorted(self.flags.items()):
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "raw", "scaled", "seed"])
            for name, raw, scaled, seed in self.rows():
                w.writerow([name, repr(float(raw)), repr(float(scaled)), seed])

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(pred: TriMesh, gt: TriMesh, n_samples: int = 100000, seed: int = 0,
             gt_grid: SdfGrid | None = None, tau: float = 2.0) -> MetricsReport:
    """Full metric suite of ``pred`` against ``gt``; grid-based metrics need ``gt_grid``."""
    _require(pred)
    _require(gt)
    pa, _, _ = sample_surface(pred, n_samples, seed)
    pb, _, _ = sample_surface(gt, n_samples, seed)
    cd = chamfer(pa, pb)
    nc = normal_consistency(pred, gt, n_samples, seed)
    ecd, fa, fb = edge_chamfer(pred, gt, n_samples=EDGE_SAMPLES, seed=seed, return_flags=True)
    si = self_intersections(pred)
    la = lsd_a(gt, pred, n_samples, seed)
    rep = MetricsReport(cd, nc, ecd, float(si), la, n_samples=n_samples, seed=seed,
                        flags={"ecd_pred_fallback": fa, "ecd_gt_fallback": fb})
    if gt_grid is not None:
        from .grid import near_surface_nodes
        occ = sdf_from_mesh(pred, gt_grid.dims, gt_grid.origin, gt_grid.spacing)
        rep.iou = iou3d(gt_grid, occ) if occ.signed else None
        if not occ.signed:
            rep.flags["iou_skipped_unsigned_pred"] = True
        shell = near_surface_nodes(gt_grid, tau)
        if len(shell):
            rep.lsd_p = lsd_p(gt_grid.values, pred, shell, gt_grid)
    return rep
