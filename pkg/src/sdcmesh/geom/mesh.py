"""Triangle meshes, ASCII OBJ IO and area-weighted surface sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, ParameterError


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh. ``vertices`` is (V, 3) float64, ``triangles`` (T, 3) int64."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ParameterError("triangle index out of range")
        if t.size and np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise ParameterError("triangle repeats a vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def face_cross(self) -> np.ndarray:
        c = self.corners()
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit face normals; zero rows for degenerate faces."""
        n = self.face_cross()
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, ln, out=np.zeros_like(n), where=ln > 0)

    def edges(self):
        """Unique undirected edges (E, 2) and, per edge, the number of incident faces."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def is_watertight(self) -> bool:
        if self.n_faces == 0:
            return False
        _, counts = self.edges()
        return bool(np.all(counts == 2))


def read_obj(path) -> TriMesh:
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError("vertex record needs 3 coordinates", line=lineno)
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise FormatError("bad vertex coordinate", line=lineno) from None
            elif tag == "f":
                if len(parts) < 4:
                    raise FormatError("face record needs at least 3 indices", line=lineno)
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise FormatError(f"bad face index {tok!r}", line=lineno) from None
                    if i == 0:
                        raise FormatError("face index 0 is invalid", line=lineno)
                    i = i - 1 if i > 0 else len(verts) + i
                    if i < 0 or i >= len(verts):
                        raise FormatError(f"face index {tok} out of range", line=lineno)
                    idx.append(i)
                # fan triangulation for polygons
                for a in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[a], idx[a + 1]))
            # other records (vn, vt, o, g, s, usemtl, ...) are ignored
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def sample_surface(mesh: TriMesh, count: int, seed: int = 0):
    """Area-weighted uniform samples. Returns (points, unit face normals, face ids)."""
    if mesh.n_faces == 0:
        raise ParameterError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise ParameterError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    fid = np.searchsorted(cdf, rng.random(count), side="right")
    fid = np.minimum(fid, mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    c = mesh.corners()[fid]
    pts = ((1 - r1)[:, None] * c[:, 0] + (r1 * (1 - r2))[:, None] * c[:, 1]
           + (r1 * r2)[:, None] * c[:, 2])
    return pts, mesh.face_normals()[fid], fid
