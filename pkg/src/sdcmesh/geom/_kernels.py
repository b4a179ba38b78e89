"""Compiled inner loops for point/triangle queries and intersection tests.

Everything here works on plain float64/int64 arrays so that numba can
compile it; the public wrappers live in ``index.py`` and ``intersect.py``.
"""

import math

import numpy as np
from numba import njit

REGION_FACE = 0
REGION_V0 = 1
REGION_V1 = 2
REGION_V2 = 3
REGION_E01 = 4
REGION_E12 = 5
REGION_E20 = 6


@njit(cache=True)
def _seg_closest(px, py, pz, ax, ay, az, bx, by, bz):
    ex = bx - ax
    ey = by - ay
    ez = bz - az
    ee = ex * ex + ey * ey + ez * ez
    t = 0.0
    if ee > 0.0:
        t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / ee
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    return t


@njit(cache=True)
def closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle abc to p.

    Returns barycentric weights (u, v, w) of a, b, c and a region code.
    """
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    nx = aby * acz - abz * acy
    ny = abz * acx - abx * acz
    nz = abx * acy - aby * acx
    nn = nx * nx + ny * ny + nz * nz
    lab = abx * abx + aby * aby + abz * abz
    lac = acx * acx + acy * acy + acz * acz
    bcx = cx - bx
    bcy = cy - by
    bcz = cz - bz
    lbc = bcx * bcx + bcy * bcy + bcz * bcz
    lmax = max(lab, max(lac, lbc))
    if nn <= 1e-24 * lmax * lmax:
        # degenerate: best of the three edges
        best = np.inf
        bu = 1.0
        bv = 0.0
        bw = 0.0
        reg = REGION_V0
        for e in range(3):
            if e == 0:
                t = _seg_closest(px, py, pz, ax, ay, az, bx, by, bz)
                u = 1.0 - t
                v = t
                w = 0.0
                r = REGION_E01
                if t == 0.0:
                    r = REGION_V0
                elif t == 1.0:
                    r = REGION_V1
            elif e == 1:
                t = _seg_closest(px, py, pz, bx, by, bz, cx, cy, cz)
                u = 0.0
                v = 1.0 - t
                w = t
                r = REGION_E12
                if t == 0.0:
                    r = REGION_V1
                elif t == 1.0:
                    r = REGION_V2
            else:
                t = _seg_closest(px, py, pz, cx, cy, cz, ax, ay, az)
                u = t
                v = 0.0
                w = 1.0 - t
                r = REGION_E20
                if t == 0.0:
                    r = REGION_V2
                elif t == 1.0:
                    r = REGION_V0
            qx = u * ax + v * bx + w * cx - px
            qy = u * ay + v * by + w * cy - py
            qz = u * az + v * bz + w * cz - pz
            d = qx * qx + qy * qy + qz * qz
            if d < best:
                best = d
                bu = u
                bv = v
                bw = w
                reg = r
        return bu, bv, bw, reg

    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return 1.0, 0.0, 0.0, REGION_V0
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return 0.0, 1.0, 0.0, REGION_V1
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return 1.0 - v, v, 0.0, REGION_E01
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return 0.0, 0.0, 1.0, REGION_V2
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return 1.0 - w, 0.0, w, REGION_E20
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return 0.0, 1.0 - w, w, REGION_E12
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return 1.0 - v - w, v, w, REGION_FACE


@njit(cache=True)
def _tri_dist2(px, py, pz, verts, tris, t):
    i0 = tris[t, 0]
    i1 = tris[t, 1]
    i2 = tris[t, 2]
    u, v, w, reg = closest_on_triangle(
        px, py, pz,
        verts[i0, 0], verts[i0, 1], verts[i0, 2],
        verts[i1, 0], verts[i1, 1], verts[i1, 2],
        verts[i2, 0], verts[i2, 1], verts[i2, 2],
    )
    qx = u * verts[i0, 0] + v * verts[i1, 0] + w * verts[i2, 0]
    qy = u * verts[i0, 1] + v * verts[i1, 1] + w * verts[i2, 1]
    qz = u * verts[i0, 2] + v * verts[i1, 2] + w * verts[i2, 2]
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return dx * dx + dy * dy + dz * dz, u, v, w, reg, qx, qy, qz


@njit(cache=True)
def closest_brute(points, verts, tris, out_d, out_t, out_c, out_b, out_r):
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        best = np.inf
        for t in range(tris.shape[0]):
            d2, u, v, w, reg, qx, qy, qz = _tri_dist2(px, py, pz, verts, tris, t)
            if d2 < best:
                best = d2
                out_t[q] = t
                out_b[q, 0] = u
                out_b[q, 1] = v
                out_b[q, 2] = w
                out_r[q] = reg
                out_c[q, 0] = qx
                out_c[q, 1] = qy
                out_c[q, 2] = qz
        out_d[q] = math.sqrt(best)


@njit(cache=True)
def build_cells(tmin, tmax, origin, cs, dims):
    ncell = dims[0] * dims[1] * dims[2]
    counts = np.zeros(ncell + 1, dtype=np.int64)
    T = tmin.shape[0]
    lo = np.empty((T, 3), dtype=np.int64)
    hi = np.empty((T, 3), dtype=np.int64)
    for t in range(T):
        for a in range(3):
            l = int(math.floor((tmin[t, a] - origin[a]) / cs))
            h = int(math.floor((tmax[t, a] - origin[a]) / cs))
            l = min(max(l, 0), dims[a] - 1)
            h = min(max(h, 0), dims[a] - 1)
            lo[t, a] = l
            hi[t, a] = h
        for i in range(lo[t, 0], hi[t, 0] + 1):
            for j in range(lo[t, 1], hi[t, 1] + 1):
                for k in range(lo[t, 2], hi[t, 2] + 1):
                    counts[(i * dims[1] + j) * dims[2] + k + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    items = np.empty(counts[ncell], dtype=np.int64)
    fill = counts[:-1].copy()
    for t in range(T):
        for i in range(lo[t, 0], hi[t, 0] + 1):
            for j in range(lo[t, 1], hi[t, 1] + 1):
                for k in range(lo[t, 2], hi[t, 2] + 1):
                    c = (i * dims[1] + j) * dims[2] + k
                    items[fill[c]] = t
                    fill[c] += 1
    return counts, items


@njit(cache=True)
def _cell_coord(x, o, cs, n):
    c = int(math.floor((x - o) / cs))
    if c < 0:
        return 0
    if c > n - 1:
        return n - 1
    return c


@njit(cache=True)
def closest_indexed(points, verts, tris, origin, cs, dims, start, items,
                    out_d, out_t, out_c, out_b, out_r):
    T = tris.shape[0]
    stamp = np.full(T, -1, dtype=np.int64)
    rmax = max(dims[0], max(dims[1], dims[2]))
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        ci = _cell_coord(px, origin[0], cs, dims[0])
        cj = _cell_coord(py, origin[1], cs, dims[1])
        ck = _cell_coord(pz, origin[2], cs, dims[2])
        best = np.inf
        bt = -1
        r = 0
        while True:
            i0 = max(ci - r, 0)
            i1 = min(ci + r, dims[0] - 1)
            j0 = max(cj - r, 0)
            j1 = min(cj + r, dims[1] - 1)
            k0 = max(ck - r, 0)
            k1 = min(ck + r, dims[2] - 1)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    for k in range(k0, k1 + 1):
                        if (abs(i - ci) != r and abs(j - cj) != r
                                and abs(k - ck) != r):
                            continue
                        c = (i * dims[1] + j) * dims[2] + k
                        for s in range(start[c], start[c + 1]):
                            t = items[s]
                            if stamp[t] == q:
                                continue
                            stamp[t] = q
                            d2, u, v, w, reg, qx, qy, qz = _tri_dist2(
                                px, py, pz, verts, tris, t)
                            if d2 < best or (d2 == best and t < bt):
                                best = d2
                                bt = t
                                out_b[q, 0] = u
                                out_b[q, 1] = v
                                out_b[q, 2] = w
                                out_r[q] = reg
                                out_c[q, 0] = qx
                                out_c[q, 1] = qy
                                out_c[q, 2] = qz
            # every unvisited cell is at least r*cs away
            if bt >= 0 and math.sqrt(best) <= r * cs:
                break
            if r >= rmax:
                break
            r += 1
        out_t[q] = bt
        out_d[q] = math.sqrt(best)


@njit(cache=True)
def query_cells(lo, hi, origin, cs, dims, start, items, ntri):
    mark = np.zeros(ntri, dtype=np.bool_)
    i0 = _cell_coord(lo[0], origin[0], cs, dims[0])
    i1 = _cell_coord(hi[0], origin[0], cs, dims[0])
    j0 = _cell_coord(lo[1], origin[1], cs, dims[1])
    j1 = _cell_coord(hi[1], origin[1], cs, dims[1])
    k0 = _cell_coord(lo[2], origin[2], cs, dims[2])
    k1 = _cell_coord(hi[2], origin[2], cs, dims[2])
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                c = (i * dims[1] + j) * dims[2] + k
                for s in range(start[c], start[c + 1]):
                    mark[items[s]] = True
    return np.nonzero(mark)[0]


# ---------------------------------------------------------------------------
# intersection predicates
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True)
def _plane(t):
    # t: (3, 3) triangle; returns unit normal, offset and scale
    nx, ny, nz = _cross(t[1, 0] - t[0, 0], t[1, 1] - t[0, 1], t[1, 2] - t[0, 2],
                        t[2, 0] - t[0, 0], t[2, 1] - t[0, 1], t[2, 2] - t[0, 2])
    ln = math.sqrt(nx * nx + ny * ny + nz * nz)
    if ln == 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    nx /= ln
    ny /= ln
    nz /= ln
    d = nx * t[0, 0] + ny * t[0, 1] + nz * t[0, 2]
    return nx, ny, nz, d, ln


@njit(cache=True)
def _bbox_scale(t):
    s = 0.0
    for a in range(3):
        lo = min(t[0, a], min(t[1, a], t[2, a]))
        hi = max(t[0, a], max(t[1, a], t[2, a]))
        s = max(s, hi - lo)
    return s


@njit(cache=True)
def _inside_strict(x, y, z, t, nx, ny, nz, eps):
    # point assumed on the plane of t; strict interior test via edge cross signs
    for e in range(3):
        a = e
        b = (e + 1) % 3
        ex = t[b, 0] - t[a, 0]
        ey = t[b, 1] - t[a, 1]
        ez = t[b, 2] - t[a, 2]
        cx, cy, cz = _cross(ex, ey, ez, x - t[a, 0], y - t[a, 1], z - t[a, 2])
        le = math.sqrt(ex * ex + ey * ey + ez * ez)
        if (cx * nx + cy * ny + cz * nz) <= eps * le:
            return False
    return True


@njit(cache=True)
def segment_crosses_triangle(s0, s1, t, rel_eps):
    """True when segment s0-s1 passes through the open interior of t.

    Endpoints lying on the plane (touching) do not count, nor does a
    segment coplanar with t.
    """
    nx, ny, nz, d, ln = _plane(t)
    if ln == 0.0:
        return False
    scale = _bbox_scale(t)
    eps = rel_eps * scale
    da = nx * s0[0] + ny * s0[1] + nz * s0[2] - d
    db = nx * s1[0] + ny * s1[1] + nz * s1[2] - d
    if abs(da) <= eps or abs(db) <= eps:
        return False
    if (da > 0.0) == (db > 0.0):
        return False
    u = da / (da - db)
    x = s0[0] + u * (s1[0] - s0[0])
    y = s0[1] + u * (s1[1] - s0[1])
    z = s0[2] + u * (s1[2] - s0[2])
    return _inside_strict(x, y, z, t, nx, ny, nz, eps)


@njit(cache=True)
def _proj2(p, drop):
    if drop == 0:
        return p[1], p[2]
    if drop == 1:
        return p[2], p[0]
    return p[0], p[1]


@njit(cache=True)
def _orient2(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _coplanar_overlap(t1, t2, nx, ny, nz, eps):
    # strict 2D overlap of two coplanar triangles
    drop = 0
    if abs(ny) >= abs(nx) and abs(ny) >= abs(nz):
        drop = 1
    elif abs(nz) >= abs(nx) and abs(nz) >= abs(ny):
        drop = 2
    p = np.empty((3, 2))
    q = np.empty((3, 2))
    for i in range(3):
        p[i, 0], p[i, 1] = _proj2(t1[i], drop)
        q[i, 0], q[i, 1] = _proj2(t2[i], drop)
    e2 = eps * eps
    # proper edge crossings
    for i in range(3):
        a0 = p[i]
        a1 = p[(i + 1) % 3]
        for j in range(3):
            b0 = q[j]
            b1 = q[(j + 1) % 3]
            o1 = _orient2(a0[0], a0[1], a1[0], a1[1], b0[0], b0[1])
            o2 = _orient2(a0[0], a0[1], a1[0], a1[1], b1[0], b1[1])
            o3 = _orient2(b0[0], b0[1], b1[0], b1[1], a0[0], a0[1])
            o4 = _orient2(b0[0], b0[1], b1[0], b1[1], a1[0], a1[1])
            if (((o1 > e2 and o2 < -e2) or (o1 < -e2 and o2 > e2))
                    and ((o3 > e2 and o4 < -e2) or (o3 < -e2 and o4 > e2))):
                return True
    # containment (strict) of a vertex or centroid
    for side in range(2):
        A = p if side == 0 else q
        B = q if side == 0 else p
        s = _orient2(B[0, 0], B[0, 1], B[1, 0], B[1, 1], B[2, 0], B[2, 1])
        sgn = 1.0 if s > 0 else -1.0
        cxs = (A[0, 0] + A[1, 0] + A[2, 0]) / 3.0
        cys = (A[0, 1] + A[1, 1] + A[2, 1]) / 3.0
        inside = True
        for j in range(3):
            o = sgn * _orient2(B[j, 0], B[j, 1], B[(j + 1) % 3, 0],
                               B[(j + 1) % 3, 1], cxs, cys)
            if o <= e2:
                inside = False
        if inside:
            return True
    return False


@njit(cache=True)
def _sector_contains(ux, uy, vx, vy, dx, dy, e2):
    # strict: direction d inside the (convex) angle from u to v
    s = _orient2(0.0, 0.0, ux, uy, vx, vy)
    if s == 0.0:
        return False
    sg = 1.0 if s > 0 else -1.0
    return (sg * _orient2(0.0, 0.0, ux, uy, dx, dy) > e2
            and sg * _orient2(0.0, 0.0, dx, dy, vx, vy) > e2)


@njit(cache=True)
def tri_tri(t1, t2, shared, offset_rel, rel_eps):
    """Triangle-triangle intersection with shared-vertex handling.

    ``shared`` is 0, 1 or 2. For 1, row 0 of both triangles is the shared
    vertex; for 2, rows 0 and 1 are the shared edge.
    """
    n1x, n1y, n1z, d1, l1 = _plane(t1)
    n2x, n2y, n2z, d2, l2 = _plane(t2)
    if l1 == 0.0 or l2 == 0.0:
        return False
    scale = max(_bbox_scale(t1), _bbox_scale(t2))
    eps = rel_eps * scale
    coplanar = True
    for i in range(3):
        if abs(n1x * t2[i, 0] + n1y * t2[i, 1] + n1z * t2[i, 2] - d1) > eps:
            coplanar = False
    if shared == 2:
        if not coplanar:
            return False
        # folded iff third vertices lie on the same side of the shared edge
        ex = t1[1, 0] - t1[0, 0]
        ey = t1[1, 1] - t1[0, 1]
        ez = t1[1, 2] - t1[0, 2]
        ax, ay, az = _cross(ex, ey, ez, t1[2, 0] - t1[0, 0],
                            t1[2, 1] - t1[0, 1], t1[2, 2] - t1[0, 2])
        bx, by, bz = _cross(ex, ey, ez, t2[2, 0] - t1[0, 0],
                            t2[2, 1] - t1[0, 1], t2[2, 2] - t1[0, 2])
        return (ax * bx + ay * by + az * bz) > 0.0
    if shared == 1:
        if coplanar:
            drop = 0
            if abs(n1y) >= abs(n1x) and abs(n1y) >= abs(n1z):
                drop = 1
            elif abs(n1z) >= abs(n1x) and abs(n1z) >= abs(n1y):
                drop = 2
            sx, sy = _proj2(t1[0], drop)
            a1x, a1y = _proj2(t1[1], drop)
            b1x, b1y = _proj2(t1[2], drop)
            a2x, a2y = _proj2(t2[1], drop)
            b2x, b2y = _proj2(t2[2], drop)
            a1x -= sx
            a1y -= sy
            b1x -= sx
            b1y -= sy
            a2x -= sx
            a2y -= sy
            b2x -= sx
            b2y -= sy
            e2 = 0.0
            if (_sector_contains(a1x, a1y, b1x, b1y, a2x, a2y, e2)
                    or _sector_contains(a1x, a1y, b1x, b1y, b2x, b2y, e2)
                    or _sector_contains(a2x, a2y, b2x, b2y, a1x, a1y, e2)
                    or _sector_contains(a2x, a2y, b2x, b2y, b1x, b1y, e2)):
                return True
            return False
        s0 = np.empty(3)
        s1 = np.empty(3)
        for side in range(2):
            A = t1 if side == 0 else t2
            B = t2 if side == 0 else t1
            for a in range(3):
                s0[a] = A[1, a] + offset_rel * (A[0, a] - A[1, a])
                s1[a] = A[2, a] + offset_rel * (A[0, a] - A[2, a])
            if segment_crosses_triangle(s0, s1, B, rel_eps):
                return True
        return False
    if coplanar:
        return _coplanar_overlap(t1, t2, n1x, n1y, n1z, eps)
    for side in range(2):
        A = t1 if side == 0 else t2
        B = t2 if side == 0 else t1
        for e in range(3):
            if segment_crosses_triangle(A[e], A[(e + 1) % 3], B, rel_eps):
                return True
    return False


@njit(cache=True)
def self_intersect_pairs(verts, tris, pairs, offset_rel, rel_eps, hit):
    t1 = np.empty((3, 3))
    t2 = np.empty((3, 3))
    for p in range(pairs.shape[0]):
        a = pairs[p, 0]
        b = pairs[p, 1]
        # order vertices so shared ones come first
        sa = np.empty(3, dtype=np.int64)
        sb = np.empty(3, dtype=np.int64)
        ns = 0
        for i in range(3):
            for j in range(3):
                if tris[a, i] == tris[b, j]:
                    sa[ns] = i
                    sb[ns] = j
                    ns += 1
        ka = ns
        for i in range(3):
            used = False
            for s in range(ns):
                if sa[s] == i:
                    used = True
            if not used:
                sa[ka] = i
                ka += 1
        kb = ns
        for j in range(3):
            used = False
            for s in range(ns):
                if sb[s] == j:
                    used = True
            if not used:
                sb[kb] = j
                kb += 1
        if ns >= 3:
            hit[p] = False
            continue
        for r in range(3):
            for c in range(3):
                t1[r, c] = verts[tris[a, sa[r]], c]
                t2[r, c] = verts[tris[b, sb[r]], c]
        hit[p] = tri_tri(t1, t2, ns, offset_rel, rel_eps)


@njit(cache=True)
def candidate_pairs(start, items, ncell, tmin, tmax):
    """Unique triangle pairs sharing an index cell whose boxes overlap."""
    cap = 1024
    out = np.empty((cap, 2), dtype=np.int64)
    n = 0
    for c in range(ncell):
        s0 = start[c]
        s1 = start[c + 1]
        for x in range(s0, s1):
            a = items[x]
            for y in range(x + 1, s1):
                b = items[y]
                lo = min(a, b)
                hi = max(a, b)
                ok = True
                for ax in range(3):
                    if tmin[lo, ax] > tmax[hi, ax] or tmin[hi, ax] > tmax[lo, ax]:
                        ok = False
                        break
                if not ok:
                    continue
                if n == cap:
                    cap *= 2
                    grown = np.empty((cap, 2), dtype=np.int64)
                    grown[:n] = out[:n]
                    out = grown
                out[n, 0] = lo
                out[n, 1] = hi
                n += 1
    return out[:n]


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

@njit(cache=True)
def ray_hits(ox, oy, oz, dx, dy, dz, verts, tris, graze):
    """Count triangles crossed by the ray; -1 if any hit is within ``graze``
    (barycentric units) of an edge or vertex."""
    count = 0
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        e1x = verts[i1, 0] - verts[i0, 0]
        e1y = verts[i1, 1] - verts[i0, 1]
        e1z = verts[i1, 2] - verts[i0, 2]
        e2x = verts[i2, 0] - verts[i0, 0]
        e2y = verts[i2, 1] - verts[i0, 1]
        e2z = verts[i2, 2] - verts[i0, 2]
        px, py, pz = _cross(dx, dy, dz, e2x, e2y, e2z)
        det = e1x * px + e1y * py + e1z * pz
        if det == 0.0:
            continue
        inv = 1.0 / det
        sx = ox - verts[i0, 0]
        sy = oy - verts[i0, 1]
        sz = oz - verts[i0, 2]
        u = (sx * px + sy * py + sz * pz) * inv
        qx, qy, qz = _cross(sx, sy, sz, e1x, e1y, e1z)
        v = (dx * qx + dy * qy + dz * qz) * inv
        tt = (e2x * qx + e2y * qy + e2z * qz) * inv
        w = 1.0 - u - v
        if u < -graze or v < -graze or w < -graze or tt < 0.0:
            continue
        if u <= graze or v <= graze or w <= graze:
            return -1
        count += 1
    return count


@njit(cache=True)
def axis_parity_votes(verts, tris, origin, h, dims, graze, jitter):
    """Inside votes per node from axis-aligned rays cast toward +axis.

    Rays are processed per grid line: every triangle whose projection
    covers the line contributes one crossing coordinate. Lines with a
    grazing hit are re-cast with a small deterministic offset.
    """
    l = dims[0]
    m = dims[1]
    n = dims[2]
    votes = np.zeros((l, m, n), dtype=np.int64)
    T = tris.shape[0]
    for axis in range(3):
        u_ax = (axis + 1) % 3
        w_ax = (axis + 2) % 3
        nu = dims[u_ax]
        nw = dims[w_ax]
        na = dims[axis]
        xs = np.empty(T)
        for iu in range(nu):
            for iw in range(nw):
                attempt = 0
                while True:
                    ju = 0.0
                    jw = 0.0
                    if attempt > 0:
                        seed = (iu * 7919 + iw * 104729 + axis * 1299709
                                + attempt * 15485863)
                        ju = jitter * h * (((seed * 2654435761) % 1000003)
                                           / 1000003.0 - 0.5)
                        jw = jitter * h * (((seed * 40503) % 999983)
                                           / 999983.0 - 0.5)
                    cu = origin[u_ax] + iu * h + ju
                    cw = origin[w_ax] + iw * h + jw
                    nx_ = 0
                    grazing = False
                    for t in range(T):
                        au = verts[tris[t, 0], u_ax]
                        aw = verts[tris[t, 0], w_ax]
                        bu = verts[tris[t, 1], u_ax]
                        bw = verts[tris[t, 1], w_ax]
                        cu_ = verts[tris[t, 2], u_ax]
                        cw_ = verts[tris[t, 2], w_ax]
                        if cu < min(au, min(bu, cu_)) - 1e-12 * h:
                            continue
                        if cu > max(au, max(bu, cu_)) + 1e-12 * h:
                            continue
                        if cw < min(aw, min(bw, cw_)) - 1e-12 * h:
                            continue
                        if cw > max(aw, max(bw, cw_)) + 1e-12 * h:
                            continue
                        det = (bu - au) * (cw_ - aw) - (bw - aw) * (cu_ - au)
                        if det == 0.0:
                            continue
                        l1 = ((bu - cu) * (cw_ - cw) - (bw - cw) * (cu_ - cu)) / det
                        l2 = ((cu_ - cu) * (aw - cw) - (cw_ - cw) * (au - cu)) / det
                        l3 = 1.0 - l1 - l2
                        if l1 < -graze or l2 < -graze or l3 < -graze:
                            continue
                        if l1 <= graze or l2 <= graze or l3 <= graze:
                            grazing = True
                            break
                        xs[nx_] = (l1 * verts[tris[t, 0], axis]
                                   + l2 * verts[tris[t, 1], axis]
                                   + l3 * verts[tris[t, 2], axis])
                        nx_ += 1
                    if grazing and attempt < 8:
                        attempt += 1
                        continue
                    break
                for ia in range(na):
                    xa = origin[axis] + ia * h
                    c = 0
                    for s in range(nx_):
                        if xs[s] > xa:
                            c += 1
                    if c % 2 == 1:
                        if axis == 0:
                            votes[ia, iu, iw] += 1
                        elif axis == 1:
                            votes[iw, ia, iu] += 1
                        else:
                            votes[iu, iw, ia] += 1
    return votes


# ---------------------------------------------------------------------------
# bounding volume hierarchy for nearest-triangle queries
# ---------------------------------------------------------------------------

@njit(cache=True)
def build_bvh(tmin, tmax, leaf_size):
    T = tmin.shape[0]
    cen = 0.5 * (tmin + tmax)
    order = np.arange(T)
    cap = 2 * T + 1
    bmin = np.empty((cap, 3))
    bmax = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    first = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    stack = np.empty(cap, dtype=np.int64)
    nn = 1
    first[0] = 0
    count[0] = T
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        nd = stack[sp]
        s = first[nd]
        e = s + count[nd]
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for x in range(s, e):
                t = order[x]
                lo = min(lo, tmin[t, a])
                hi = max(hi, tmax[t, a])
            bmin[nd, a] = lo
            bmax[nd, a] = hi
        if e - s <= leaf_size:
            continue
        ax = 0
        best = -1.0
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for x in range(s, e):
                v = cen[order[x], a]
                lo = min(lo, v)
                hi = max(hi, v)
            if hi - lo > best:
                best = hi - lo
                ax = a
        keys = np.empty(e - s)
        for x in range(s, e):
            keys[x - s] = cen[order[x], ax]
        perm = np.argsort(keys, kind="mergesort")
        seg = order[s:e].copy()
        for x in range(e - s):
            order[s + x] = seg[perm[x]]
        mid = (s + e) // 2
        l = nn
        r = nn + 1
        nn += 2
        left[nd] = l
        right[nd] = r
        first[l] = s
        count[l] = mid - s
        first[r] = mid
        count[r] = e - mid
        stack[sp] = l
        sp += 1
        stack[sp] = r
        sp += 1
    return order, bmin[:nn].copy(), bmax[:nn].copy(), left[:nn].copy(), right[:nn].copy(), first[:nn].copy(), count[:nn].copy()


@njit(cache=True)
def _box_d2(px, py, pz, bmin, bmax, nd):
    d = 0.0
    for a in range(3):
        v = px if a == 0 else (py if a == 1 else pz)
        if v < bmin[nd, a]:
            d += (bmin[nd, a] - v) ** 2
        elif v > bmax[nd, a]:
            d += (v - bmax[nd, a]) ** 2
    return d


@njit(cache=True)
def closest_bvh(points, verts, tris, order, bmin, bmax, left, right, first, count,
                out_d, out_t, out_c, out_b, out_r):
    stack = np.empty(128, dtype=np.int64)
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        best = np.inf
        bt = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            if _box_d2(px, py, pz, bmin, bmax, nd) > best:
                continue
            if left[nd] < 0:
                for x in range(first[nd], first[nd] + count[nd]):
                    t = order[x]
                    d2, u, v, w, reg, qx, qy, qz = _tri_dist2(px, py, pz, verts, tris, t)
                    if d2 < best or (d2 == best and t < bt):
                        best = d2
                        bt = t
                        out_b[q, 0] = u
                        out_b[q, 1] = v
                        out_b[q, 2] = w
                        out_r[q] = reg
                        out_c[q, 0] = qx
                        out_c[q, 1] = qy
                        out_c[q, 2] = qz
                continue
            l = left[nd]
            r = right[nd]
            dl = _box_d2(px, py, pz, bmin, bmax, l)
            dr = _box_d2(px, py, pz, bmin, bmax, r)
            # push the farther child first so the nearer one is popped next
            if dl <= dr:
                stack[sp] = r
                stack[sp + 1] = l
            else:
                stack[sp] = l
                stack[sp + 1] = r
            sp += 2
        out_t[q] = bt
        out_d[q] = math.sqrt(best)


@njit(cache=True)
def closest_candidates(points, verts, tris, start, items, boxd, radius, warm,
                       out_d, out_t, out_c, out_b, out_r, need):
    """Nearest triangle among per-point candidate lists.

    Candidates of point q are items[start[q]:start[q+1]], sorted by ``boxd``,
    a fixed lower bound on their distance; they must cover every triangle
    whose bound is within ``radius[q]``. ``warm[q]`` (or -1) is tried first.
    ``need[q]`` is set when the answer is not certified.
    """
    for q in range(points.shape[0]):
        px = points[q, 0]
        py = points[q, 1]
        pz = points[q, 2]
        best = np.inf
        bt = -1
        w0 = warm[q]
        if w0 >= 0:
            d2, u, v, w, reg, qx, qy, qz = _tri_dist2(px, py, pz, verts, tris, w0)
            best = d2
            bt = w0
            out_b[q, 0] = u
            out_b[q, 1] = v
            out_b[q, 2] = w
            out_r[q] = reg
            out_c[q, 0] = qx
            out_c[q, 1] = qy
            out_c[q, 2] = qz
        for s in range(start[q], start[q + 1]):
            if boxd[s] * boxd[s] > best:
                break
            t = items[s]
            if t == w0:
                continue
            # tight box of the current triangle
            g2 = 0.0
            for a in range(3):
                x = px if a == 0 else (py if a == 1 else pz)
                c0 = verts[tris[t, 0], a]
                c1 = verts[tris[t, 1], a]
                c2 = verts[tris[t, 2], a]
                lo = min(c0, min(c1, c2))
                hi = max(c0, max(c1, c2))
                if x < lo:
                    g2 += (lo - x) * (lo - x)
                elif x > hi:
                    g2 += (x - hi) * (x - hi)
            if g2 > best:
                continue
            d2, u, v, w, reg, qx, qy, qz = _tri_dist2(px, py, pz, verts, tris, t)
            if d2 < best or (d2 == best and t < bt):
                best = d2
                bt = t
                out_b[q, 0] = u
                out_b[q, 1] = v
                out_b[q, 2] = w
                out_r[q] = reg
                out_c[q, 0] = qx
                out_c[q, 1] = qy
                out_c[q, 2] = qz
        out_t[q] = bt
        out_d[q] = math.sqrt(best)
        need[q] = bt < 0 or math.sqrt(best) > radius[q]
