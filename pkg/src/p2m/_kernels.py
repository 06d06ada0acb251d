"""Numba kernels backing the hot paths: exact primitive distances, incremental
convex-polytope clipping, Voronoi cell construction, flooding inspection,
KD-tree / R-tree / BVH traversal and the batched query pipelines.

All kernels are deterministic (no fastmath) and release the GIL where they are
driven from thread pools.
"""
import math

import numpy as np
from numba import njit

# closest-point feature codes shared by segment and triangle routines
FEAT_V0 = 0
FEAT_V1 = 1
FEAT_V2 = 2
FEAT_E01 = 3
FEAT_E12 = 4
FEAT_E20 = 5
FEAT_INT = 6

# result primitive kinds (tie-break order: vertex < edge < face)
KIND_VERTEX = 0
KIND_EDGE = 1
KIND_FACE = 2


# ---------------------------------------------------------------------------
# scalar primitive distances
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def closest_on_segment(qx, qy, qz, ax, ay, az, bx, by, bz):
    """Closest point on segment ab to q. Returns (cx, cy, cz, feature) with
    feature 0 = endpoint a, 1 = endpoint b, 2 = interior."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    t_num = (qx - ax) * abx + (qy - ay) * aby + (qz - az) * abz
    denom = abx * abx + aby * aby + abz * abz
    if denom <= 0.0 or t_num <= 0.0:
        return ax, ay, az, FEAT_V0
    if t_num >= denom:
        return bx, by, bz, FEAT_V1
    t = t_num / denom
    return ax + t * abx, ay + t * aby, az + t * abz, FEAT_V2


@njit(cache=True, nogil=True, inline="always")
def closest_on_triangle(qx, qy, qz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle abc to q (Ericson's region walk).
    Returns (px, py, pz, feature)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = qx - ax
    apy = qy - ay
    apz = qz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, FEAT_V0

    bpx = qx - bx
    bpy = qy - by
    bpz = qz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, FEAT_V1

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz, FEAT_E01

    cpx = qx - cx
    cpy = qy - cy
    cpz = qz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, FEAT_V2

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, FEAT_E20

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz), FEAT_E12

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w,
            ay + aby * v + acy * w,
            az + abz * v + acz * w, FEAT_INT)


@njit(cache=True, nogil=True, inline="always")
def dist_point_line_sq(px, py, pz, ox, oy, oz, dx, dy, dz):
    """Squared perpendicular distance from p to the line (o, unit d)."""
    wx = px - ox
    wy = py - oy
    wz = pz - oz
    t = wx * dx + wy * dy + wz * dz
    rx = wx - t * dx
    ry = wy - t * dy
    rz = wz - t * dz
    return rx * rx + ry * ry + rz * rz


@njit(cache=True, nogil=True, inline="always")
def better_candidate(d1, k1, i1, d2, k2, i2):
    """Repo-wide candidate comparator: smaller distance wins outside a tiny
    relative tie band; ties prefer vertex < edge < face, then smaller id."""
    eps = 1e-12 * (d1 + d2)
    if d1 < d2 - eps:
        return True
    if d2 < d1 - eps:
        return False
    if k1 != k2:
        return k1 < k2
    if i1 != i2:
        return i1 < i2
    # same primitive reached via different faces: keep the smaller rounding
    # variant so the result is independent of evaluation order
    return d1 < d2


# ---------------------------------------------------------------------------
# convex polytope: cube seed + incremental half-space clipping
# ---------------------------------------------------------------------------

# plane source tags: >= 0 bisector(vertex id), -1..-6 box faces, -7 vertical space
TAG_BOX_BASE = -1
TAG_VSPACE = -7


@njit(cache=True, nogil=True)
def init_cube(C, CP, E, P, Ptag, cx, cy, cz, h):
    """Fill work buffers with the axis-aligned cube [center +- h]^3.
    Returns (nc, ne, npl)."""
    # planes: +x,-x,+y,-y,+z,-z with convention n.x <= d
    P[0, 0] = 1.0; P[0, 1] = 0.0; P[0, 2] = 0.0; P[0, 3] = cx + h
    P[1, 0] = -1.0; P[1, 1] = 0.0; P[1, 2] = 0.0; P[1, 3] = -(cx - h)
    P[2, 0] = 0.0; P[2, 1] = 1.0; P[2, 2] = 0.0; P[2, 3] = cy + h
    P[3, 0] = 0.0; P[3, 1] = -1.0; P[3, 2] = 0.0; P[3, 3] = -(cy - h)
    P[4, 0] = 0.0; P[4, 1] = 0.0; P[4, 2] = 1.0; P[4, 3] = cz + h
    P[5, 0] = 0.0; P[5, 1] = 0.0; P[5, 2] = -1.0; P[5, 3] = -(cz - h)
    for i in range(6):
        Ptag[i] = TAG_BOX_BASE - i
    k = 0
    for sx in range(2):
        for sy in range(2):
            for sz in range(2):
                C[k, 0] = cx + (h if sx == 1 else -h)
                C[k, 1] = cy + (h if sy == 1 else -h)
                C[k, 2] = cz + (h if sz == 1 else -h)
                CP[k, 0] = 0 if sx == 1 else 1
                CP[k, 1] = 2 if sy == 1 else 3
                CP[k, 2] = 4 if sz == 1 else 5
                k += 1
    # edges between corners differing in exactly one bit
    ne = 0
    for a in range(8):
        for b in range(a + 1, 8):
            diff = a ^ b
            if diff == 1 or diff == 2 or diff == 4:
                E[ne, 0] = a
                E[ne, 1] = b
                ne += 1
    return 8, ne, 6


@njit(cache=True, nogil=True)
def clip_poly(C, CP, E, nc, ne, nx, ny, nz, d, pid, tol,
              side, newidx, C2, CP2, E2):
    """Clip polytope (C, CP, E) by half-space n.x <= d (plane id `pid`).

    Corners with signed value within `tol` of the plane are kept.  Results are
    written into (C2, CP2, E2); the caller swaps buffers on a cut.

    Returns (nc2, ne2, status): status 0 = untouched, 1 = cut, 2 = empty,
    3 = scratch overflow.
    """
    cap_c = C2.shape[0]
    cap_e = E2.shape[0]
    nkeep = 0
    for i in range(nc):
        s = nx * C[i, 0] + ny * C[i, 1] + nz * C[i, 2] - d
        side[i] = s
        if s <= tol:
            nkeep += 1
    if nkeep == nc:
        return nc, ne, 0
    if nkeep == 0:
        return 0, 0, 2

    k = 0
    for i in range(nc):
        if side[i] <= tol:
            newidx[i] = k
            C2[k, 0] = C[i, 0]
            C2[k, 1] = C[i, 1]
            C2[k, 2] = C[i, 2]
            CP2[k, 0] = CP[i, 0]
            CP2[k, 1] = CP[i, 1]
            CP2[k, 2] = CP[i, 2]
            k += 1
        else:
            newidx[i] = -1
    nc2 = k
    first_new = k
    ne2 = 0
    for j in range(ne):
        a = E[j, 0]
        b = E[j, 1]
        ka = newidx[a]
        kb = newidx[b]
        if ka >= 0 and kb >= 0:
            if ne2 >= cap_e:
                return 0, 0, 3
            E2[ne2, 0] = ka
            E2[ne2, 1] = kb
            ne2 += 1
        elif ka >= 0 or kb >= 0:
            if ka >= 0:
                keep = a
                drop = b
                kk = ka
            else:
                keep = b
                drop = a
                kk = kb
            sa = side[keep]
            sb = side[drop]
            t = sa / (sa - sb)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            if nc2 >= cap_c or ne2 >= cap_e:
                return 0, 0, 3
            C2[nc2, 0] = C[keep, 0] + t * (C[drop, 0] - C[keep, 0])
            C2[nc2, 1] = C[keep, 1] + t * (C[drop, 1] - C[keep, 1])
            C2[nc2, 2] = C[keep, 2] + t * (C[drop, 2] - C[keep, 2])
            # the crossed edge's two defining planes are the ones shared by
            # its endpoints; degenerate corners may record fewer, fall back
            p0 = -2147483647
            p1 = -2147483647
            cnt = 0
            for u in range(3):
                pu = CP[keep, u]
                for w in range(3):
                    if CP[drop, w] == pu:
                        if cnt == 0:
                            p0 = pu
                        elif cnt == 1:
                            p1 = pu
                        cnt += 1
                        break
            if cnt < 2:
                if cnt == 0:
                    p0 = CP[keep, 0]
                if CP[keep, 1] != p0:
                    p1 = CP[keep, 1]
                else:
                    p1 = CP[keep, 2]
            CP2[nc2, 0] = p0
            CP2[nc2, 1] = p1
            CP2[nc2, 2] = pid
            E2[ne2, 0] = kk
            E2[ne2, 1] = nc2
            ne2 += 1
            nc2 += 1
        # else: edge fully clipped away

    if nc2 < 3:
        return 0, 0, 2
    nnew = nc2 - first_new
    if nnew >= 2:
        # connect the new cut-face corners into a ring, ordered by angle
        # about their centroid within the cut plane
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for i in range(first_new, nc2):
            gx += C2[i, 0]
            gy += C2[i, 1]
            gz += C2[i, 2]
        gx /= nnew
        gy /= nnew
        gz /= nnew
        anx = abs(nx)
        any_ = abs(ny)
        anz = abs(nz)
        if anx <= any_ and anx <= anz:
            ux, uy, uz = 0.0, -nz, ny
        elif any_ <= anz:
            ux, uy, uz = nz, 0.0, -nx
        else:
            ux, uy, uz = -ny, nx, 0.0
        ul = math.sqrt(ux * ux + uy * uy + uz * uz)
        ux /= ul
        uy /= ul
        uz /= ul
        vx = ny * uz - nz * uy
        vy = nz * ux - nx * uz
        vz = nx * uy - ny * ux
        ang = np.empty(nnew, np.float64)
        for i in range(nnew):
            rx = C2[first_new + i, 0] - gx
            ry = C2[first_new + i, 1] - gy
            rz = C2[first_new + i, 2] - gz
            ang[i] = math.atan2(rx * vx + ry * vy + rz * vz,
                                rx * ux + ry * uy + rz * uz)
        order = np.argsort(ang)
        if nnew == 2:
            if ne2 >= cap_e:
                return 0, 0, 3
            E2[ne2, 0] = first_new + order[0]
            E2[ne2, 1] = first_new + order[1]
            ne2 += 1
        else:
            for i in range(nnew):
                if ne2 >= cap_e:
                    return 0, 0, 3
                E2[ne2, 0] = first_new + order[i]
                E2[ne2, 1] = first_new + order[(i + 1) % nnew]
                ne2 += 1
    return nc2, ne2, 1


@njit(cache=True, nogil=True)
def poly_volume(C, nc, P, npl, tol_inc):
    """Volume of the convex polytope by fanning each planar facet about the
    polytope centroid.  Facet membership is geometric: a corner lies on a
    plane if its signed value is within tol_inc."""
    if nc < 4:
        return 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for i in range(nc):
        gx += C[i, 0]
        gy += C[i, 1]
        gz += C[i, 2]
    gx /= nc
    gy /= nc
    gz /= nc
    idx = np.empty(nc, np.int64)
    ang = np.empty(nc, np.float64)
    vol = 0.0
    for p in range(npl):
        nx = P[p, 0]
        ny = P[p, 1]
        nz = P[p, 2]
        d = P[p, 3]
        cnt = 0
        for i in range(nc):
            s = nx * C[i, 0] + ny * C[i, 1] + nz * C[i, 2] - d
            if abs(s) <= tol_inc:
                idx[cnt] = i
                cnt += 1
        if cnt < 3:
            continue
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for i in range(cnt):
            fx += C[idx[i], 0]
            fy += C[idx[i], 1]
            fz += C[idx[i], 2]
        fx /= cnt
        fy /= cnt
        fz /= cnt
        anx = abs(nx)
        any_ = abs(ny)
        anz = abs(nz)
        if anx <= any_ and anx <= anz:
            ux, uy, uz = 0.0, -nz, ny
        elif any_ <= anz:
            ux, uy, uz = nz, 0.0, -nx
        else:
            ux, uy, uz = -ny, nx, 0.0
        ul = math.sqrt(ux * ux + uy * uy + uz * uz)
        ux /= ul
        uy /= ul
        uz /= ul
        vx = ny * uz - nz * uy
        vy = nz * ux - nx * uz
        vz = nx * uy - ny * ux
        for i in range(cnt):
            rx = C[idx[i], 0] - fx
            ry = C[idx[i], 1] - fy
            rz = C[idx[i], 2] - fz
            ang[i] = math.atan2(rx * vx + ry * vy + rz * vz,
                                rx * ux + ry * uy + rz * uz)
        order = np.argsort(ang[:cnt])
        # fan of tets (g, f, c_i, c_{i+1}); orientation given by outward n
        for i in range(cnt):
            a = idx[order[i]]
            b = idx[order[(i + 1) % cnt]]
            ax = C[a, 0] - gx
            ay = C[a, 1] - gy
            az = C[a, 2] - gz
            bx = C[b, 0] - gx
            by = C[b, 1] - gy
            bz = C[b, 2] - gz
            ex = fx - gx
            ey = fy - gy
            ez = fz - gz
            vol += abs(ex * (ay * bz - az * by)
                       + ey * (az * bx - ax * bz)
                       + ez * (ax * by - ay * bx)) / 6.0
    return vol


# ---------------------------------------------------------------------------
# Voronoi cell construction (security-radius bisector clipping)
# ---------------------------------------------------------------------------

CELL_CAP_C = 16384  # scratch corner capacity per cell
CELL_CAP_E = 32768  # scratch edge capacity
CELL_CAP_P = 4096   # plane capacity (open meshes grow huge boundary cells)


@njit(cache=True)
def build_cells_chunk(pts, vids, cand_idx, cand_dist, cx0, cy0, cz0, M, tol,
                      out_C, out_CP, out_E, out_P, out_Ptag, out_vol,
                      nc_arr, ne_arr, npl_arr, status,
                      Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side, newidx):
    """Build bounded Voronoi cells for the vertices listed in `vids`.

    Candidates (cand_idx/cand_dist, self included) must be sorted by
    increasing distance.  Clipping of vertex v stops once the next candidate
    is farther than twice the distance from v to the farthest surviving
    corner (security radius).

    Per-vertex status: 0 certified by the security radius, 1 candidate list
    exhausted before certification (the cell is still written; the caller
    certifies it geometrically), 2 duplicate point, 3 overflow.  Outputs are
    packed sequentially; nc/ne/npl hold counts and the packed offsets are
    the running sums (computed by the caller).
    """
    nv = vids.shape[0]
    kcand = cand_idx.shape[1]
    coff = 0
    eoff = 0
    poff = 0
    tol_inc = tol * 100.0
    for u in range(nv):
        vi = vids[u]
        px = pts[vi, 0]
        py = pts[vi, 1]
        pz = pts[vi, 2]
        nc, ne, npl = init_cube(Ca, CPa, Ea, P, Ptag, cx0, cy0, cz0, M)
        use_a = True
        # current security radius bound
        r2 = 0.0
        for i in range(nc):
            dx = Ca[i, 0] - px
            dy = Ca[i, 1] - py
            dz = Ca[i, 2] - pz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > r2:
                r2 = d2
        st = 1  # assume we run out of candidates
        for c in range(kcand):
            j = cand_idx[u, c]
            if j == vi:
                if c == kcand - 1:
                    st = 0 if kcand >= pts.shape[0] else 1
                continue
            dj = cand_dist[u, c]
            if dj <= 0.0:
                st = 2
                break
            if dj * dj > 4.0 * r2:
                st = 0
                break
            # bisector half-space keeping v: n = (pj - pv)/|.|, n.x <= n.mid
            qx = pts[j, 0]
            qy = pts[j, 1]
            qz = pts[j, 2]
            nx = (qx - px) / dj
            ny = (qy - py) / dj
            nz = (qz - pz) / dj
            dmid = nx * (px + qx) * 0.5 + ny * (py + qy) * 0.5 + nz * (pz + qz) * 0.5
            if npl >= CELL_CAP_P:
                st = 3
                break
            if use_a:
                nc2, ne2, code = clip_poly(Ca, CPa, Ea, nc, ne, nx, ny, nz,
                                           dmid, npl, tol, side, newidx,
                                           Cb, CPb, Eb)
            else:
                nc2, ne2, code = clip_poly(Cb, CPb, Eb, nc, ne, nx, ny, nz,
                                           dmid, npl, tol, side, newidx,
                                           Ca, CPa, Ea)
            if code == 3:
                st = 3
                break
            if code == 2:
                # a Voronoi cell always contains its generator; numerical
                # emptiness is treated as an overflow-grade failure
                st = 3
                break
            if code == 1:
                use_a = not use_a
                nc = nc2
                ne = ne2
                P[npl, 0] = nx
                P[npl, 1] = ny
                P[npl, 2] = nz
                P[npl, 3] = dmid
                Ptag[npl] = j
                npl += 1
                r2 = 0.0
                if use_a:
                    for i in range(nc):
                        dx = Ca[i, 0] - px
                        dy = Ca[i, 1] - py
                        dz = Ca[i, 2] - pz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > r2:
                            r2 = d2
                else:
                    for i in range(nc):
                        dx = Cb[i, 0] - px
                        dy = Cb[i, 1] - py
                        dz = Cb[i, 2] - pz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > r2:
                            r2 = d2
            if c == kcand - 1 and kcand >= pts.shape[0]:
                st = 0
        status[u] = st
        if st == 2 or st == 3:
            nc_arr[u] = 0
            ne_arr[u] = 0
            npl_arr[u] = 0
            continue
        if (coff + nc > out_C.shape[0] or eoff + ne > out_E.shape[0]
                or poff + npl > out_P.shape[0]):
            status[u] = 3
            nc_arr[u] = 0
            ne_arr[u] = 0
            npl_arr[u] = 0
            continue
        if use_a:
            for i in range(nc):
                out_C[coff + i, 0] = Ca[i, 0]
                out_C[coff + i, 1] = Ca[i, 1]
                out_C[coff + i, 2] = Ca[i, 2]
                out_CP[coff + i, 0] = CPa[i, 0]
                out_CP[coff + i, 1] = CPa[i, 1]
                out_CP[coff + i, 2] = CPa[i, 2]
            for i in range(ne):
                out_E[eoff + i, 0] = Ea[i, 0]
                out_E[eoff + i, 1] = Ea[i, 1]
            out_vol[u] = poly_volume(Ca, nc, P, npl, tol_inc)
        else:
            for i in range(nc):
                out_C[coff + i, 0] = Cb[i, 0]
                out_C[coff + i, 1] = Cb[i, 1]
                out_C[coff + i, 2] = Cb[i, 2]
                out_CP[coff + i, 0] = CPb[i, 0]
                out_CP[coff + i, 1] = CPb[i, 1]
                out_CP[coff + i, 2] = CPb[i, 2]
            for i in range(ne):
                out_E[eoff + i, 0] = Eb[i, 0]
                out_E[eoff + i, 1] = Eb[i, 1]
            out_vol[u] = poly_volume(Cb, nc, P, npl, tol_inc)
        for i in range(npl):
            out_P[poff + i, 0] = P[i, 0]
            out_P[poff + i, 1] = P[i, 1]
            out_P[poff + i, 2] = P[i, 2]
            out_P[poff + i, 3] = P[i, 3]
            out_Ptag[poff + i] = Ptag[i]
        nc_arr[u] = nc
        ne_arr[u] = ne
        npl_arr[u] = npl
        coff += nc
        eoff += ne
        poff += npl


@njit(cache=True)
def extend_cell(px, py, pz, C0, CP0, E0, P0, Ptag0, cut_ids, pts, tol,
                Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side, newidx):
    """Continue clipping an existing cell by additional bisector half-spaces
    (half-space intersection is order independent, so previously applied
    planes never need revisiting).

    Returns (C, CP, E, P, Ptag, volume, status); status 0 ok, 2 duplicate
    point, 3 overflow.
    """
    nc = C0.shape[0]
    ne = E0.shape[0]
    npl = P0.shape[0]
    empty = np.empty((0, 3))
    emptyi = np.empty((0, 3), np.int64)
    emptye = np.empty((0, 2), np.int64)
    emptyp = np.empty((0, 4))
    emptyt = np.empty(0, np.int64)
    if nc > Ca.shape[0] or ne > Ea.shape[0] or npl > P.shape[0]:
        return empty, emptyi, emptye, emptyp, emptyt, 0.0, 3
    for i in range(nc):
        Ca[i, 0] = C0[i, 0]
        Ca[i, 1] = C0[i, 1]
        Ca[i, 2] = C0[i, 2]
        CPa[i, 0] = CP0[i, 0]
        CPa[i, 1] = CP0[i, 1]
        CPa[i, 2] = CP0[i, 2]
    for i in range(ne):
        Ea[i, 0] = E0[i, 0]
        Ea[i, 1] = E0[i, 1]
    for i in range(npl):
        P[i, 0] = P0[i, 0]
        P[i, 1] = P0[i, 1]
        P[i, 2] = P0[i, 2]
        P[i, 3] = P0[i, 3]
        Ptag[i] = Ptag0[i]
    use_a = True
    st = 0
    for c in range(cut_ids.shape[0]):
        j = cut_ids[c]
        dx = pts[j, 0] - px
        dy = pts[j, 1] - py
        dz = pts[j, 2] - pz
        dj = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dj <= 0.0:
            st = 2
            break
        nx = dx / dj
        ny = dy / dj
        nz = dz / dj
        dmid = (nx * (pts[j, 0] + px) + ny * (pts[j, 1] + py)
                + nz * (pts[j, 2] + pz)) * 0.5
        if npl >= CELL_CAP_P:
            st = 3
            break
        if use_a:
            nc2, ne2, code = clip_poly(Ca, CPa, Ea, nc, ne, nx, ny, nz,
                                       dmid, npl, tol, side, newidx,
                                       Cb, CPb, Eb)
        else:
            nc2, ne2, code = clip_poly(Cb, CPb, Eb, nc, ne, nx, ny, nz,
                                       dmid, npl, tol, side, newidx,
                                       Ca, CPa, Ea)
        if code == 3 or code == 2:
            # a cell always contains its generator, so numerical emptiness
            # is treated like an overflow-grade failure
            st = 3
            break
        if code == 1:
            use_a = not use_a
            nc = nc2
            ne = ne2
            P[npl, 0] = nx
            P[npl, 1] = ny
            P[npl, 2] = nz
            P[npl, 3] = dmid
            Ptag[npl] = j
            npl += 1
    if st != 0:
        return empty, emptyi, emptye, emptyp, emptyt, 0.0, st
    Cc = Ca if use_a else Cb
    CPc = CPa if use_a else CPb
    Ec = Ea if use_a else Eb
    vol = poly_volume(Cc, nc, P, npl, tol * 100.0)
    return (Cc[:nc].copy(), CPc[:nc].copy(), Ec[:ne].copy(),
            P[:npl].copy(), Ptag[:npl].copy(), vol, 0)


@njit(cache=True)
def plane_neighbors(C, nc, P, Ptag, npl, tol_inc, out):
    """Vertex tags of bisector planes with at least one incident corner.
    Returns count written into `out`."""
    cnt = 0
    for p in range(npl):
        if Ptag[p] < 0:
            continue
        nx = P[p, 0]
        ny = P[p, 1]
        nz = P[p, 2]
        d = P[p, 3]
        for i in range(nc):
            s = nx * C[i, 0] + ny * C[i, 1] + nz * C[i, 2] - d
            if abs(s) <= tol_inc:
                out[cnt] = Ptag[p]
                cnt += 1
                break
    return cnt


# ---------------------------------------------------------------------------
# interception filters + flooding inspection
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _load_cell(cell_C, cell_CP, cell_E, c_off, c_n, e_off, e_n,
               Ca, CPa, Ea):
    for i in range(c_n):
        Ca[i, 0] = cell_C[c_off + i, 0]
        Ca[i, 1] = cell_C[c_off + i, 1]
        Ca[i, 2] = cell_C[c_off + i, 2]
        CPa[i, 0] = cell_CP[c_off + i, 0]
        CPa[i, 1] = cell_CP[c_off + i, 1]
        CPa[i, 2] = cell_CP[c_off + i, 2]
    for i in range(e_n):
        Ea[i, 0] = cell_E[e_off + i, 0]
        Ea[i, 1] = cell_E[e_off + i, 1]
    return c_n, e_n


@njit(cache=True, nogil=True)
def _clip_by_planes(planes, npl, tol, nc, ne, Ca, CPa, Ea, Cb, CPb, Eb,
                    side, newidx):
    """Clip the polytope in the A buffers by `planes` (npl x 4).  Returns
    (nc, ne, in_a, empty) where in_a tells which buffer holds the result."""
    use_a = True
    pid_base = 1000000  # vertical-space plane ids, distinct from cell planes
    for p in range(npl):
        nx = planes[p, 0]
        ny = planes[p, 1]
        nz = planes[p, 2]
        d = planes[p, 3]
        if use_a:
            nc2, ne2, code = clip_poly(Ca, CPa, Ea, nc, ne, nx, ny, nz, d,
                                       pid_base + p, tol, side, newidx,
                                       Cb, CPb, Eb)
        else:
            nc2, ne2, code = clip_poly(Cb, CPb, Eb, nc, ne, nx, ny, nz, d,
                                       pid_base + p, tol, side, newidx,
                                       Ca, CPa, Ea)
        if code == 2 or code == 3:
            return 0, 0, use_a, True
        if code == 1:
            use_a = not use_a
            nc = nc2
            ne = ne2
    return nc, ne, use_a, False


@njit(cache=True, nogil=True)
def test_intercept_edge(vx, vy, vz, ox, oy, oz, dx, dy, dz,
                        planes, npl, margin, tol,
                        nc, ne, Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box):
    """Interception filter for vertex v against an edge with line (o, d).

    The cell polytope must already be loaded in the A buffers.  Returns True
    if v may intercept (filter could not exclude); fills `box` (6,) with the
    bounding box of ConvexPoly(v, e) when non-empty.
    """
    nc, ne, in_a, empty = _clip_by_planes(planes, npl, tol, nc, ne,
                                          Ca, CPa, Ea, Cb, CPb, Eb,
                                          side, newidx)
    if empty or nc == 0:
        return False
    C = Ca if in_a else Cb
    excl = True
    for i in range(nc):
        xx = C[i, 0]
        xy = C[i, 1]
        xz = C[i, 2]
        rvx = xx - vx
        rvy = xy - vy
        rvz = xz - vz
        dv = math.sqrt(rvx * rvx + rvy * rvy + rvz * rvz)
        dl = math.sqrt(dist_point_line_sq(xx, xy, xz, ox, oy, oz, dx, dy, dz))
        if dv + margin > dl:
            excl = False
            break
    if excl:
        return False
    box[0] = box[1] = box[2] = 1e300
    box[3] = box[4] = box[5] = -1e300
    for i in range(nc):
        for a in range(3):
            if C[i, a] < box[a]:
                box[a] = C[i, a]
            if C[i, a] > box[3 + a]:
                box[3 + a] = C[i, a]
    return True


@njit(cache=True, nogil=True)
def test_intercept_face(vx, vy, vz, fnx, fny, fnz, fd,
                        planes, npl, margin, tol,
                        nc, ne, Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box):
    """Interception filter for vertex v against a face with plane (fn, fd)."""
    nc, ne, in_a, empty = _clip_by_planes(planes, npl, tol, nc, ne,
                                          Ca, CPa, Ea, Cb, CPb, Eb,
                                          side, newidx)
    if empty or nc == 0:
        return False
    C = Ca if in_a else Cb
    excl = True
    for i in range(nc):
        xx = C[i, 0]
        xy = C[i, 1]
        xz = C[i, 2]
        rvx = xx - vx
        rvy = xy - vy
        rvz = xz - vz
        dv = math.sqrt(rvx * rvx + rvy * rvy + rvz * rvz)
        dp = abs(fnx * xx + fny * xy + fnz * xz - fd)
        if dv + margin > dp:
            excl = False
            break
    if excl:
        return False
    box[0] = box[1] = box[2] = 1e300
    box[3] = box[4] = box[5] = -1e300
    for i in range(nc):
        for a in range(3):
            if C[i, a] < box[a]:
                box[a] = C[i, a]
            if C[i, a] > box[3 + a]:
                box[3 + a] = C[i, a]
    return True


@njit(cache=True)
def flood_primitives(pts, prim_seeds, seed_off, prim_planes, plane_off,
                     prim_is_edge, prim_line, prim_faceplane,
                     cell_C, cell_CP, cell_E, c_off, c_n, e_off, e_n,
                     g_off, g_tgt, margin, tol, box_pad,
                     out_v, out_prim, out_box, visited, stamp0, queue,
                     Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box,
                     exhaustive):
    """Flooding inspection over all primitives (edges and faces unified).

    prim_seeds/seed_off: CSR of seed vertex ids per primitive (endpoints for
    an edge, the 3 vertices for a face).  prim_planes/plane_off: CSR of the
    vertical-space planes per primitive.  prim_line holds (o, d) for edges,
    prim_faceplane (n, d) for faces.

    Seeds (incident vertices) are always accepted.  When `exhaustive` is
    true the BFS is replaced by an all-vertices scan (the oracle mode).

    Returns number of rows written, or -1 on output overflow.
    """
    nprim = seed_off.shape[0] - 1
    nv = pts.shape[0]
    cap = out_v.shape[0]
    cnt = 0
    stamp = stamp0
    for p in range(nprim):
        stamp += 1
        s0 = seed_off[p]
        s1 = seed_off[p + 1]
        p0 = plane_off[p]
        npl = plane_off[p + 1] - p0
        planes = prim_planes[p0:p0 + npl]
        is_edge = prim_is_edge[p]
        head = 0
        tail = 0
        if exhaustive:
            for v in range(nv):
                queue[tail] = v
                tail += 1
        else:
            for s in range(s0, s1):
                sv = prim_seeds[s]
                if visited[sv] != stamp:
                    visited[sv] = stamp
                    queue[tail] = sv
                    tail += 1
        while head < tail:
            vi = queue[head]
            head += 1
            incident = False
            for s in range(s0, s1):
                if prim_seeds[s] == vi:
                    incident = True
                    break
            vx = pts[vi, 0]
            vy = pts[vi, 1]
            vz = pts[vi, 2]
            nc, ne = _load_cell(cell_C, cell_CP, cell_E, c_off[vi],
                                c_n[vi], e_off[vi], e_n[vi], Ca, CPa, Ea)
            if is_edge:
                ok = test_intercept_edge(
                    vx, vy, vz,
                    prim_line[p, 0], prim_line[p, 1], prim_line[p, 2],
                    prim_line[p, 3], prim_line[p, 4], prim_line[p, 5],
                    planes, npl, margin, tol, nc, ne,
                    Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box)
            else:
                ok = test_intercept_face(
                    vx, vy, vz,
                    prim_faceplane[p, 0], prim_faceplane[p, 1],
                    prim_faceplane[p, 2], prim_faceplane[p, 3],
                    planes, npl, margin, tol, nc, ne,
                    Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box)
            if incident and not ok:
                # Theorem guarantee: incident vertices always intercept;
                # use a conservative fallback box around v and the seeds
                ok = True
                box[0] = box[3] = vx
                box[1] = box[4] = vy
                box[2] = box[5] = vz
                for s in range(s0, s1):
                    sv = prim_seeds[s]
                    for a in range(3):
                        c = pts[sv, a]
                        if c < box[a]:
                            box[a] = c
                        if c > box[3 + a]:
                            box[3 + a] = c
            if ok:
                if cnt >= cap:
                    return -1
                out_v[cnt] = vi
                out_prim[cnt] = p
                out_box[cnt, 0] = box[0] - box_pad
                out_box[cnt, 1] = box[1] - box_pad
                out_box[cnt, 2] = box[2] - box_pad
                out_box[cnt, 3] = box[3] + box_pad
                out_box[cnt, 4] = box[4] + box_pad
                out_box[cnt, 5] = box[5] + box_pad
                cnt += 1
                if not exhaustive:
                    for g in range(g_off[vi], g_off[vi + 1]):
                        w = g_tgt[g]
                        if visited[w] != stamp:
                            visited[w] = stamp
                            queue[tail] = w
                            tail += 1
    return cnt


# ---------------------------------------------------------------------------
# KD-tree nearest neighbor
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _box_dist2(box, node, qx, qy, qz):
    dx = box[node, 0] - qx
    if dx < 0.0:
        dx = qx - box[node, 3]
        if dx < 0.0:
            dx = 0.0
    dy = box[node, 1] - qy
    if dy < 0.0:
        dy = qy - box[node, 4]
        if dy < 0.0:
            dy = 0.0
    dz = box[node, 2] - qz
    if dz < 0.0:
        dz = qz - box[node, 5]
        if dz < 0.0:
            dz = 0.0
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, nogil=True, inline="always")
def kd_nearest(qx, qy, qz, kd_box, kd_left, kd_right,
               kd_start, kd_end, kd_perm, pts, stack_n, stack_d):
    """Exact nearest vertex (branch and bound on the per-node bounding
    boxes, ties -> smallest id).  Returns (vertex id, squared distance,
    examined node count)."""
    best_d2 = 1e300
    best_id = -1
    nodes = 0
    top = 0
    stack_n[top] = 0
    stack_d[top] = 0.0
    top += 1
    while top > 0:
        top -= 1
        node = stack_n[top]
        lb = stack_d[top]
        if lb > best_d2:
            continue
        while True:
            nodes += 1
            if kd_left[node] < 0:
                for i in range(kd_start[node], kd_end[node]):
                    vid = kd_perm[i]
                    dx = pts[vid, 0] - qx
                    dy = pts[vid, 1] - qy
                    dz = pts[vid, 2] - qz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2 or (d2 == best_d2 and vid < best_id):
                        best_d2 = d2
                        best_id = vid
                break
            l = kd_left[node]
            r = kd_right[node]
            dl = _box_dist2(kd_box, l, qx, qy, qz)
            dr = _box_dist2(kd_box, r, qx, qy, qz)
            if dl <= dr:
                near = l
                dnear = dl
                far = r
                dfar = dr
            else:
                near = r
                dnear = dr
                far = l
                dfar = dl
            if dfar <= best_d2:
                stack_n[top] = far
                stack_d[top] = dfar
                top += 1
            if dnear > best_d2:
                break
            node = near
    return best_id, best_d2, nodes


@njit(cache=True, nogil=True)
def kd_nearest_batch(pts_q, kd_box, kd_left, kd_right,
                     kd_start, kd_end, kd_perm, pts, out_id, out_d, out_nodes,
                     i0, i1):
    stack_n = np.empty(128, np.int64)
    stack_d = np.empty(128, np.float64)
    for i in range(i0, i1):
        vid, d2, nodes = kd_nearest(pts_q[i, 0], pts_q[i, 1], pts_q[i, 2],
                                    kd_box, kd_left, kd_right,
                                    kd_start, kd_end, kd_perm, pts,
                                    stack_n, stack_d)
        out_id[i] = vid
        out_d[i] = math.sqrt(d2)
        out_nodes[i] = nodes


# ---------------------------------------------------------------------------
# R-tree (STR bulk loaded, point containment query)
# ---------------------------------------------------------------------------

@njit(cache=True)
def str_count_nodes(n_entries, fanout):
    if n_entries == 0:
        return 0
    lvl = (n_entries + fanout - 1) // fanout
    tot = lvl
    while lvl > 1:
        lvl = (lvl + fanout - 1) // fanout
        tot += lvl
    return tot


@njit(cache=True)
def str_build_all(boxes, ent_off, fanout,
                  rt_root, nb_box, nb_child, nb_count, nb_leaf, rt_items):
    """STR bulk load of one R-tree per vertex over its interception boxes.

    boxes: (K, 6) global entry boxes; ent_off: (n+1,) CSR offsets.  Nodes are
    appended into the nb_* arrays; rt_items maps leaf slots to global entry
    indices.  Returns total node count.
    """
    nvert = ent_off.shape[0] - 1
    node_cur = 0
    item_cur = 0
    for v in range(nvert):
        b0 = ent_off[v]
        nent = ent_off[v + 1] - b0
        if nent == 0:
            rt_root[v] = -1
            continue
        # --- sort-tile-recursive leaf packing
        perm = np.empty(nent, np.int64)
        cx = np.empty(nent, np.float64)
        for i in range(nent):
            perm[i] = b0 + i
        nleaf = (nent + fanout - 1) // fanout
        s1 = int(math.ceil(nleaf ** (1.0 / 3.0)))
        # sort by x-center
        for i in range(nent):
            cx[i] = boxes[perm[i], 0] + boxes[perm[i], 3]
        o = np.argsort(cx, kind="mergesort")
        perm = perm[o]
        slab = (nent + s1 - 1) // s1
        pos = 0
        while pos < nent:
            hi = min(pos + slab, nent)
            m = hi - pos
            # sort slab by y-center
            cy = np.empty(m, np.float64)
            for i in range(m):
                cy[i] = boxes[perm[pos + i], 1] + boxes[perm[pos + i], 4]
            o2 = np.argsort(cy, kind="mergesort")
            perm[pos:hi] = perm[pos:hi][o2]
            mleaf = (m + fanout - 1) // fanout
            s2 = int(math.ceil(math.sqrt(mleaf)))
            col = (m + s2 - 1) // s2
            p2 = 0
            while p2 < m:
                h2 = min(p2 + col, m)
                m2 = h2 - p2
                cz = np.empty(m2, np.float64)
                for i in range(m2):
                    cz[i] = boxes[perm[pos + p2 + i], 2] + boxes[perm[pos + p2 + i], 5]
                o3 = np.argsort(cz, kind="mergesort")
                perm[pos + p2:pos + h2] = perm[pos + p2:pos + h2][o3]
                p2 = h2
            pos = hi
        # --- emit leaves
        level_first = node_cur
        i = 0
        while i < nent:
            hi = min(i + fanout, nent)
            mnx = 1e300
            mny = 1e300
            mnz = 1e300
            mxx = -1e300
            mxy = -1e300
            mxz = -1e300
            for k in range(i, hi):
                e = perm[k]
                rt_items[item_cur + k] = e
                if boxes[e, 0] < mnx:
                    mnx = boxes[e, 0]
                if boxes[e, 1] < mny:
                    mny = boxes[e, 1]
                if boxes[e, 2] < mnz:
                    mnz = boxes[e, 2]
                if boxes[e, 3] > mxx:
                    mxx = boxes[e, 3]
                if boxes[e, 4] > mxy:
                    mxy = boxes[e, 4]
                if boxes[e, 5] > mxz:
                    mxz = boxes[e, 5]
            nb_box[node_cur, 0] = mnx
            nb_box[node_cur, 1] = mny
            nb_box[node_cur, 2] = mnz
            nb_box[node_cur, 3] = mxx
            nb_box[node_cur, 4] = mxy
            nb_box[node_cur, 5] = mxz
            nb_child[node_cur] = item_cur + i
            nb_count[node_cur] = hi - i
            nb_leaf[node_cur] = 1
            node_cur += 1
            i = hi
        item_cur += nent
        # --- build upper levels over consecutive children
        level_n = node_cur - level_first
        while level_n > 1:
            new_first = node_cur
            i = 0
            while i < level_n:
                hi = min(i + fanout, level_n)
                mnx = 1e300
                mny = 1e300
                mnz = 1e300
                mxx = -1e300
                mxy = -1e300
                mxz = -1e300
                for k in range(i, hi):
                    c = level_first + k
                    if nb_box[c, 0] < mnx:
                        mnx = nb_box[c, 0]
                    if nb_box[c, 1] < mny:
                        mny = nb_box[c, 1]
                    if nb_box[c, 2] < mnz:
                        mnz = nb_box[c, 2]
                    if nb_box[c, 3] > mxx:
                        mxx = nb_box[c, 3]
                    if nb_box[c, 4] > mxy:
                        mxy = nb_box[c, 4]
                    if nb_box[c, 5] > mxz:
                        mxz = nb_box[c, 5]
                nb_box[node_cur, 0] = mnx
                nb_box[node_cur, 1] = mny
                nb_box[node_cur, 2] = mnz
                nb_box[node_cur, 3] = mxx
                nb_box[node_cur, 4] = mxy
                nb_box[node_cur, 5] = mxz
                nb_child[node_cur] = level_first + i
                nb_count[node_cur] = hi - i
                nb_leaf[node_cur] = 0
                node_cur += 1
                i = hi
            level_first = new_first
            level_n = node_cur - new_first
        rt_root[v] = node_cur - 1
    return node_cur


@njit(cache=True, nogil=True)
def rtree_point_query(root, nb_box, nb_child, nb_count, nb_leaf, rt_items,
                      boxes, qx, qy, qz, out, stack):
    """Collect global entry indices whose box contains q (boundary
    inclusive).  Returns count written to `out`."""
    if root < 0:
        return 0
    cnt = 0
    top = 0
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if (qx < nb_box[node, 0] or qy < nb_box[node, 1] or qz < nb_box[node, 2]
                or qx > nb_box[node, 3] or qy > nb_box[node, 4]
                or qz > nb_box[node, 5]):
            continue
        first = nb_child[node]
        if nb_leaf[node] == 1:
            for k in range(first, first + nb_count[node]):
                e = rt_items[k]
                if (qx >= boxes[e, 0] and qy >= boxes[e, 1]
                        and qz >= boxes[e, 2] and qx <= boxes[e, 3]
                        and qy <= boxes[e, 4] and qz <= boxes[e, 5]):
                    out[cnt] = e
                    cnt += 1
        else:
            for k in range(first, first + nb_count[node]):
                stack[top] = k
                top += 1
    return cnt


# ---------------------------------------------------------------------------
# query pipelines
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def p2m_batch(pts_q, kd_box, kd_left, kd_right, kd_start, kd_end,
              kd_perm, verts, edges, faces, face_edges, face_vs,
              rt_root, nb_box, nb_child, nb_count, nb_leaf, rt_items,
              ent_kind, ent_prim, ent_box, gtol,
              out_d, out_kind, out_id, out_c, out_tested, out_nodes, i0, i1):
    """Full P2M query for points i0..i1: nearest vertex by KD-tree, R-tree
    candidate lookup, vertical-space gating, exact clamped distances.

    gtol is the inclusive gating tolerance (1e-10 * M).  out_tested counts
    gate-passed distance evaluations per query.
    """
    kstack_n = np.empty(128, np.int64)
    kstack_d = np.empty(128, np.float64)
    rstack = np.empty(256, np.int64)
    cand = np.empty(8192, np.int64)
    for qi in range(i0, i1):
        qx = pts_q[qi, 0]
        qy = pts_q[qi, 1]
        qz = pts_q[qi, 2]
        v, d2v, nodes = kd_nearest(qx, qy, qz, kd_box, kd_left,
                                   kd_right, kd_start, kd_end, kd_perm, verts,
                                   kstack_n, kstack_d)
        best_d = math.sqrt(d2v)
        best_k = KIND_VERTEX
        best_i = v
        bcx = verts[v, 0]
        bcy = verts[v, 1]
        bcz = verts[v, 2]
        ncand = rtree_point_query(rt_root[v], nb_box, nb_child, nb_count,
                                  nb_leaf, rt_items, ent_box,
                                  qx, qy, qz, cand, rstack)
        tested = 0
        for ci in range(ncand):
            e = cand[ci]
            pid = ent_prim[e]
            if ent_kind[e] == KIND_EDGE:
                a = edges[pid, 0]
                b = edges[pid, 1]
                ax = verts[a, 0]
                ay = verts[a, 1]
                az = verts[a, 2]
                bx = verts[b, 0]
                by = verts[b, 1]
                bz = verts[b, 2]
                ux = bx - ax
                uy = by - ay
                uz = bz - az
                ulen = math.sqrt(ux * ux + uy * uy + uz * uz)
                t = ((qx - ax) * ux + (qy - ay) * uy + (qz - az) * uz) / ulen
                # slab gate: projection within the endpoint planes
                if t < -gtol or t > ulen + gtol:
                    continue
                tested += 1
                cx, cy, cz, feat = closest_on_segment(qx, qy, qz, ax, ay, az,
                                                      bx, by, bz)
                dx = qx - cx
                dy = qy - cy
                dz = qz - cz
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if feat == FEAT_V0:
                    k = KIND_VERTEX
                    i = a
                elif feat == FEAT_V1:
                    k = KIND_VERTEX
                    i = b
                else:
                    k = KIND_EDGE
                    i = pid
                if better_candidate(d, k, i, best_d, best_k, best_i):
                    best_d = d
                    best_k = k
                    best_i = i
                    bcx = cx
                    bcy = cy
                    bcz = cz
            else:
                # face: gate against the three vertical-space planes
                if (face_vs[pid, 0, 0] * qx + face_vs[pid, 0, 1] * qy
                        + face_vs[pid, 0, 2] * qz - face_vs[pid, 0, 3] > gtol):
                    continue
                if (face_vs[pid, 1, 0] * qx + face_vs[pid, 1, 1] * qy
                        + face_vs[pid, 1, 2] * qz - face_vs[pid, 1, 3] > gtol):
                    continue
                if (face_vs[pid, 2, 0] * qx + face_vs[pid, 2, 1] * qy
                        + face_vs[pid, 2, 2] * qz - face_vs[pid, 2, 3] > gtol):
                    continue
                tested += 1
                a = faces[pid, 0]
                b = faces[pid, 1]
                c = faces[pid, 2]
                cx, cy, cz, feat = closest_on_triangle(
                    qx, qy, qz,
                    verts[a, 0], verts[a, 1], verts[a, 2],
                    verts[b, 0], verts[b, 1], verts[b, 2],
                    verts[c, 0], verts[c, 1], verts[c, 2])
                dx = qx - cx
                dy = qy - cy
                dz = qz - cz
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                k, i = canonical_from_face(pid, feat, faces, face_edges)
                if better_candidate(d, k, i, best_d, best_k, best_i):
                    best_d = d
                    best_k = k
                    best_i = i
                    bcx = cx
                    bcy = cy
                    bcz = cz
        out_d[qi] = best_d
        out_kind[qi] = best_k
        out_id[qi] = best_i
        out_c[qi, 0] = bcx
        out_c[qi, 1] = bcy
        out_c[qi, 2] = bcz
        out_tested[qi] = tested
        out_nodes[qi] = nodes


@njit(cache=True, nogil=True, inline="always")
def canonical_from_face(pid, feat, faces, face_edges):
    if feat == FEAT_INT:
        return KIND_FACE, pid
    if feat == FEAT_V0:
        return KIND_VERTEX, faces[pid, 0]
    if feat == FEAT_V1:
        return KIND_VERTEX, faces[pid, 1]
    if feat == FEAT_V2:
        return KIND_VERTEX, faces[pid, 2]
    if feat == FEAT_E01:
        return KIND_EDGE, face_edges[pid, 0]
    if feat == FEAT_E12:
        return KIND_EDGE, face_edges[pid, 1]
    return KIND_EDGE, face_edges[pid, 2]


@njit(cache=True, nogil=True)
def brute_batch(pts_q, verts, faces, face_edges, out_d, out_kind, out_id,
                out_c, i0, i1):
    """Exhaustive oracle: minimum over all vertices and all (closed) faces,
    with closest-point features mapped to canonical primitives."""
    nv = verts.shape[0]
    nf = faces.shape[0]
    for qi in range(i0, i1):
        qx = pts_q[qi, 0]
        qy = pts_q[qi, 1]
        qz = pts_q[qi, 2]
        best_d2 = 1e300
        best_d = 1e300
        best_k = KIND_VERTEX
        best_i = -1
        bcx = 0.0
        bcy = 0.0
        bcz = 0.0
        for v in range(nv):
            dx = qx - verts[v, 0]
            dy = qy - verts[v, 1]
            dz = qz - verts[v, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 - best_d2 > 5e-12 * (d2 + best_d2):
                continue
            d = math.sqrt(d2)
            if best_i < 0 or better_candidate(d, KIND_VERTEX, v,
                                              best_d, best_k, best_i):
                best_d = d
                best_d2 = d2
                best_k = KIND_VERTEX
                best_i = v
                bcx = verts[v, 0]
                bcy = verts[v, 1]
                bcz = verts[v, 2]
        for f in range(nf):
            a = faces[f, 0]
            b = faces[f, 1]
            c = faces[f, 2]
            cx, cy, cz, feat = closest_on_triangle(
                qx, qy, qz,
                verts[a, 0], verts[a, 1], verts[a, 2],
                verts[b, 0], verts[b, 1], verts[b, 2],
                verts[c, 0], verts[c, 1], verts[c, 2])
            dx = qx - cx
            dy = qy - cy
            dz = qz - cz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 - best_d2 > 5e-12 * (d2 + best_d2):
                continue
            d = math.sqrt(d2)
            k, i = canonical_from_face(f, feat, faces, face_edges)
            if better_candidate(d, k, i, best_d, best_k, best_i):
                best_d = d
                best_d2 = d2
                best_k = k
                best_i = i
                bcx = cx
                bcy = cy
                bcz = cz
        out_d[qi] = best_d
        out_kind[qi] = best_k
        out_id[qi] = best_i
        out_c[qi, 0] = bcx
        out_c[qi, 1] = bcy
        out_c[qi, 2] = bcz


@njit(cache=True, nogil=True, inline="always")
def box_dist_sq(qx, qy, qz, mnx, mny, mnz, mxx, mxy, mxz):
    d2 = 0.0
    if qx < mnx:
        t = mnx - qx
        d2 += t * t
    elif qx > mxx:
        t = qx - mxx
        d2 += t * t
    if qy < mny:
        t = mny - qy
        d2 += t * t
    elif qy > mxy:
        t = qy - mxy
        d2 += t * t
    if qz < mnz:
        t = mnz - qz
        d2 += t * t
    elif qz > mxz:
        t = qz - mxz
        d2 += t * t
    return d2


@njit(cache=True, nogil=True)
def bvh_batch(pts_q, verts, faces, face_edges,
              bv_box, bv_left, bv_right, bv_start, bv_end, bv_perm,
              out_d, out_kind, out_id, out_c, i0, i1):
    """Branch-and-bound closest point over the face AABB hierarchy.  Exact;
    ties kept by pruning only strictly worse boxes."""
    stack = np.empty(128, np.int64)
    for qi in range(i0, i1):
        qx = pts_q[qi, 0]
        qy = pts_q[qi, 1]
        qz = pts_q[qi, 2]
        best_d2 = 1e300
        best_d = 1e300
        best_k = KIND_VERTEX
        best_i = -1
        bcx = 0.0
        bcy = 0.0
        bcz = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            bd2 = box_dist_sq(qx, qy, qz, bv_box[node, 0], bv_box[node, 1],
                              bv_box[node, 2], bv_box[node, 3],
                              bv_box[node, 4], bv_box[node, 5])
            if bd2 - best_d2 > 5e-12 * (bd2 + best_d2):
                continue
            if bv_left[node] < 0:
                for s in range(bv_start[node], bv_end[node]):
                    f = bv_perm[s]
                    a = faces[f, 0]
                    b = faces[f, 1]
                    c = faces[f, 2]
                    cx, cy, cz, feat = closest_on_triangle(
                        qx, qy, qz,
                        verts[a, 0], verts[a, 1], verts[a, 2],
                        verts[b, 0], verts[b, 1], verts[b, 2],
                        verts[c, 0], verts[c, 1], verts[c, 2])
                    dx = qx - cx
                    dy = qy - cy
                    dz = qz - cz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 - best_d2 > 5e-12 * (d2 + best_d2):
                        continue
                    d = math.sqrt(d2)
                    k, i = canonical_from_face(f, feat, faces, face_edges)
                    if best_i < 0 or better_candidate(d, k, i, best_d,
                                                      best_k, best_i):
                        best_d = d
                        best_d2 = d2
                        best_k = k
                        best_i = i
                        bcx = cx
                        bcy = cy
                        bcz = cz
            else:
                # visit nearer child first (pushed last)
                l = bv_left[node]
                r = bv_right[node]
                dl = box_dist_sq(qx, qy, qz, bv_box[l, 0], bv_box[l, 1],
                                 bv_box[l, 2], bv_box[l, 3], bv_box[l, 4],
                                 bv_box[l, 5])
                dr = box_dist_sq(qx, qy, qz, bv_box[r, 0], bv_box[r, 1],
                                 bv_box[r, 2], bv_box[r, 3], bv_box[r, 4],
                                 bv_box[r, 5])
                if dl <= dr:
                    stack[top] = r
                    top += 1
                    stack[top] = l
                    top += 1
                else:
                    stack[top] = l
                    top += 1
                    stack[top] = r
                    top += 1
        out_d[qi] = best_d
        out_kind[qi] = best_k
        out_id[qi] = best_i
        out_c[qi, 0] = bcx
        out_c[qi, 1] = bcy
        out_c[qi, 2] = bcz
