"""Bounded vertex Voronoi cells and the neighbor graph used by flooding.

Each cell starts as the domain cube [center +- M]^3 and is clipped by
bisector half-spaces of candidate neighbors in increasing distance.  A cell
is finished either when the next candidate is farther than twice the
distance from the generator to its farthest surviving corner (no later
bisector can cut it) or when a nearest-generator check of every corner
confirms no bisector is missing.  Neighbors are the vertices whose bisector
plane still carries a corner of the final cell.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from . import _kernels as K
from .polytope import ConvexPolytope, TAG_BISECTOR, TAG_BOX


log = logging.getLogger(__name__)


class DuplicatePointsError(ValueError):
    """Two generators coincide; weld the mesh before building cells."""


@dataclass(frozen=True)
class VoronoiConfig:
    half_extent: float          # M
    center: np.ndarray          # (3,)

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=np.float64))
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")

    @property
    def clip_tol(self) -> float:
        return 1e-10 * self.half_extent

    @staticmethod
    def for_points(points, scale: float = 10.0) -> "VoronoiConfig":
        """Domain sized to `scale` times the half-diagonal of the point
        bounding box (so the usual scaled query sampling boxes fit)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        half_diag = 0.5 * float(np.linalg.norm(hi - lo))
        if half_diag == 0.0:
            half_diag = 1.0
        return VoronoiConfig(half_extent=scale * half_diag,
                             center=0.5 * (lo + hi))


@dataclass
class VoronoiCells:
    """Packed cells for all generators: flat corner/edge/plane arrays with
    per-vertex CSR offsets."""
    points: np.ndarray
    config: VoronoiConfig
    C: np.ndarray        # (sum nc, 3) corner positions
    CP: np.ndarray       # (sum nc, 3) defining plane ids (cell-local)
    E: np.ndarray        # (sum ne, 2) corner-index pairs (cell-local)
    P: np.ndarray        # (sum npl, 4) planes
    Ptag: np.ndarray     # (sum npl,) generator id of the bisector, <0 for box
    c_off: np.ndarray    # (n+1,)
    e_off: np.ndarray
    p_off: np.ndarray
    volumes: np.ndarray  # (n,)

    @property
    def n(self):
        return self.points.shape[0]

    def cell_polytope(self, v: int) -> ConvexPolytope:
        c0, c1 = self.c_off[v], self.c_off[v + 1]
        e0, e1 = self.e_off[v], self.e_off[v + 1]
        p0, p1 = self.p_off[v], self.p_off[v + 1]
        tags = [(TAG_BOX, int(-t) - 1) if t < 0 else (TAG_BISECTOR, int(t))
                for t in self.Ptag[p0:p1]]
        return ConvexPolytope(self.C[c0:c1], self.CP[c0:c1], self.E[e0:e1],
                              self.P[p0:p1], tags)

    def cell_corners(self, v: int) -> np.ndarray:
        return self.C[self.c_off[v]:self.c_off[v + 1]].copy()


@dataclass(frozen=True)
class NeighborGraph:
    offsets: np.ndarray   # (n+1,)
    targets: np.ndarray   # symmetric, no self loops

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v]:self.offsets[v + 1]]


@njit(cache=True)
def _neighbors_all(C, c_off, nc_arr, P, Ptag, p_off, npl_arr, tol_inc,
                   counts, tgt_buf, scratch):
    pos = 0
    n = nc_arr.shape[0]
    for v in range(n):
        c0 = c_off[v]
        p0 = p_off[v]
        cnt = K.plane_neighbors(C[c0:c0 + nc_arr[v]], nc_arr[v],
                                P[p0:p0 + npl_arr[v]],
                                Ptag[p0:p0 + npl_arr[v]],
                                npl_arr[v], tol_inc, scratch)
        for i in range(cnt):
            tgt_buf[pos] = scratch[i]
            pos += 1
        counts[v] = cnt
    return pos


def _scratch():
    Ca = np.empty((K.CELL_CAP_C, 3))
    CPa = np.empty((K.CELL_CAP_C, 3), np.int64)
    Ea = np.empty((K.CELL_CAP_E, 2), np.int64)
    Cb = np.empty_like(Ca)
    CPb = np.empty_like(CPa)
    Eb = np.empty_like(Ea)
    P = np.empty((K.CELL_CAP_P, 4))
    Ptag = np.empty(K.CELL_CAP_P, np.int64)
    side = np.empty(K.CELL_CAP_C)
    newidx = np.empty(K.CELL_CAP_C, np.int64)
    return Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side, newidx


def build_cells(points, cfg: VoronoiConfig, k0: int = 64,
                chunk: int = 2048):
    """Build all cells plus the neighbor graph.  Returns
    (VoronoiCells, NeighborGraph).

    Cells are clipped against the k nearest generators first; the security
    radius rarely certifies a cell of a surface point cloud (boundary cells
    reach the domain cube), so every corner of an uncertified cell is then
    checked with a nearest-generator query.  A corner measurably closer to
    another generator reveals a missing bisector, and the cell is re-clipped
    with it; the loop repeats until every corner is settled, which keeps the
    construction near-linear instead of quadratic in the vertex count.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("no generator points")
    lo = cfg.center - cfg.half_extent
    hi = cfg.center + cfg.half_extent
    if np.any(pts < lo) or np.any(pts > hi):
        raise ValueError("generator outside the domain cube; enlarge M")

    tree = cKDTree(pts)
    tol = cfg.clip_tol
    # a corner this much closer to another generator than to its own is
    # guaranteed to be cut strictly beyond the clip keep-tolerance
    cert_tol = 8.0 * tol
    cx0, cy0, cz0 = (float(c) for c in cfg.center)
    Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side, newidx = _scratch()

    per = [None] * n  # per-vertex (C, CP, E, P, Ptag) slices
    vol = np.zeros(n)
    ncs = np.zeros(n, np.int64)
    nes = np.zeros(n, np.int64)
    npls = np.zeros(n, np.int64)

    # first pass: clip every cell against its k nearest generators
    todo = np.arange(n, dtype=np.int64)
    k = min(k0, n)
    ratio = 192  # corner-buffer rows per vertex; grown on packing overflow
    while todo.size:
        failed_buf = []
        for s in range(0, todo.size, chunk):
            vids = todo[s:s + chunk]
            m = vids.shape[0]
            d, idx = tree.query(pts[vids], k=k)
            if k == 1:
                d = d.reshape(-1, 1)
                idx = idx.reshape(-1, 1)
            d = np.ascontiguousarray(d, dtype=np.float64)
            idx = np.ascontiguousarray(idx, dtype=np.int64)
            out_C = np.empty((m * ratio, 3))
            out_CP = np.empty((m * ratio, 3), np.int64)
            out_E = np.empty((m * 2 * ratio, 2), np.int64)
            out_P = np.empty((m * ratio // 2, 4))
            out_Ptag = np.empty(m * ratio // 2, np.int64)
            out_vol = np.zeros(m)
            nc_arr = np.zeros(m, np.int64)
            ne_arr = np.zeros(m, np.int64)
            npl_arr = np.zeros(m, np.int64)
            status = np.zeros(m, np.int64)
            K.build_cells_chunk(pts, vids, idx, d, cx0, cy0, cz0,
                                cfg.half_extent, tol,
                                out_C, out_CP, out_E, out_P, out_Ptag,
                                out_vol, nc_arr, ne_arr, npl_arr, status,
                                Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side,
                                newidx)
            if np.any(status == 2):
                bad = vids[status == 2]
                raise DuplicatePointsError(
                    f"coincident generator points near vertex {bad[0]}")
            co = 0
            eo = 0
            po = 0
            for u in range(m):
                if status[u] == 3:
                    failed_buf.append(int(vids[u]))
                    continue
                nc = nc_arr[u]
                ne = ne_arr[u]
                npl = npl_arr[u]
                v = vids[u]
                per[v] = (out_C[co:co + nc].copy(),
                          out_CP[co:co + nc].copy(),
                          out_E[eo:eo + ne].copy(),
                          out_P[po:po + npl].copy(),
                          out_Ptag[po:po + npl].copy())
                vol[v] = out_vol[u]
                ncs[v] = nc
                nes[v] = ne
                npls[v] = npl
                co += nc
                eo += ne
                po += npl
        if failed_buf:
            if ratio >= K.CELL_CAP_C:
                raise OverflowError("cell complexity exceeds scratch "
                                    "capacity; mesh is pathological")
            ratio *= 4
        todo = np.array(failed_buf, dtype=np.int64)

    from .index import build_kdtree
    kdt = build_kdtree(pts)

    def nearest_generator(corners):
        nq = corners.shape[0]
        out_id = np.empty(nq, np.int64)
        out_d = np.empty(nq)
        out_n = np.empty(nq, np.int64)
        K.kd_nearest_batch(corners, kdt.box, kdt.left, kdt.right, kdt.start,
                           kdt.end, kdt.perm, pts, out_id, out_d, out_n,
                           0, nq)
        return out_d, out_id

    def certify(verts, new_from):
        """Corner check: a corner measurably closer to another generator
        than to its own reveals a missing cutter.  Corners surviving from an
        earlier round are already certified, so only corners lying on a
        plane added since (plane id >= new_from[v]) are re-checked.
        Returns {vertex: ids}."""
        parts = []
        counts = np.empty(verts.size, np.int64)
        for i, v in enumerate(verts):
            C, CP = per[v][0], per[v][1]
            thr = new_from.get(int(v), 0)
            if thr:
                C = C[(CP >= thr).any(axis=1)]
            parts.append(C)
            counts[i] = C.shape[0]
        corners = np.concatenate(parts, axis=0)
        if corners.shape[0] == 0:
            return {}
        owners = np.repeat(verts, counts)
        dv = np.linalg.norm(corners - pts[owners], axis=1)
        dnn, wnn = nearest_generator(np.ascontiguousarray(corners))
        miss = (dv - dnn > cert_tol) & (wnn != owners)
        out = {}
        if np.any(miss):
            pairs = np.unique(np.stack([owners[miss],
                                        wnn[miss].astype(np.int64)],
                                       axis=1), axis=0)
            vs_u, starts = np.unique(pairs[:, 0], return_index=True)
            ends = np.append(starts[1:], pairs.shape[0])
            for v, s0, s1 in zip(vs_u, starts, ends):
                out[int(v)] = np.ascontiguousarray(pairs[s0:s1, 1])
        return out

    # certification rounds: extend uncertified cells in place with only the
    # newly discovered cutters (intersection order does not matter)
    changed = np.arange(n, dtype=np.int64)
    new_from = {}
    rounds = 0
    while changed.size:
        rounds += 1
        if rounds > 64:
            raise RuntimeError("cell construction did not converge")
        extra_new = certify(changed, new_from)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("round %d: checked %d cells, %d need %d more cutters",
                      rounds, changed.size, len(extra_new),
                      sum(a.size for a in extra_new.values()))
        new_from = {v: int(npls[v]) for v in extra_new}
        for v, cutters in extra_new.items():
            pv = pts[v]
            C2, CP2, E2, P2, Pt2, vl, st = K.extend_cell(
                pv[0], pv[1], pv[2], *per[v], cutters, pts, tol,
                Ca, CPa, Ea, Cb, CPb, Eb, P, Ptag, side, newidx)
            if st == 2:
                raise DuplicatePointsError(
                    f"coincident generator points near vertex {v}")
            if st == 3:
                raise OverflowError("cell complexity exceeds scratch "
                                    "capacity; mesh is pathological")
            per[v] = (C2, CP2, E2, P2, Pt2)
            vol[v] = vl
            ncs[v] = C2.shape[0]
            nes[v] = E2.shape[0]
            npls[v] = P2.shape[0]
        changed = np.array(sorted(extra_new), dtype=np.int64)

    c_off = np.zeros(n + 1, np.int64)
    e_off = np.zeros(n + 1, np.int64)
    p_off = np.zeros(n + 1, np.int64)
    np.cumsum(ncs, out=c_off[1:])
    np.cumsum(nes, out=e_off[1:])
    np.cumsum(npls, out=p_off[1:])
    C = np.empty((c_off[-1], 3))
    CP = np.empty((c_off[-1], 3), np.int64)
    E = np.empty((e_off[-1], 2), np.int64)
    Pl = np.empty((p_off[-1], 4))
    Ptg = np.empty(p_off[-1], np.int64)
    for v in range(n):
        c, cp, e, pl, pt = per[v]
        C[c_off[v]:c_off[v + 1]] = c
        CP[c_off[v]:c_off[v + 1]] = cp
        E[e_off[v]:e_off[v + 1]] = e
        Pl[p_off[v]:p_off[v + 1]] = pl
        Ptg[p_off[v]:p_off[v + 1]] = pt

    cells = VoronoiCells(points=pts, config=cfg, C=C, CP=CP, E=E, P=Pl,
                         Ptag=Ptg, c_off=c_off, e_off=e_off, p_off=p_off,
                         volumes=vol)
    graph = _build_graph(cells)
    return cells, graph


def _build_graph(cells: VoronoiCells) -> NeighborGraph:
    n = cells.n
    counts = np.zeros(n, np.int64)
    tgt_buf = np.empty(cells.P.shape[0], np.int64)
    scratch = np.empty(K.CELL_CAP_P, np.int64)
    nc_arr = np.diff(cells.c_off)
    npl_arr = np.diff(cells.p_off)
    total = _neighbors_all(cells.C, cells.c_off, nc_arr, cells.P, cells.Ptag,
                           cells.p_off, npl_arr, cells.config.clip_tol * 100.0,
                           counts, tgt_buf, scratch)
    src = np.repeat(np.arange(n, dtype=np.int64), counts)
    dst = tgt_buf[:total]
    # symmetric closure, dedup, drop self loops
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    keep = a != b
    pairs = np.unique(np.stack([a[keep], b[keep]], axis=1), axis=0)
    offsets = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(pairs[:, 0], minlength=n), out=offsets[1:])
    return NeighborGraph(offsets=offsets, targets=pairs[:, 1].copy())
