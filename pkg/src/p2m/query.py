"""Distance query front ends: the table-driven P2M pipeline, the exhaustive
brute-force oracle, and an AABB-BVH baseline over faces.

All three report the same QueryResult and share one tie-break rule
(vertex < edge < face, then ascending id) so their outputs are comparable
bitwise.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .index import P2MIndex
from .mesh import Mesh

KIND_NAMES = {int(K.KIND_VERTEX): "vertex", int(K.KIND_EDGE): "edge",
              int(K.KIND_FACE): "face"}


class DomainError(ValueError):
    """Query point outside the index domain cube; rebuild with a larger
    domain scale."""


@dataclass(frozen=True)
class QueryResult:
    distance: float
    closest_point: np.ndarray
    kind: int              # 0 vertex, 1 edge, 2 face
    prim_id: int

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]


@dataclass
class BatchResult:
    distance: np.ndarray
    closest_point: np.ndarray
    kind: np.ndarray
    prim_id: np.ndarray
    # aggregate instrumentation
    kdt_time: float = 0.0
    resolve_time: float = 0.0
    total_time: float = 0.0
    avg_candidates_tested: float = 0.0
    avg_kd_nodes: float = 0.0

    def __len__(self):
        return self.distance.shape[0]

    def result(self, i: int) -> QueryResult:
        return QueryResult(distance=float(self.distance[i]),
                           closest_point=self.closest_point[i].copy(),
                           kind=int(self.kind[i]),
                           prim_id=int(self.prim_id[i]))


def _default_threads():
    env = os.environ.get("P2M_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _partition(n, threads):
    threads = max(1, min(threads, n)) if n else 1
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(threads)
            if bounds[i] < bounds[i + 1]]


def query_batch(idx: P2MIndex, points, threads: int = None,
                with_breakdown: bool = False) -> BatchResult:
    """Run the P2M pipeline over a point batch.  Results are deterministic
    and independent of the thread count (each output slot is written by
    exactly one worker).

    with_breakdown=True re-runs the KD-search phase alone to split the wall
    time into nearest-vertex search vs candidate resolution.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    inside = idx.in_domain(pts)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise DomainError(
            f"query point {bad} outside the domain cube "
            f"[center +- {idx.half_extent:g}]; rebuild with a larger "
            f"--box-scale")
    if threads is None:
        threads = _default_threads()

    out_d = np.empty(n)
    out_kind = np.empty(n, np.int64)
    out_id = np.empty(n, np.int64)
    out_c = np.empty((n, 3))
    out_tested = np.empty(n, np.int64)
    out_nodes = np.empty(n, np.int64)
    t = idx.kdt
    rt = idx.rtrees
    tab = idx.table

    def run(i0, i1):
        K.p2m_batch(pts, t.box, t.left, t.right, t.start, t.end,
                    t.perm, idx.verts, idx.edges, idx.faces, idx.face_edges,
                    idx.face_vs, rt.root, rt.node_box, rt.node_child,
                    rt.node_count, rt.node_leaf, rt.items,
                    tab.ent_kind, tab.ent_prim, tab.ent_box,
                    idx.gating_tol, out_d, out_kind, out_id, out_c,
                    out_tested, out_nodes, i0, i1)

    parts = _partition(n, threads)
    t0 = time.perf_counter()
    if len(parts) <= 1:
        for i0, i1 in parts:
            run(i0, i1)
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            list(pool.map(lambda p: run(*p), parts))
    total = time.perf_counter() - t0

    kdt_time = 0.0
    if with_breakdown and n:
        tmp_id = np.empty(n, np.int64)
        tmp_d = np.empty(n)
        tmp_n = np.empty(n, np.int64)
        t1 = time.perf_counter()
        for i0, i1 in parts:
            K.kd_nearest_batch(pts, t.box, t.left, t.right,
                               t.start, t.end, t.perm, idx.verts,
                               tmp_id, tmp_d, tmp_n, i0, i1)
        kdt_time = time.perf_counter() - t1

    return BatchResult(distance=out_d, closest_point=out_c, kind=out_kind,
                       prim_id=out_id,
                       kdt_time=kdt_time,
                       resolve_time=max(total - kdt_time, 0.0),
                       total_time=total,
                       avg_candidates_tested=float(out_tested.mean()) if n else 0.0,
                       avg_kd_nodes=float(out_nodes.mean()) if n else 0.0)


def p2m_query(idx: P2MIndex, q) -> QueryResult:
    return query_batch(idx, np.asarray(q, dtype=np.float64).reshape(1, 3),
                       threads=1).result(0)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def brute_force_batch(mesh: Mesh, points, threads: int = 1) -> BatchResult:
    """Exhaustive minimum over all vertices and closed faces (plus wire
    edges, if the mesh has edges without any adjacent face)."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    out_d = np.empty(n)
    out_kind = np.empty(n, np.int64)
    out_id = np.empty(n, np.int64)
    out_c = np.empty((n, 3))

    parts = _partition(n, threads)
    t0 = time.perf_counter()
    if len(parts) <= 1:
        for i0, i1 in parts:
            K.brute_batch(pts, mesh.vertices, mesh.faces, mesh.face_edges,
                          out_d, out_kind, out_id, out_c, i0, i1)
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            list(pool.map(
                lambda p: K.brute_batch(pts, mesh.vertices, mesh.faces,
                                        mesh.face_edges, out_d, out_kind,
                                        out_id, out_c, *p), parts))
    total = time.perf_counter() - t0

    # wire edges (no adjacent face) are not covered by the face scan
    ef_off, _ = mesh.edge_faces
    wire = np.flatnonzero(np.diff(ef_off) == 0)
    for e in wire:
        a = mesh.vertices[mesh.edges[e, 0]]
        b = mesh.vertices[mesh.edges[e, 1]]
        for qi in range(n):
            cx, cy, cz, feat = K.closest_on_segment(
                pts[qi, 0], pts[qi, 1], pts[qi, 2],
                a[0], a[1], a[2], b[0], b[1], b[2])
            d = math.sqrt((pts[qi, 0] - cx) ** 2 + (pts[qi, 1] - cy) ** 2
                          + (pts[qi, 2] - cz) ** 2)
            if feat == K.FEAT_V0:
                k, i = int(K.KIND_VERTEX), int(mesh.edges[e, 0])
            elif feat == K.FEAT_V1:
                k, i = int(K.KIND_VERTEX), int(mesh.edges[e, 1])
            else:
                k, i = int(K.KIND_EDGE), int(e)
            if K.better_candidate(d, k, i, out_d[qi], int(out_kind[qi]),
                                  int(out_id[qi])):
                out_d[qi] = d
                out_kind[qi] = k
                out_id[qi] = i
                out_c[qi] = (cx, cy, cz)

    return BatchResult(distance=out_d, closest_point=out_c, kind=out_kind,
                       prim_id=out_id, total_time=total)


def brute_force_query(mesh: Mesh, q) -> QueryResult:
    return brute_force_batch(
        mesh, np.asarray(q, dtype=np.float64).reshape(1, 3)).result(0)


# ---------------------------------------------------------------------------
# AABB-BVH baseline
# ---------------------------------------------------------------------------

@dataclass
class BvhTree:
    mesh: Mesh
    box: np.ndarray    # (t, 6)
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    perm: np.ndarray
    leaf_size: int


def build_bvh(mesh: Mesh, leaf_size: int = 4) -> BvhTree:
    """Binary AABB tree over faces, median split on the longest axis of the
    centroid bounding box."""
    m = mesh.n_faces
    if m == 0:
        raise ValueError("BVH needs at least one face")
    tri = mesh.vertices[mesh.faces]           # (m, 3, 3)
    fmin = tri.min(axis=1)
    fmax = tri.max(axis=1)
    cent = 0.5 * (fmin + fmax)
    perm = np.arange(m, dtype=np.int64)
    box = []
    left = []
    right = []
    start = []
    end = []

    def new_node(lo, hi):
        b = np.concatenate([fmin[perm[lo:hi]].min(axis=0),
                            fmax[perm[lo:hi]].max(axis=0)])
        box.append(b)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        end.append(hi)
        return len(box) - 1

    stack = [(new_node(0, m), 0, m)]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= leaf_size:
            continue
        ext = box[node][3:] - box[node][:3]
        ax = int(np.argmax(ext))
        mid = (hi - lo) // 2
        seg = perm[lo:hi]
        part = np.argpartition(cent[seg, ax], mid)
        perm[lo:hi] = seg[part]
        l = new_node(lo, lo + mid)
        r = new_node(lo + mid, hi)
        left[node] = l
        right[node] = r
        start[node] = 0
        end[node] = 0
        stack.append((l, lo, lo + mid))
        stack.append((r, lo + mid, hi))

    return BvhTree(mesh=mesh, box=np.array(box), left=np.array(left, np.int64),
                   right=np.array(right, np.int64),
                   start=np.array(start, np.int64),
                   end=np.array(end, np.int64), perm=perm,
                   leaf_size=leaf_size)


def bvh_batch(t: BvhTree, points, threads: int = 1) -> BatchResult:
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    out_d = np.empty(n)
    out_kind = np.empty(n, np.int64)
    out_id = np.empty(n, np.int64)
    out_c = np.empty((n, 3))
    m = t.mesh

    def run(i0, i1):
        K.bvh_batch(pts, m.vertices, m.faces, m.face_edges,
                    t.box, t.left, t.right, t.start, t.end, t.perm,
                    out_d, out_kind, out_id, out_c, i0, i1)

    parts = _partition(n, threads)
    t0 = time.perf_counter()
    if len(parts) <= 1:
        for i0, i1 in parts:
            run(i0, i1)
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            list(pool.map(lambda p: run(*p), parts))
    total = time.perf_counter() - t0
    return BatchResult(distance=out_d, closest_point=out_c, kind=out_kind,
                       prim_id=out_id, total_time=total)


def bvh_query(t: BvhTree, q) -> QueryResult:
    return bvh_batch(t, np.asarray(q, dtype=np.float64).reshape(1, 3)).result(0)
