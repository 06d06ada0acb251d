"""Query-side index structures: the vertex KD-tree, per-vertex R-trees over
interception boxes, the bundled P2MIndex, and its binary serialization.

File format (little endian throughout):
  magic "P2M1" | u32 version | u32 section count
  per section: 16-byte NUL-padded name | u64 payload byte length
  payloads in table order.  Array sections hold a sequence of
  [16-byte name | 8-byte dtype string | u8 ndim | ndim x u64 dims | raw data];
  the "meta" section holds UTF-8 JSON.
Timings are never serialized, so rebuilding the same mesh writes a
byte-identical file.
"""
from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .interception import (InterceptionTable, build_prim_set, build_table,
                           face_vertical_planes)
from .mesh import Mesh
from .vorocell import VoronoiConfig, build_cells

FORMAT_VERSION = 1
MAGIC = b"P2M1"


class IndexFormatError(ValueError):
    """File is not a P2M index (bad magic or malformed structure)."""


class IndexVersionError(ValueError):
    """Index was written by an incompatible format version."""


class IndexTruncatedError(ValueError):
    """File ends before the declared payload does."""


# ---------------------------------------------------------------------------
# KD-tree
# ---------------------------------------------------------------------------

@dataclass
class KdTree:
    points: np.ndarray
    axis: np.ndarray
    split: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    perm: np.ndarray
    box: np.ndarray      # (nodes, 6) lo/hi bounds used for search pruning
    leaf_size: int


def build_kdtree(points, leaf_size: int = 8) -> KdTree:
    """Median-split tree with the split axis alternating x, y, z by depth.
    Every node carries its bounding box: box distance is what lets the
    search prune aggressively even when the query is far from the cloud."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n < 1:
        raise ValueError("KD-tree needs at least one point")
    perm = np.arange(n, dtype=np.int64)
    axis = []
    split = []
    left = []
    right = []
    start = []
    end = []

    def new_node(lo, hi):
        axis.append(0)
        split.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        end.append(hi)
        return len(axis) - 1

    stack = [(new_node(0, n), 0, n, 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        if hi - lo <= leaf_size:
            continue
        ax = depth % 3
        mid = (hi - lo) // 2
        seg = perm[lo:hi]
        part = np.argpartition(pts[seg, ax], mid)
        perm[lo:hi] = seg[part]
        axis[node] = ax
        split[node] = pts[perm[lo + mid], ax]
        l = new_node(lo, lo + mid)
        r = new_node(lo + mid, hi)
        left[node] = l
        right[node] = r
        stack.append((l, lo, lo + mid, depth + 1))
        stack.append((r, lo + mid, hi, depth + 1))

    nn = len(axis)
    box = np.empty((nn, 6))
    # children always have larger indices, so a reverse sweep merges bottom-up
    for node in range(nn - 1, -1, -1):
        if left[node] < 0:
            sub = pts[perm[start[node]:end[node]]]
            if sub.shape[0] == 0:
                box[node, :3] = np.inf
                box[node, 3:] = -np.inf
            else:
                box[node, :3] = sub.min(axis=0)
                box[node, 3:] = sub.max(axis=0)
        else:
            box[node, :3] = np.minimum(box[left[node], :3],
                                       box[right[node], :3])
            box[node, 3:] = np.maximum(box[left[node], 3:],
                                       box[right[node], 3:])

    return KdTree(points=pts,
                  axis=np.array(axis, np.int64),
                  split=np.array(split, np.float64),
                  left=np.array(left, np.int64),
                  right=np.array(right, np.int64),
                  start=np.array(start, np.int64),
                  end=np.array(end, np.int64),
                  perm=perm, box=box, leaf_size=leaf_size)


def nearest_vertex(t: KdTree, q):
    """Exact nearest point id and distance (ties go to the smaller id)."""
    q = np.asarray(q, dtype=np.float64).reshape(1, 3)
    out_id = np.empty(1, np.int64)
    out_d = np.empty(1, np.float64)
    out_n = np.empty(1, np.int64)
    K.kd_nearest_batch(q, t.box, t.left, t.right, t.start, t.end,
                       t.perm, t.points, out_id, out_d, out_n, 0, 1)
    return int(out_id[0]), float(out_d[0])


# ---------------------------------------------------------------------------
# per-vertex R-trees (STR bulk loaded)
# ---------------------------------------------------------------------------

@dataclass
class RTreeSet:
    root: np.ndarray      # (n,) node index per vertex, -1 if no entries
    node_box: np.ndarray  # (t, 6)
    node_child: np.ndarray
    node_count: np.ndarray
    node_leaf: np.ndarray
    items: np.ndarray     # leaf slots -> global entry index
    fanout: int


def build_rtrees(ent_off, ent_box, fanout: int = 8) -> RTreeSet:
    n = ent_off.shape[0] - 1
    counts = np.diff(ent_off)
    total = int(sum(K.str_count_nodes(int(c), fanout) for c in counts))
    root = np.empty(n, np.int64)
    nb_box = np.empty((max(total, 1), 6))
    nb_child = np.empty(max(total, 1), np.int64)
    nb_count = np.empty(max(total, 1), np.int64)
    nb_leaf = np.empty(max(total, 1), np.int64)
    items = np.empty(max(int(ent_box.shape[0]), 1), np.int64)
    used = K.str_build_all(np.ascontiguousarray(ent_box, dtype=np.float64),
                           ent_off.astype(np.int64), fanout,
                           root, nb_box, nb_child, nb_count, nb_leaf, items)
    assert used == total
    return RTreeSet(root=root, node_box=nb_box[:max(total, 1)],
                    node_child=nb_child[:max(total, 1)],
                    node_count=nb_count[:max(total, 1)],
                    node_leaf=nb_leaf[:max(total, 1)],
                    items=items, fanout=fanout)


def rtree_point_query(rt: RTreeSet, ent_box, vertex: int, q):
    """Entry indices (global) of `vertex` whose box contains q."""
    q = np.asarray(q, dtype=np.float64).reshape(3)
    out = np.empty(max(ent_box.shape[0], 1), np.int64)
    stack = np.empty(256, np.int64)
    cnt = K.rtree_point_query(rt.root[vertex], rt.node_box, rt.node_child,
                              rt.node_count, rt.node_leaf, rt.items,
                              np.ascontiguousarray(ent_box, dtype=np.float64),
                              q[0], q[1], q[2], out, stack)
    return out[:cnt].copy()


# ---------------------------------------------------------------------------
# index bundle
# ---------------------------------------------------------------------------

@dataclass
class P2MIndex:
    verts: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    face_edges: np.ndarray
    face_vs: np.ndarray          # (m, 3, 4) face vertical-space planes
    kdt: KdTree
    table: InterceptionTable
    rtrees: RTreeSet
    half_extent: float           # M
    center: np.ndarray
    leaf_size: int
    fanout: int
    timings: dict = field(default_factory=dict)
    cell_volumes: np.ndarray = None  # build-time only, not serialized

    @property
    def gating_tol(self) -> float:
        return 1e-10 * self.half_extent

    def in_domain(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        lo = self.center - self.half_extent
        hi = self.center + self.half_extent
        return np.all((pts >= lo) & (pts <= hi), axis=1)


def build_index(mesh: Mesh, leaf_size: int = 8, fanout: int = 8,
                domain_scale: float = 10.0) -> P2MIndex:
    """Full preprocessing: KD-tree, Voronoi cells, interception flooding,
    R-trees.  Per-phase wall times land in .timings."""
    timings = {}
    t0 = time.perf_counter()
    kdt = build_kdtree(mesh.vertices, leaf_size=leaf_size)
    t1 = time.perf_counter()
    timings["kdt"] = t1 - t0

    cfg = VoronoiConfig.for_points(mesh.vertices, scale=domain_scale)
    cells, graph = build_cells(mesh.vertices, cfg)
    t2 = time.perf_counter()
    timings["voronoi"] = t2 - t1

    prims = build_prim_set(mesh)
    table = build_table(mesh, cells, graph, prims=prims)
    t3 = time.perf_counter()
    timings["interception"] = t3 - t2

    rtrees = build_rtrees(table.ent_off, table.ent_box, fanout=fanout)
    t4 = time.perf_counter()
    timings["rtree"] = t4 - t3
    timings["total"] = t4 - t0

    return P2MIndex(verts=mesh.vertices, edges=mesh.edges, faces=mesh.faces,
                    face_edges=mesh.face_edges,
                    face_vs=face_vertical_planes(mesh), kdt=kdt, table=table,
                    rtrees=rtrees, half_extent=cfg.half_extent,
                    center=cfg.center, leaf_size=leaf_size, fanout=fanout,
                    timings=timings, cell_volumes=cells.volumes)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _pack_arrays(pairs) -> bytes:
    out = bytearray()
    for name, arr in pairs:
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        data = arr.astype(dt, copy=False).tobytes()
        out += name.encode("ascii").ljust(16, b"\0")
        out += dt.str.encode("ascii").ljust(8, b"\0")
        out += struct.pack("<B", arr.ndim)
        out += struct.pack("<%dQ" % arr.ndim, *arr.shape)
        out += data
    return bytes(out)


def _unpack_arrays(buf: bytes) -> dict:
    out = {}
    pos = 0
    while pos < len(buf):
        if pos + 25 > len(buf):
            raise IndexTruncatedError("array header cut short")
        name = buf[pos:pos + 16].rstrip(b"\0").decode("ascii")
        dts = buf[pos + 16:pos + 24].rstrip(b"\0").decode("ascii")
        ndim = buf[pos + 24]
        pos += 25
        if pos + 8 * ndim > len(buf):
            raise IndexTruncatedError("array dims cut short")
        shape = struct.unpack_from("<%dQ" % ndim, buf, pos)
        pos += 8 * ndim
        dt = np.dtype(dts)
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(buf):
            raise IndexTruncatedError(f"array {name} data cut short")
        out[name] = np.frombuffer(buf[pos:pos + nbytes],
                                  dtype=dt).reshape(shape).copy()
        pos += nbytes
    return out


def save_index(idx: P2MIndex, path):
    sections = [
        ("mesh", _pack_arrays([
            ("verts", idx.verts), ("edges", idx.edges), ("faces", idx.faces),
            ("face_edges", idx.face_edges),
            ("face_vs", idx.face_vs.reshape(-1, 4)),
        ])),
        ("kdt", _pack_arrays([
            ("axis", idx.kdt.axis), ("split", idx.kdt.split),
            ("left", idx.kdt.left), ("right", idx.kdt.right),
            ("start", idx.kdt.start), ("end", idx.kdt.end),
            ("perm", idx.kdt.perm), ("box", idx.kdt.box),
        ])),
        ("table", _pack_arrays([
            ("ent_off", idx.table.ent_off), ("ent_kind", idx.table.ent_kind),
            ("ent_prim", idx.table.ent_prim), ("ent_box", idx.table.ent_box),
        ])),
        ("rtrees", _pack_arrays([
            ("root", idx.rtrees.root), ("node_box", idx.rtrees.node_box),
            ("node_child", idx.rtrees.node_child),
            ("node_count", idx.rtrees.node_count),
            ("node_leaf", idx.rtrees.node_leaf),
            ("items", idx.rtrees.items),
        ])),
        ("meta", json.dumps({
            "half_extent": idx.half_extent,
            "center": [float(c) for c in idx.center],
            "leaf_size": idx.leaf_size,
            "fanout": idx.fanout,
        }, sort_keys=True).encode("utf-8")),
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(sections)))
        for name, payload in sections:
            fh.write(name.encode("ascii").ljust(16, b"\0"))
            fh.write(struct.pack("<Q", len(payload)))
        for _, payload in sections:
            fh.write(payload)


def load_index(path) -> P2MIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise IndexFormatError(f"{path}: not a P2M index file")
    version, nsec = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise IndexVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    pos = 12
    table = []
    for _ in range(nsec):
        if pos + 24 > len(data):
            raise IndexTruncatedError(f"{path}: section table cut short")
        name = data[pos:pos + 16].rstrip(b"\0").decode("ascii")
        (length,) = struct.unpack_from("<Q", data, pos + 16)
        table.append((name, length))
        pos += 24
    payloads = {}
    for name, length in table:
        if pos + length > len(data):
            raise IndexTruncatedError(f"{path}: section {name} cut short")
        payloads[name] = data[pos:pos + length]
        pos += length
    for need in ("mesh", "kdt", "table", "rtrees", "meta"):
        if need not in payloads:
            raise IndexFormatError(f"{path}: missing section {need}")

    mesh_a = _unpack_arrays(payloads["mesh"])
    kdt_a = _unpack_arrays(payloads["kdt"])
    tab_a = _unpack_arrays(payloads["table"])
    rt_a = _unpack_arrays(payloads["rtrees"])
    try:
        meta = json.loads(payloads["meta"].decode("utf-8"))
    except ValueError as exc:
        raise IndexFormatError(f"{path}: bad metadata JSON: {exc}")

    verts = mesh_a["verts"]
    kdt = KdTree(points=verts, axis=kdt_a["axis"], split=kdt_a["split"],
                 left=kdt_a["left"], right=kdt_a["right"],
                 start=kdt_a["start"], end=kdt_a["end"], perm=kdt_a["perm"],
                 box=kdt_a["box"], leaf_size=int(meta["leaf_size"]))
    tab = InterceptionTable(ent_off=tab_a["ent_off"],
                            ent_kind=tab_a["ent_kind"],
                            ent_prim=tab_a["ent_prim"],
                            ent_box=tab_a["ent_box"])
    rtrees = RTreeSet(root=rt_a["root"], node_box=rt_a["node_box"],
                      node_child=rt_a["node_child"],
                      node_count=rt_a["node_count"],
                      node_leaf=rt_a["node_leaf"], items=rt_a["items"],
                      fanout=int(meta["fanout"]))
    return P2MIndex(verts=verts, edges=mesh_a["edges"], faces=mesh_a["faces"],
                    face_edges=mesh_a["face_edges"],
                    face_vs=mesh_a["face_vs"].reshape(-1, 3, 4),
                    kdt=kdt, table=tab, rtrees=rtrees,
                    half_extent=float(meta["half_extent"]),
                    center=np.array(meta["center"], dtype=np.float64),
                    leaf_size=int(meta["leaf_size"]),
                    fanout=int(meta["fanout"]))
