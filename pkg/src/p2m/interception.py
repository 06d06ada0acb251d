"""Interception analysis: vertical spaces of edges and faces, convexity
filters, flooding inspection over the Voronoi neighbor graph, and assembly
of the per-vertex interception table.

A vertex v intercepts a primitive when its Voronoi cell reaches into the
set of points whose closest primitive is that edge/face; queries landing in
v's cell then only need v's list.  The filters here are conservative: a
vertex is excluded only when every extreme point of
Cell(v) . VerticalSpace(prim) is provably at least as close to v as to the
primitive's carrier line/plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .geom import Line, Plane, closer_to_point_than_line, closer_to_point_than_plane
from .mesh import Mesh
from .polytope import ConvexPolytope
from .vorocell import NeighborGraph, VoronoiCells

KIND_VERTEX = int(K.KIND_VERTEX)
KIND_EDGE = int(K.KIND_EDGE)
KIND_FACE = int(K.KIND_FACE)


@dataclass(frozen=True)
class VerticalSpace:
    """Half-space intersection containing every point whose orthogonal
    projection lands in the primitive's open interior."""
    planes: tuple
    anchor_kind: int
    anchor_id: int

    def contains(self, q, tol: float = 0.0) -> bool:
        return all(p.signed_value(q) <= tol for p in self.planes)


def _face_frames(mesh: Mesh):
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    nf = np.cross(b - a, c - a)
    nf /= np.linalg.norm(nf, axis=1, keepdims=True)
    return a, b, c, nf


def face_vertical_planes(mesh: Mesh) -> np.ndarray:
    """(m, 3, 4) plane rows; plane i contains edge i of the face (ab, bc,
    ca), is perpendicular to the face plane, and keeps the face interior on
    the non-positive side."""
    a, b, c, nf = _face_frames(mesh)
    out = np.empty((mesh.n_faces, 3, 4))
    for i, (p, q, opp) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
        w = np.cross(q - p, nf)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        flip = np.einsum("ij,ij->i", w, opp - p) > 0.0
        w[flip] = -w[flip]
        out[:, i, :3] = w
        out[:, i, 3] = np.einsum("ij,ij->i", w, p)
    return out


def face_planes(mesh: Mesh) -> np.ndarray:
    """(m, 4) carrier plane of each face (unit normal, offset)."""
    a, _, _, nf = _face_frames(mesh)
    out = np.empty((mesh.n_faces, 4))
    out[:, :3] = nf
    out[:, 3] = np.einsum("ij,ij->i", nf, a)
    return out


def edge_vertical_planes(mesh: Mesh):
    """CSR of vertical-space planes per edge: 2 endpoint slab planes plus
    one plane per adjacent face (through the edge, perpendicular to the
    face, excluding the face-interior side).  Returns (offsets, planes,
    lines) with lines (k, 6) = (origin, unit direction)."""
    ea = mesh.vertices[mesh.edges[:, 0]]
    eb = mesh.vertices[mesh.edges[:, 1]]
    u = eb - ea
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    ef_off, ef_tgt = mesh.edge_faces
    deg = np.diff(ef_off)
    offsets = np.zeros(mesh.n_edges + 1, np.int64)
    np.cumsum(2 + deg, out=offsets[1:])
    planes = np.empty((offsets[-1], 4))
    # slab planes: -u.x <= -u.a  and  u.x <= u.b
    planes[offsets[:-1], :3] = -u
    planes[offsets[:-1], 3] = -np.einsum("ij,ij->i", u, ea)
    planes[offsets[:-1] + 1, :3] = u
    planes[offsets[:-1] + 1, 3] = np.einsum("ij,ij->i", u, eb)
    if ef_tgt.size:
        _, _, _, nf = _face_frames(mesh)
        eid = np.repeat(np.arange(mesh.n_edges, dtype=np.int64), deg)
        fid = ef_tgt
        w = np.cross(u[eid], nf[fid])
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        # orient toward the face interior so the kept side excludes it
        fsum = mesh.vertices[mesh.faces[fid]].sum(axis=1)
        third = fsum - ea[eid] - eb[eid]
        flip = np.einsum("ij,ij->i", w, third - ea[eid]) < 0.0
        w[flip] = -w[flip]
        slot = offsets[eid] + 2 + (np.arange(ef_tgt.size) - ef_off[eid])
        planes[slot, :3] = w
        planes[slot, 3] = np.einsum("ij,ij->i", w, ea[eid])
    lines = np.concatenate([ea, u], axis=1)
    return offsets, planes, lines


def vertical_space_face(mesh: Mesh, f: int) -> VerticalSpace:
    rows = face_vertical_planes(mesh)[f]
    return VerticalSpace(tuple(Plane(r[:3] / np.linalg.norm(r[:3]), r[3])
                               for r in rows),
                         anchor_kind=KIND_FACE, anchor_id=int(f))


def vertical_space_edge(mesh: Mesh, e: int) -> VerticalSpace:
    offsets, planes, _ = edge_vertical_planes(mesh)
    rows = planes[offsets[e]:offsets[e + 1]]
    return VerticalSpace(tuple(Plane(r[:3] / np.linalg.norm(r[:3]), r[3])
                               for r in rows),
                         anchor_kind=KIND_EDGE, anchor_id=int(e))


def convex_poly(cell: ConvexPolytope, vs: VerticalSpace,
                tol: float) -> ConvexPolytope:
    """Cell(v) intersected with the primitive's vertical space."""
    return cell.clip_many(vs.planes, tol,
                          tag=("vertical_space", vs.anchor_id))


def cannot_intercept_edge(v_pos, e_line: Line, poly: ConvexPolytope,
                          margin: float) -> bool:
    """Conservative exclusion: v provably does not intercept the edge."""
    if poly.is_empty:
        return True
    return all(closer_to_point_than_line(x, v_pos, e_line, margin)
               for x in poly.extreme_points())


def cannot_intercept_face(v_pos, f_plane: Plane, poly: ConvexPolytope,
                          margin: float) -> bool:
    if poly.is_empty:
        return True
    return all(closer_to_point_than_plane(x, v_pos, f_plane, margin)
               for x in poly.extreme_points())


# ---------------------------------------------------------------------------
# unified primitive arrays + flooding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimSet:
    """Edges then faces as one primitive list, with flooding seeds,
    vertical-space planes and carrier lines/planes in flat arrays."""
    n_edges: int
    n_faces: int
    seeds: np.ndarray
    seed_off: np.ndarray
    planes: np.ndarray
    plane_off: np.ndarray
    is_edge: np.ndarray
    lines: np.ndarray       # (n_prim, 6), zeros for faces
    faceplanes: np.ndarray  # (n_prim, 4), zeros for edges


def build_prim_set(mesh: Mesh) -> PrimSet:
    ne = mesh.n_edges
    nf = mesh.n_faces
    np_ = ne + nf
    e_off, e_planes, e_lines = edge_vertical_planes(mesh)
    f_vs = face_vertical_planes(mesh)
    f_pl = face_planes(mesh)

    seed_off = np.zeros(np_ + 1, np.int64)
    seed_off[1:ne + 1] = 2
    seed_off[ne + 1:] = 3
    np.cumsum(seed_off[1:], out=seed_off[1:])
    seeds = np.concatenate([mesh.edges.reshape(-1),
                            mesh.faces.reshape(-1)]).astype(np.int64)

    plane_off = np.zeros(np_ + 1, np.int64)
    plane_off[1:ne + 1] = np.diff(e_off)
    plane_off[ne + 1:] = 3
    np.cumsum(plane_off[1:], out=plane_off[1:])
    planes = np.concatenate([e_planes, f_vs.reshape(-1, 4)], axis=0)

    is_edge = np.zeros(np_, np.uint8)
    is_edge[:ne] = 1
    lines = np.zeros((np_, 6))
    lines[:ne] = e_lines
    faceplanes = np.zeros((np_, 4))
    faceplanes[ne:] = f_pl
    return PrimSet(n_edges=ne, n_faces=nf, seeds=seeds, seed_off=seed_off,
                   planes=np.ascontiguousarray(planes), plane_off=plane_off,
                   is_edge=is_edge, lines=lines, faceplanes=faceplanes)


@dataclass
class InterceptionTable:
    """Per-vertex candidate lists, flattened and sorted by
    (vertex, kind, primitive id)."""
    ent_off: np.ndarray    # (n_vertices + 1,)
    ent_kind: np.ndarray   # KIND_EDGE | KIND_FACE
    ent_prim: np.ndarray   # edge id or face id
    ent_box: np.ndarray    # (K, 6) conservative candidate boxes

    @property
    def n_entries(self):
        return self.ent_kind.shape[0]

    def entries(self, v: int):
        s = slice(self.ent_off[v], self.ent_off[v + 1])
        return self.ent_kind[s], self.ent_prim[s], self.ent_box[s]

    def entry_set(self, v: int):
        k, p, _ = self.entries(v)
        return set(zip(k.tolist(), p.tolist()))


def _flood_raw(mesh: Mesh, cells: VoronoiCells, graph: NeighborGraph,
               prims: PrimSet, sel=None, exhaustive: bool = False):
    """Run flooding (or the exhaustive scan) over the selected primitives.
    Returns (vertex ids, unified prim ids, boxes)."""
    M = cells.config.half_extent
    tol = cells.config.clip_tol
    margin = 1e-10 * M
    box_pad = 1e-9 * M
    nv = mesh.n_vertices

    if sel is None:
        seeds, seed_off = prims.seeds, prims.seed_off
        planes, plane_off = prims.planes, prims.plane_off
        is_edge, lines, faceplanes = prims.is_edge, prims.lines, prims.faceplanes
        remap = None
    else:
        sel = np.asarray(sel, dtype=np.int64)
        seed_off = np.zeros(sel.size + 1, np.int64)
        plane_off = np.zeros(sel.size + 1, np.int64)
        seed_parts = []
        plane_parts = []
        for i, p in enumerate(sel):
            seed_parts.append(prims.seeds[prims.seed_off[p]:prims.seed_off[p + 1]])
            plane_parts.append(prims.planes[prims.plane_off[p]:prims.plane_off[p + 1]])
            seed_off[i + 1] = seed_off[i] + seed_parts[-1].shape[0]
            plane_off[i + 1] = plane_off[i] + plane_parts[-1].shape[0]
        seeds = np.concatenate(seed_parts)
        planes = np.ascontiguousarray(np.concatenate(plane_parts, axis=0))
        is_edge = prims.is_edge[sel]
        lines = np.ascontiguousarray(prims.lines[sel])
        faceplanes = np.ascontiguousarray(prims.faceplanes[sel])
        remap = sel

    from .vorocell import _scratch
    Ca, CPa, Ea, Cb, CPb, Eb, _, _, side, newidx = _scratch()
    box = np.empty(6)
    visited = np.zeros(nv, np.int64)
    queue = np.empty(nv, np.int64)
    c_n = np.diff(cells.c_off)
    e_n = np.diff(cells.e_off)
    nprim = seed_off.shape[0] - 1
    cap = max(64 * nprim, 4096)
    while True:
        out_v = np.empty(cap, np.int64)
        out_prim = np.empty(cap, np.int64)
        out_box = np.empty((cap, 6))
        cnt = K.flood_primitives(
            cells.points, seeds, seed_off, planes, plane_off,
            is_edge, lines, faceplanes,
            cells.C, cells.CP, cells.E, cells.c_off, c_n, cells.e_off, e_n,
            graph.offsets, graph.targets, margin, tol, box_pad,
            out_v, out_prim, out_box, visited, 0, queue,
            Ca, CPa, Ea, Cb, CPb, Eb, side, newidx, box, exhaustive)
        if cnt >= 0:
            break
        cap *= 2
        visited[:] = 0
    pv = out_v[:cnt].copy()
    pp = out_prim[:cnt].copy()
    if remap is not None:
        pp = remap[pp]
    return pv, pp, out_box[:cnt].copy()


def flood_interceptors(mesh: Mesh, cells: VoronoiCells, graph: NeighborGraph,
                       kind: int, prim_id: int, prims: PrimSet = None,
                       exhaustive: bool = False):
    """Interceptor vertices of one edge/face, with their candidate boxes."""
    if prims is None:
        prims = build_prim_set(mesh)
    p = prim_id if kind == KIND_EDGE else prims.n_edges + prim_id
    pv, _, boxes = _flood_raw(mesh, cells, graph, prims, sel=[p],
                              exhaustive=exhaustive)
    return pv, boxes


def build_table(mesh: Mesh, cells: VoronoiCells, graph: NeighborGraph,
                prims: PrimSet = None,
                exhaustive: bool = False) -> InterceptionTable:
    """Flood every edge and face; group accepted (vertex, primitive) pairs
    per vertex.  `exhaustive=True` replaces flooding with an all-vertices
    scan (the oracle used to validate flooding on small meshes)."""
    if prims is None:
        prims = build_prim_set(mesh)
    pv, pp, boxes = _flood_raw(mesh, cells, graph, prims,
                               exhaustive=exhaustive)
    kind = np.where(pp < prims.n_edges, KIND_EDGE, KIND_FACE).astype(np.int64)
    pid = np.where(pp < prims.n_edges, pp, pp - prims.n_edges)
    order = np.lexsort((pid, kind, pv))
    pv = pv[order]
    kind = kind[order]
    pid = pid[order]
    boxes = boxes[order]
    off = np.zeros(mesh.n_vertices + 1, np.int64)
    np.cumsum(np.bincount(pv, minlength=mesh.n_vertices), out=off[1:])
    return InterceptionTable(ent_off=off, ent_kind=kind, ent_prim=pid,
                             ent_box=np.ascontiguousarray(boxes))


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def table_stats(table: InterceptionTable, cell_volumes: np.ndarray) -> dict:
    """Per-kind list-length statistics: unweighted mean (avg1), cell-volume
    weighted mean (avg2) and maximum."""
    n = table.ent_off.shape[0] - 1
    lens = {}
    counts = np.diff(table.ent_off)
    is_edge = table.ent_kind == KIND_EDGE
    ecnt = np.zeros(n, np.int64)
    vert_of_entry = np.repeat(np.arange(n), counts)
    np.add.at(ecnt, vert_of_entry[is_edge], 1)
    fcnt = counts - ecnt
    vols = np.asarray(cell_volumes, dtype=np.float64)
    wsum = vols.sum()
    out = {}
    for name, arr in (("edges", ecnt), ("faces", fcnt), ("total", counts)):
        out[name] = {
            "avg1": float(arr.mean()) if n else 0.0,
            "avg2": float((arr * vols).sum() / wsum) if wsum > 0 else 0.0,
            "max": int(arr.max()) if n else 0,
        }
    return out


def length_histogram(table: InterceptionTable):
    """(length, vertex count) rows over total list lengths."""
    counts = np.diff(table.ent_off)
    lengths, num = np.unique(counts, return_counts=True)
    return np.stack([lengths, num], axis=1)
