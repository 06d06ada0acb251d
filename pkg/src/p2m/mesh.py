"""Triangle mesh ingestion: OBJ/PLY/STL loading, vertex welding, unique-edge
extraction, incidence maps, and triangle quality statistics.

The loaded Mesh is immutable; all downstream stages read it concurrently.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with deduplicated edges and adjacency.

    vertices: (n, 3) float64
    faces: (m, 3) int64, no repeated indices within a face
    edges: (k, 2) int64, sorted pairs, each unordered edge exactly once
    face_edges: (m, 3) int64, edge ids of (v0v1, v1v2, v2v0)
    edge_faces / vertex_edges / vertex_faces: CSR adjacency (offsets, targets)
    dropped_degenerate / dropped_duplicate: ingestion counters
    """
    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    face_edges: np.ndarray
    edge_faces: tuple
    vertex_edges: tuple
    vertex_faces: tuple
    dropped_degenerate: int = 0
    dropped_duplicate: int = 0

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _csr(keys, vals, n):
    """Group vals by integer key into CSR (offsets, targets)."""
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, vals[order].astype(np.int64)


def build_mesh(vertices, faces, weld_epsilon: float = 0.0) -> Mesh:
    """Assemble a Mesh from raw arrays: weld, drop bad faces, build edges
    and adjacency."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if vertices.shape[0] == 0:
        raise MeshError("empty mesh: no vertices")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinates")
    if faces.size and (faces.min() < 0 or faces.max() >= vertices.shape[0]):
        raise MeshError("face references an out-of-range vertex")

    # weld duplicate vertices (exact when epsilon = 0, grid hash otherwise)
    if weld_epsilon > 0.0:
        keys = np.round(vertices / weld_epsilon).astype(np.int64)
    else:
        keys = vertices
    uniq, first, remap = np.unique(keys, axis=0, return_index=True,
                                   return_inverse=True)
    remap = remap.reshape(-1)
    if uniq.shape[0] != vertices.shape[0]:
        vertices = vertices[first]  # representative = first occurrence
        faces = remap[faces] if faces.size else faces
    n = vertices.shape[0]

    dropped_degen = 0
    dropped_dup = 0
    if faces.size:
        # drop faces with a repeated vertex index
        ok = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
              & (faces[:, 2] != faces[:, 0]))
        dropped_degen += int((~ok).sum())
        faces = faces[ok]
    if faces.size:
        # drop exact zero-area faces
        a = vertices[faces[:, 0]]
        cr = np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)
        area2 = np.einsum("ij,ij->i", cr, cr)
        ok = area2 > 0.0
        dropped_degen += int((~ok).sum())
        faces = faces[ok]
    if faces.size:
        # drop duplicate faces (same vertex triple, any orientation)
        tri = np.sort(faces, axis=1)
        _, keep = np.unique(tri, axis=0, return_index=True)
        dropped_dup += faces.shape[0] - keep.shape[0]
        faces = faces[np.sort(keep)]

    m = faces.shape[0]
    if m:
        pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]],
                                faces[:, [2, 0]]], axis=0)
        pairs = np.sort(pairs, axis=1)
        edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        face_edges = np.ascontiguousarray(
            inv.reshape(3, m).T, dtype=np.int64)
        k = edges.shape[0]
        fid = np.tile(np.arange(m, dtype=np.int64), 3)
        edge_faces = _csr(inv, fid, k)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        face_edges = np.zeros((0, 3), dtype=np.int64)
        edge_faces = (np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64))
        k = 0

    if k:
        eid = np.repeat(np.arange(k, dtype=np.int64), 2)
        vertex_edges = _csr(edges.reshape(-1), eid, n)
    else:
        vertex_edges = (np.zeros(n + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int64))
    if m:
        fid = np.repeat(np.arange(m, dtype=np.int64), 3)
        vertex_faces = _csr(faces.reshape(-1), fid, n)
    else:
        vertex_faces = (np.zeros(n + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int64))

    return Mesh(vertices=vertices, faces=np.ascontiguousarray(faces),
                edges=np.ascontiguousarray(edges), face_edges=face_edges,
                edge_faces=edge_faces, vertex_edges=vertex_edges,
                vertex_faces=vertex_faces,
                dropped_degenerate=dropped_degen,
                dropped_duplicate=dropped_dup)


# ---------------------------------------------------------------------------
# file loaders
# ---------------------------------------------------------------------------

def _load_obj(path):
    verts = []
    faces = []
    with open(path, "r", errors="replace") as fh:
        for line in fh:
            if line.startswith("v "):
                parts = line.split()
                verts.append((float(parts[1]), float(parts[2]),
                              float(parts[3])))
            elif line.startswith("f "):
                idx = []
                for tok in line.split()[1:]:
                    s = tok.split("/")[0]
                    i = int(s)
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for j in range(1, len(idx) - 1):  # fan-triangulate
                    faces.append((idx[0], idx[j], idx[j + 1]))
    if not verts:
        raise MeshError(f"{path}: no vertices found")
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3)


_PLY_TYPES = {"char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
              "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
              "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
              "float": "f4", "float32": "f4", "double": "f8", "float64": "f8"}


def _load_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if end < 0:
        raise MeshError(f"{path}: not a PLY file (no end_header)")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[data.find(b"\n", end) + 1:]
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype, is_list, count_dtype)])
    for line in header:
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if parts[1] == "list":
                elements[-1][2].append((parts[4], _PLY_TYPES[parts[3]],
                                        True, _PLY_TYPES[parts[2]]))
            else:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]],
                                        False, None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt}")

    verts = None
    faces = []
    if fmt == "ascii":
        toks = body.split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = {p[0]: [] for p in props}
                for _ in range(count):
                    for p in props:
                        cols[p[0]].append(float(toks[pos]))
                        pos += 1
                verts = np.stack([np.array(cols[a]) for a in "xyz"], axis=1)
            elif name == "face":
                for _ in range(count):
                    for p in props:
                        if p[2]:
                            ln = int(toks[pos])
                            pos += 1
                            idx = [int(toks[pos + j]) for j in range(ln)]
                            pos += ln
                            if p[0] in ("vertex_indices", "vertex_index"):
                                for j in range(1, ln - 1):
                                    faces.append((idx[0], idx[j], idx[j + 1]))
                        else:
                            pos += 1
            else:
                for _ in range(count):
                    pos += len(props)
    else:
        off = 0
        for name, count, props in elements:
            has_list = any(p[2] for p in props)
            if not has_list:
                dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=off)
                off += dt.itemsize * count
                if name == "vertex":
                    verts = np.stack([arr[a].astype(np.float64)
                                      for a in "xyz"], axis=1)
            else:
                for _ in range(count):
                    for p in props:
                        if p[2]:
                            cdt = np.dtype("<" + p[3])
                            ln = int(np.frombuffer(body, cdt, 1, off)[0])
                            off += cdt.itemsize
                            idt = np.dtype("<" + p[1])
                            idx = np.frombuffer(body, idt, ln, off)
                            off += idt.itemsize * ln
                            if name == "face" and p[0] in ("vertex_indices",
                                                           "vertex_index"):
                                for j in range(1, ln - 1):
                                    faces.append((int(idx[0]), int(idx[j]),
                                                  int(idx[j + 1])))
                        else:
                            off += np.dtype("<" + p[1]).itemsize
    if verts is None:
        raise MeshError(f"{path}: PLY has no vertex element")
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _load_stl(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) >= 84:
        ntri = struct.unpack_from("<I", data, 80)[0]
        if len(data) == 84 + 50 * ntri and not data[:5] == b"solid":
            return _stl_binary(data, ntri)
        if len(data) == 84 + 50 * ntri and data[:5] == b"solid":
            # binary files sometimes start with "solid" anyway; size wins
            return _stl_binary(data, ntri)
    text = data.decode("ascii", errors="replace")
    tris = []
    cur = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "vertex":
            cur.append((float(parts[1]), float(parts[2]), float(parts[3])))
            if len(cur) == 3:
                tris.extend(cur)
                cur = []
    if not tris:
        raise MeshError(f"{path}: no triangles in STL")
    verts = np.array(tris, dtype=np.float64)
    faces = np.arange(verts.shape[0], dtype=np.int64).reshape(-1, 3)
    return verts, faces


def _stl_binary(data, ntri):
    dt = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    recs = np.frombuffer(data, dtype=dt, count=ntri, offset=84)
    verts = recs["v"].reshape(-1, 3).astype(np.float64)
    faces = np.arange(verts.shape[0], dtype=np.int64).reshape(-1, 3)
    return verts, faces


def load_mesh(path, weld_epsilon: float = 0.0) -> Mesh:
    """Load OBJ/PLY/STL.  STL always welds (exact weld by default) since the
    format stores one vertex copy per triangle corner."""
    p = str(path)
    low = p.lower()
    if low.endswith(".obj"):
        verts, faces = _load_obj(p)
    elif low.endswith(".ply"):
        verts, faces = _load_ply(p)
    elif low.endswith(".stl"):
        verts, faces = _load_stl(p)
    else:
        raise MeshError(f"unsupported mesh format: {p}")
    if faces.shape[0] == 0:
        raise MeshError(f"{p}: mesh has no faces")
    return build_mesh(verts, faces, weld_epsilon)


def save_obj(mesh: Mesh, path):
    with open(path, "w") as fh:
        fh.write("# %d vertices %d faces\n" % (mesh.n_vertices, mesh.n_faces))
        for v in mesh.vertices:
            fh.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            fh.write("f %d %d %d\n" % (f[0] + 1, f[1] + 1, f[2] + 1))


# ---------------------------------------------------------------------------
# quality statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeshStats:
    vertex_count: int
    edge_count: int
    face_count: int
    mean_quality: float
    min_quality: float
    bad_triangle_fraction: float  # min angle < 10 degrees


def triangle_quality(a, b, c) -> float:
    """Normalized shape quality 6/sqrt(3) * area / (half_perimeter *
    longest_edge); 1 for an equilateral triangle, 0 for a degenerate one."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    la = np.linalg.norm(b - a)
    lb = np.linalg.norm(c - b)
    lc = np.linalg.norm(a - c)
    h = max(la, lb, lc)
    p = 0.5 * (la + lb + lc)
    s = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    if h == 0.0 or p == 0.0 or s == 0.0:
        return 0.0
    return float(6.0 / math.sqrt(3.0) * s / (p * h))


def _face_qualities(mesh: Mesh):
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    la = np.linalg.norm(b - a, axis=1)
    lb = np.linalg.norm(c - b, axis=1)
    lc = np.linalg.norm(a - c, axis=1)
    h = np.maximum(la, np.maximum(lb, lc))
    p = 0.5 * (la + lb + lc)
    s = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    q = np.zeros(mesh.n_faces)
    ok = (h > 0) & (p > 0)
    q[ok] = 6.0 / math.sqrt(3.0) * s[ok] / (p[ok] * h[ok])
    return q


def _min_angles(mesh: Mesh):
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]

    def ang(p, q, r):
        u = q - p
        v = r - p
        cosv = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))

    return np.minimum(ang(a, b, c), np.minimum(ang(b, c, a), ang(c, a, b)))


def mesh_stats(mesh: Mesh) -> MeshStats:
    q = _face_qualities(mesh)
    bad = float((_min_angles(mesh) < 10.0).mean()) if mesh.n_faces else 0.0
    return MeshStats(vertex_count=mesh.n_vertices,
                     edge_count=mesh.n_edges,
                     face_count=mesh.n_faces,
                     mean_quality=float(q.mean()) if q.size else 0.0,
                     min_quality=float(q.min()) if q.size else 0.0,
                     bad_triangle_fraction=bad)
