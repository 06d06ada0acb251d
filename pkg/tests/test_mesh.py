"""Mesh ingestion tests: counts, welding, dropped faces, adjacency
invariants, file format round trips and quality metrics."""
import math
import struct

import numpy as np
import pytest

from p2m.mesh import (MeshError, build_mesh, load_mesh, mesh_stats, save_obj,
                      triangle_quality)

from meshgen import cube_mesh, tet_mesh, icosphere


def test_cube_counts(cube):
    assert (cube.n_vertices, cube.n_edges, cube.n_faces) == (8, 18, 12)


def test_tet_counts(tet_regular):
    assert (tet_regular.n_vertices, tet_regular.n_edges,
            tet_regular.n_faces) == (4, 6, 4)


def test_euler_formula_closed_meshes():
    for mesh in (cube_mesh(), tet_mesh(), icosphere(2)):
        # V - E + F = 2 for a closed genus-0 surface
        assert mesh.n_vertices - mesh.n_edges + mesh.n_faces == 2


def test_edges_are_sorted_unique():
    mesh = icosphere(1)
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    assert np.unique(mesh.edges, axis=0).shape[0] == mesh.n_edges


def test_face_edges_align_with_faces(cube):
    for f in range(cube.n_faces):
        a, b, c = cube.faces[f]
        want = [tuple(sorted(p)) for p in ((a, b), (b, c), (c, a))]
        got = [tuple(cube.edges[e]) for e in cube.face_edges[f]]
        assert got == want


def test_adjacency_sums(cube):
    # every face contributes 3 edge slots and 3 vertex slots
    assert cube.edge_faces[1].shape[0] == 3 * cube.n_faces
    assert cube.vertex_faces[1].shape[0] == 3 * cube.n_faces
    assert cube.vertex_edges[1].shape[0] == 2 * cube.n_edges


def test_edge_faces_content(cube):
    off, tgt = cube.edge_faces
    for e in range(cube.n_edges):
        fs = set(tgt[off[e]:off[e + 1]])
        for f in fs:
            assert e in cube.face_edges[f]
        # a closed manifold edge borders exactly two faces
        assert len(fs) == 2


def test_exact_weld():
    # triangle soup of a tetrahedron: 4 faces x 3 corners = 12 vertices
    base = tet_mesh()
    soup_v = base.vertices[base.faces].reshape(-1, 3)
    soup_f = np.arange(12).reshape(-1, 3)
    mesh = build_mesh(soup_v, soup_f)
    assert (mesh.n_vertices, mesh.n_edges, mesh.n_faces) == (4, 6, 4)


def test_epsilon_weld():
    v = np.array([[0, 0, 0], [1e-9, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    f = np.array([[0, 2, 3], [1, 3, 2]])
    mesh = build_mesh(v, f, weld_epsilon=1e-6)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1  # the two faces became duplicates
    assert mesh.dropped_duplicate == 1


def test_drop_repeated_index_and_zero_area():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float)
    f = np.array([[0, 1, 1],      # repeated index
                  [0, 1, 3],      # collinear -> zero area
                  [0, 1, 2]])     # fine
    mesh = build_mesh(v, f)
    assert mesh.n_faces == 1
    assert mesh.dropped_degenerate == 2


def test_drop_duplicate_faces_any_orientation():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    f = np.array([[0, 1, 2], [2, 1, 0], [1, 2, 0]])
    mesh = build_mesh(v, f)
    assert mesh.n_faces == 1
    assert mesh.dropped_duplicate == 2


def test_build_mesh_validations():
    with pytest.raises(MeshError):
        build_mesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    with pytest.raises(MeshError):
        build_mesh(np.array([[0, 0, np.inf]]), np.zeros((0, 3), np.int64))
    with pytest.raises(MeshError):
        build_mesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_obj_round_trip(tmp_path, cube):
    p = tmp_path / "cube.obj"
    save_obj(cube, p)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, cube.vertices)
    assert np.array_equal(back.faces, cube.faces)


def test_obj_negative_indices_and_quads(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                 "f -4 -3 -2 -1\n")   # quad with relative indices
    mesh = load_mesh(p)
    assert mesh.n_vertices == 4
    assert mesh.n_faces == 2          # fan-triangulated


def test_ply_ascii(tmp_path):
    p = tmp_path / "tri.ply"
    p.write_text(
        "ply\nformat ascii 1.0\n"
        "element vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0 0 0\n1 0 0\n0 1 0\n"
        "3 0 1 2\n")
    mesh = load_mesh(p)
    assert mesh.n_vertices == 3 and mesh.n_faces == 1


def test_ply_binary_little_endian(tmp_path):
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
                     dtype="<f4")
    header = ("ply\nformat binary_little_endian 1.0\n"
              "element vertex 4\n"
              "property float x\nproperty float y\nproperty float z\n"
              "element face 2\n"
              "property list uchar int vertex_indices\n"
              "end_header\n").encode()
    body = verts.tobytes()
    for tri in ([0, 1, 2], [0, 1, 3]):
        body += struct.pack("<B3i", 3, *tri)
    p = tmp_path / "bin.ply"
    p.write_bytes(header + body)
    mesh = load_mesh(p)
    assert mesh.n_vertices == 4 and mesh.n_faces == 2
    assert np.allclose(mesh.vertices[1], [1, 0, 0])


def test_stl_binary_welds(tmp_path, tet_regular):
    tris = tet_regular.vertices[tet_regular.faces]  # (4, 3, 3)
    recs = b""
    for t in tris:
        recs += struct.pack("<3f", 0, 0, 0)
        for v in t:
            recs += struct.pack("<3f", *v)
        recs += struct.pack("<H", 0)
    p = tmp_path / "tet.stl"
    p.write_bytes(b"\0" * 80 + struct.pack("<I", len(tris)) + recs)
    mesh = load_mesh(p)
    assert (mesh.n_vertices, mesh.n_faces) == (4, 4)


def test_stl_ascii(tmp_path):
    p = tmp_path / "a.stl"
    p.write_text(
        "solid a\n facet normal 0 0 1\n  outer loop\n"
        "   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n"
        "  endloop\n endfacet\nendsolid a\n")
    mesh = load_mesh(p)
    assert (mesh.n_vertices, mesh.n_faces) == (3, 1)


def test_unknown_format_raises(tmp_path):
    p = tmp_path / "m.xyz"
    p.write_text("0 0 0")
    with pytest.raises(MeshError):
        load_mesh(p)


# ---------------------------------------------------------------------------
# quality metrics
# ---------------------------------------------------------------------------

def test_quality_equilateral_is_one():
    h = math.sqrt(3.0) / 2.0
    q = triangle_quality([0, 0, 0], [1, 0, 0], [0.5, h, 0])
    assert q == pytest.approx(1.0)


def test_quality_right_isoceles():
    # area 1/2, half-perimeter (2+sqrt(2))/2, longest edge sqrt(2)
    q = triangle_quality([0, 0, 0], [1, 0, 0], [0, 1, 0])
    expect = 6.0 / math.sqrt(3.0) * 0.5 / ((2 + math.sqrt(2)) / 2 * math.sqrt(2))
    assert q == pytest.approx(expect)
    assert q == pytest.approx(0.7174, abs=1e-4)


def test_quality_degenerate_is_zero():
    assert triangle_quality([0, 0, 0], [1, 0, 0], [2, 0, 0]) == 0.0


def test_quality_scale_invariant():
    rng = np.random.Generator(np.random.Philox(5))
    for _ in range(50):
        a, b, c = rng.normal(size=(3, 3))
        q1 = triangle_quality(a, b, c)
        q2 = triangle_quality(7.3 * a, 7.3 * b, 7.3 * c)
        assert q2 == pytest.approx(q1, rel=1e-12)
        assert 0.0 <= q1 <= 1.0 + 1e-12


def test_mesh_stats_angle_oracle():
    """bad_triangle_fraction must equal a direct per-face angle recount."""
    mesh = build_mesh(
        np.array([[0, 0, 0], [1, 0, 0], [0.5, 0.05, 0],   # skinny
                  [0.5, 1.0, 0]], float),
        np.array([[0, 1, 2], [0, 1, 3]]))
    st = mesh_stats(mesh)

    def min_angle(tri):
        a, b, c = mesh.vertices[tri]
        out = []
        for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
            u, v = q - p, r - p
            out.append(math.degrees(math.acos(
                np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))))
        return min(out)

    expect = np.mean([min_angle(f) < 10.0 for f in mesh.faces])
    assert st.bad_triangle_fraction == pytest.approx(expect)
    assert st.face_count == 2
    assert st.min_quality < 0.3 < st.mean_quality
