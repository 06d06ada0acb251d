"""Query pipeline tests: hand-checked closest features, agreement between
the table-driven pipeline, brute force and the BVH baseline, thread
determinism and domain handling."""
import numpy as np
import pytest

from p2m.geom import point_triangle_distance
from p2m.index import build_index
from p2m.query import (DomainError, brute_force_batch, brute_force_query,
                       build_bvh, bvh_batch, bvh_query, p2m_query,
                       query_batch)

from meshgen import bumpy_blob, cube_mesh, tet_mesh, tube


def numpy_reference(mesh, q):
    """Second independent closest-distance implementation (vectorized
    numpy), used to validate the brute-force oracle itself."""
    q = np.asarray(q, dtype=np.float64)
    best = np.inf
    # vertices
    best = min(best, np.linalg.norm(mesh.vertices - q, axis=1).min())
    # faces via the scalar geometry routine
    for f in mesh.faces:
        d, _, _ = point_triangle_distance(q, mesh.vertices[f])
        best = min(best, d)
    # wire edges (no adjacent face)
    off, tgt = mesh.edge_faces
    for e in range(mesh.n_edges):
        if off[e + 1] - off[e] == 0:
            a, b = mesh.vertices[mesh.edges[e]]
            t = np.clip((q - a) @ (b - a) / ((b - a) @ (b - a)), 0, 1)
            best = min(best, np.linalg.norm(q - (a + t * (b - a))))
    return best


# ---------------------------------------------------------------------------
# hand-checked cases on the unit cube
# ---------------------------------------------------------------------------

def test_cube_face_interior_hit(idx_cube):
    # off the diagonal of the triangulated top face, so the closest feature
    # is a face interior rather than the diagonal edge
    r = p2m_query(idx_cube, [0.2, 0.7, 2.0])
    assert r.kind_name == "face"
    assert r.distance == pytest.approx(1.0)
    assert np.allclose(r.closest_point, [0.2, 0.7, 1.0])


def test_cube_top_center_tie_prefers_edge(idx_cube):
    # directly above the center: the projection lands on the diagonal edge
    # shared by the two top triangles, and ties prefer the lower kind
    r = p2m_query(idx_cube, [0.5, 0.5, 2.0])
    assert r.kind_name == "edge"
    assert r.distance == pytest.approx(1.0)
    assert np.allclose(r.closest_point, [0.5, 0.5, 1.0])


def test_cube_vertex_hit(idx_cube):
    r = p2m_query(idx_cube, [-1.0, -1.0, -1.0])
    assert r.kind_name == "vertex"
    assert r.distance == pytest.approx(np.sqrt(3.0))
    assert np.allclose(r.closest_point, [0, 0, 0])
    assert r.prim_id == 0


def test_cube_edge_hit(idx_cube):
    r = p2m_query(idx_cube, [0.5, -1.0, 2.0])
    assert r.kind_name == "edge"
    assert r.distance == pytest.approx(np.sqrt(2.0))
    assert np.allclose(r.closest_point, [0.5, 0.0, 1.0])


def test_on_surface_distance_zero(idx_cube):
    r = p2m_query(idx_cube, [0.25, 0.75, 1.0])
    assert r.distance == pytest.approx(0.0, abs=1e-15)


def test_query_result_invariants(idx_blob1k, rng):
    qs = rng.normal(size=(500, 3)) * 3.0
    res = query_batch(idx_blob1k, qs)
    for i in range(len(res)):
        r = res.result(i)
        assert r.distance >= 0
        assert r.kind in (0, 1, 2)
        assert np.linalg.norm(qs[i] - r.closest_point) == pytest.approx(
            r.distance, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# cross-implementation agreement
# ---------------------------------------------------------------------------

def test_brute_force_matches_numpy_reference():
    mesh = bumpy_blob(8)
    rng = np.random.Generator(np.random.Philox(51))
    qs = rng.normal(size=(60, 3)) * 2.0
    res = brute_force_batch(mesh, qs)
    for i, q in enumerate(qs):
        assert res.distance[i] == pytest.approx(numpy_reference(mesh, q),
                                                rel=1e-12, abs=1e-12)


def test_brute_force_wire_edges_open_mesh():
    mesh = tube(9, 6)   # open tube: boundary edges, but all edges have faces
    rng = np.random.Generator(np.random.Philox(52))
    qs = rng.normal(size=(40, 3)) * 2.5
    res = brute_force_batch(mesh, qs)
    for i, q in enumerate(qs):
        assert res.distance[i] == pytest.approx(numpy_reference(mesh, q),
                                                rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("make", [cube_mesh, tet_mesh,
                                  lambda: bumpy_blob(12),
                                  lambda: tube(15, 8)])
def test_p2m_equals_brute_force(make, rng):
    mesh = make()
    idx = build_index(mesh)
    lo, hi = mesh.bbox()
    c = 0.5 * (lo + hi)
    for scale in (1.5, 10.0):
        qs = c + (rng.random((4000, 3)) * 2 - 1) * 0.5 * (hi - lo) * scale
        r = query_batch(idx, qs)
        ref = brute_force_batch(mesh, qs)
        rel = np.abs(r.distance - ref.distance) / np.maximum(ref.distance,
                                                             1e-300)
        assert np.max(rel, initial=0.0) <= 1e-9
        # same tie-break rule -> identical feature choice
        assert np.array_equal(r.kind, ref.kind)
        assert np.array_equal(r.prim_id, ref.prim_id)


def test_bvh_equals_brute_force(rng):
    mesh = bumpy_blob(12)
    bvh = build_bvh(mesh)
    qs = rng.normal(size=(3000, 3)) * 4.0
    r = bvh_batch(bvh, qs)
    ref = brute_force_batch(mesh, qs)
    assert np.array_equal(r.distance, ref.distance)
    assert np.array_equal(r.kind, ref.kind)
    assert np.array_equal(r.prim_id, ref.prim_id)


def test_single_query_front_ends_agree(idx_blob1k, blob1k):
    q = [2.0, -1.0, 0.5]
    a = p2m_query(idx_blob1k, q)
    b = brute_force_query(blob1k, q)
    c = bvh_query(build_bvh(blob1k), q)
    assert a.distance == pytest.approx(b.distance, rel=1e-12)
    assert b.distance == c.distance
    assert (a.kind, a.prim_id) == (b.kind, b.prim_id) == (c.kind, c.prim_id)


# ---------------------------------------------------------------------------
# batching, threads, domain
# ---------------------------------------------------------------------------

def test_thread_count_does_not_change_results(idx_blob1k, rng):
    qs = rng.normal(size=(5000, 3)) * 4.0
    r1 = query_batch(idx_blob1k, qs, threads=1)
    for t in (2, 4, 8):
        rt = query_batch(idx_blob1k, qs, threads=t)
        assert np.array_equal(r1.distance, rt.distance)
        assert np.array_equal(r1.closest_point, rt.closest_point)
        assert np.array_equal(r1.kind, rt.kind)
        assert np.array_equal(r1.prim_id, rt.prim_id)


def test_domain_error_outside_cube(idx_cube):
    with pytest.raises(DomainError):
        p2m_query(idx_cube, [1e6, 0, 0])


def test_breakdown_times_sum(idx_blob1k, rng):
    qs = rng.normal(size=(20000, 3)) * 4.0
    query_batch(idx_blob1k, qs[:100], with_breakdown=True)  # warm up
    r = query_batch(idx_blob1k, qs, with_breakdown=True)
    assert r.kdt_time > 0 and r.resolve_time >= 0
    assert r.kdt_time + r.resolve_time == pytest.approx(r.total_time,
                                                        rel=0.05)


def test_far_field_candidates_shrink(idx_blob1k, blob1k, rng):
    """Far away, the nearest-vertex cell gives few gate-passing candidates;
    tested via the per-batch average counter."""
    lo, hi = blob1k.bbox()
    c = 0.5 * (lo + hi)
    avg = []
    for scale in (1.5, 3.0, 10.0):
        qs = c + (rng.random((3000, 3)) * 2 - 1) * 0.5 * (hi - lo) * scale
        r = query_batch(idx_blob1k, qs)
        avg.append(r.avg_candidates_tested)
    assert avg[0] >= avg[1] >= avg[2]


def test_empty_batch(idx_cube):
    r = query_batch(idx_cube, np.zeros((0, 3)))
    assert len(r) == 0
