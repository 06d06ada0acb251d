"""Geometry kernel tests: hand-checked values, dense-sampling oracles and
invariance properties."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2m.geom import (Aabb, DegenerateTriangleError, Line, Plane,
                      closer_to_point_than_line, closer_to_point_than_plane,
                      dist_point_line, dist_point_plane,
                      point_segment_distance, point_triangle_distance)

finite = st.floats(min_value=-100.0, max_value=100.0,
                   allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


# ---------------------------------------------------------------------------
# dense-sampling oracles
# ---------------------------------------------------------------------------

def segment_distance_oracle(q, a, b, samples=20001):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    pts = a[None, :] * (1 - t) + b[None, :] * t
    return float(np.linalg.norm(pts - q[None, :], axis=1).min())


def triangle_distance_oracle(q, tri, n=200):
    a, b, c = tri
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    u = (i[keep] / n)[:, None]
    v = (j[keep] / n)[:, None]
    pts = a[None, :] * (1 - u - v) + b[None, :] * u + c[None, :] * v
    return float(np.linalg.norm(pts - q[None, :], axis=1).min())


# ---------------------------------------------------------------------------
# Plane / Line / Aabb basics
# ---------------------------------------------------------------------------

def test_plane_requires_unit_normal():
    with pytest.raises(ValueError):
        Plane(np.array([1.0, 1.0, 0.0]), 0.0)


def test_plane_from_point_normal_normalizes():
    p = Plane.from_point_normal([0, 0, 5], [0, 0, 2])
    assert np.allclose(p.normal, [0, 0, 1])
    assert p.offset == pytest.approx(5.0)
    assert p.signed_value([0, 0, 7]) == pytest.approx(2.0)
    assert p.signed_value([3, -1, 5]) == pytest.approx(0.0)


def test_plane_as_row():
    p = Plane(np.array([0.0, 1.0, 0.0]), 2.5)
    assert np.array_equal(p.as_row(), [0.0, 1.0, 0.0, 2.5])


def test_line_through_and_distance():
    l = Line.through([0, 0, 0], [2, 0, 0])
    assert dist_point_line([1, 3, 4], l) == pytest.approx(5.0)
    assert dist_point_line([-7, 0, 0], l) == pytest.approx(0.0)


def test_line_rejects_coincident_points():
    with pytest.raises(ValueError):
        Line.through([1, 2, 3], [1, 2, 3])


def test_aabb_contains_and_of_points():
    box = Aabb.of_points([[0, 0, 0], [1, 2, 3], [0.5, 1, -1]])
    assert np.array_equal(box.min, [0, 0, -1])
    assert np.array_equal(box.max, [1, 2, 3])
    assert box.contains([0.5, 0.5, 0.0])
    assert box.contains([1, 2, 3])          # boundary is inside
    assert not box.contains([1.0001, 0, 0])


def test_aabb_rejects_inverted():
    with pytest.raises(ValueError):
        Aabb(np.array([1.0, 0, 0]), np.array([0.0, 1, 1]))


def test_rejects_nonfinite():
    with pytest.raises(ValueError):
        Line.through([0, 0, 0], [np.nan, 1, 1])


# ---------------------------------------------------------------------------
# point-segment distance
# ---------------------------------------------------------------------------

def test_segment_trivial_cases():
    a = np.array([0.0, 0, 0])
    b = np.array([1.0, 0, 0])
    d, c = point_segment_distance([0.5, 1, 0], a, b)     # interior foot
    assert d == pytest.approx(1.0)
    assert np.allclose(c, [0.5, 0, 0])
    d, c = point_segment_distance([-2, 0, 0], a, b)      # clamped to a
    assert d == pytest.approx(2.0)
    assert np.allclose(c, a)
    d, c = point_segment_distance([4, 4, 0], a, b)       # clamped to b
    assert d == pytest.approx(5.0)
    assert np.allclose(c, b)


def test_segment_degenerate_is_point_distance():
    a = np.array([1.0, 1, 1])
    d, c = point_segment_distance([1, 1, 4], a, a)
    assert d == pytest.approx(3.0)
    assert np.allclose(c, a)


def test_segment_vs_dense_sampling_oracle():
    rng = np.random.Generator(np.random.Philox(11))
    for _ in range(200):
        q, a, b = rng.normal(size=(3, 3)) * 3.0
        d, c = point_segment_distance(q, a, b)
        assert d <= segment_distance_oracle(q, a, b) + 1e-7
        # the reported closest point is on the segment and at distance d
        t = float((c - a) @ (b - a) / max((b - a) @ (b - a), 1e-300))
        assert -1e-12 <= t <= 1.0 + 1e-12
        assert np.linalg.norm(q - c) == pytest.approx(d, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(q=vec3, a=vec3, b=vec3, s=st.floats(0.0, 1.0))
def test_segment_lower_bounds_any_interior_point(q, a, b, s):
    d, _ = point_segment_distance(q, a, b)
    p = a * (1 - s) + b * s
    assert d <= np.linalg.norm(q - p) + 1e-9 * (1 + np.linalg.norm(q - p))


# ---------------------------------------------------------------------------
# point-triangle distance
# ---------------------------------------------------------------------------

TRI = [np.array([0.0, 0, 0]), np.array([2.0, 0, 0]), np.array([0.0, 2, 0])]


def test_triangle_trivial_cases():
    d, c, f = point_triangle_distance([0.5, 0.5, 3.0], TRI)
    assert (d, f) == (pytest.approx(3.0), "interior")
    assert np.allclose(c, [0.5, 0.5, 0])
    d, c, f = point_triangle_distance([-1, -1, 0], TRI)
    assert (d, f) == (pytest.approx(np.sqrt(2.0)), "vertex")
    assert np.allclose(c, [0, 0, 0])
    d, c, f = point_triangle_distance([1.0, -2.0, 0], TRI)
    assert (d, f) == (pytest.approx(2.0), "edge")
    assert np.allclose(c, [1, 0, 0])
    d, c, f = point_triangle_distance([2, 2, 0], TRI)    # beyond hypotenuse
    assert (d, f) == (pytest.approx(np.sqrt(2.0)), "edge")
    assert np.allclose(c, [1, 1, 0])


def test_triangle_rejects_degenerate():
    with pytest.raises(DegenerateTriangleError):
        point_triangle_distance([0, 0, 1],
                                [np.zeros(3), np.ones(3), 2 * np.ones(3)])


def test_triangle_vs_dense_sampling_oracle():
    rng = np.random.Generator(np.random.Philox(12))
    for _ in range(150):
        pts = rng.normal(size=(4, 3)) * 2.0
        q, tri = pts[0], list(pts[1:])
        try:
            d, c, _ = point_triangle_distance(q, tri)
        except DegenerateTriangleError:
            continue
        dor = triangle_distance_oracle(q, tri)
        assert d <= dor + 1e-12
        assert dor - d <= 5e-2 * max(d, 1e-3)  # oracle grid resolution
        assert np.linalg.norm(q - c) == pytest.approx(d, abs=1e-12)


def test_triangle_cyclic_permutation_invariance():
    rng = np.random.Generator(np.random.Philox(13))
    for _ in range(100):
        pts = rng.normal(size=(4, 3))
        q, a, b, c = pts
        try:
            d0 = point_triangle_distance(q, [a, b, c])[0]
        except DegenerateTriangleError:
            continue
        assert point_triangle_distance(q, [b, c, a])[0] == pytest.approx(d0, rel=1e-12, abs=1e-13)
        assert point_triangle_distance(q, [c, b, a])[0] == pytest.approx(d0, rel=1e-12, abs=1e-13)


def test_triangle_rigid_motion_invariance():
    rng = np.random.Generator(np.random.Philox(14))
    # a fixed rotation (orthonormal via QR) plus translation
    R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    t = np.array([3.0, -2.0, 7.0])
    for _ in range(100):
        pts = rng.normal(size=(4, 3))
        q, a, b, c = pts
        try:
            d0 = point_triangle_distance(q, [a, b, c])[0]
        except DegenerateTriangleError:
            continue
        d1 = point_triangle_distance(R @ q + t, [R @ a + t, R @ b + t, R @ c + t])[0]
        assert d1 == pytest.approx(d0, rel=1e-10, abs=1e-12)


def test_triangle_closest_point_is_in_plane_for_interior():
    d, c, f = point_triangle_distance([0.3, 0.4, -2.5], TRI)
    assert f == "interior"
    assert c[2] == pytest.approx(0.0, abs=1e-15)
    assert d == pytest.approx(2.5)


# ---------------------------------------------------------------------------
# bisector-side predicates
# ---------------------------------------------------------------------------

def test_closer_to_point_than_plane_examples():
    p = Plane(np.array([0.0, 0, 1.0]), 0.0)  # z = 0 plane
    v = np.array([0.0, 0, 2.0])
    # at x = (0,0,1.5): |x-v| = 0.5, Dist(plane) = 1.5
    assert closer_to_point_than_plane([0, 0, 1.5], v, p, 0.0)
    assert closer_to_point_than_plane([0, 0, 1.5], v, p, 0.9)
    assert not closer_to_point_than_plane([0, 0, 1.5], v, p, 1.1)
    # equidistant point: margin 0 keeps it (<=), any margin rejects
    assert closer_to_point_than_plane([0, 0, 1.0], v, p, 0.0)
    assert not closer_to_point_than_plane([0, 0, 1.0], v, p, 1e-12)


def test_closer_to_point_than_line_examples():
    l = Line(np.array([0.0, 0, 0]), np.array([1.0, 0, 0]))
    v = np.array([0.0, 4.0, 0])
    assert closer_to_point_than_line([0, 3.5, 0], v, l, 0.0)
    assert not closer_to_point_than_line([0, 1.0, 0], v, l, 0.0)


def test_predicates_reject_negative_margin():
    l = Line(np.array([0.0, 0, 0]), np.array([1.0, 0, 0]))
    p = Plane(np.array([0.0, 0, 1.0]), 0.0)
    with pytest.raises(ValueError):
        closer_to_point_than_line([0, 1, 0], [0, 2, 0], l, -1e-3)
    with pytest.raises(ValueError):
        closer_to_point_than_plane([0, 0, 1], [0, 0, 2], p, -1e-3)


@settings(max_examples=100, deadline=None)
@given(x=vec3, v=vec3)
def test_plane_predicate_matches_direct_comparison(x, v):
    p = Plane(np.array([0.0, 0, 1.0]), -1.0)
    expect = np.linalg.norm(x - v) <= abs(x[2] + 1.0)
    assert closer_to_point_than_plane(x, v, p, 0.0) == expect
