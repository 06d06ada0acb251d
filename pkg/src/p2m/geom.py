"""Scalar/vector geometry kernel: planes, lines, boxes, exact primitive
distances and the bisector-side predicates used by the interception filters.

Conventions fixed repo-wide:
  * half-spaces are written ``normal . x <= offset``
  * plane distances are unsigned
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

Vec3 = np.ndarray  # shape (3,), float64

_UNIT_TOL = 1e-12


class DegenerateTriangleError(ValueError):
    """Raised for zero-area triangles; callers must skip or handle."""


def _vec(x) -> Vec3:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite coordinates")
    return v


@dataclass(frozen=True)
class Plane:
    """Half-space normal . x <= offset with a unit normal."""
    normal: Vec3
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _vec(self.normal))
        n = float(np.linalg.norm(self.normal))
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"plane normal must be unit length, |n| = {n}")

    @staticmethod
    def from_point_normal(point, normal) -> "Plane":
        n = _vec(normal)
        ln = np.linalg.norm(n)
        if ln == 0.0:
            raise ValueError("zero plane normal")
        n = n / ln
        return Plane(n, float(n @ _vec(point)))

    def signed_value(self, x) -> float:
        """normal . x - offset (<= 0 inside the half-space)."""
        return float(self.normal @ _vec(x) - self.offset)

    def as_row(self) -> np.ndarray:
        return np.array([*self.normal, self.offset], dtype=np.float64)


@dataclass(frozen=True)
class Line:
    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec(self.origin))
        object.__setattr__(self, "direction", _vec(self.direction))
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"line direction must be unit length, |d| = {n}")

    @staticmethod
    def through(a, b) -> "Line":
        a = _vec(a)
        d = _vec(b) - a
        ln = np.linalg.norm(d)
        if ln == 0.0:
            raise ValueError("coincident points do not define a line")
        return Line(a, d / ln)


@dataclass(frozen=True)
class Aabb:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        object.__setattr__(self, "min", _vec(self.min))
        object.__setattr__(self, "max", _vec(self.max))
        if np.any(self.min > self.max):
            raise ValueError("box min must be <= max componentwise")

    def contains(self, x) -> bool:
        x = _vec(x)
        return bool(np.all(x >= self.min) and np.all(x <= self.max))

    @staticmethod
    def of_points(pts) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return Aabb(pts.min(axis=0), pts.max(axis=0))


def point_segment_distance(q, a, b):
    """Exact clamped distance from q to segment ab.  A degenerate segment
    (a == b) falls back to the point distance."""
    q = _vec(q)
    a = _vec(a)
    b = _vec(b)
    cx, cy, cz, _ = K.closest_on_segment(q[0], q[1], q[2], a[0], a[1], a[2],
                                         b[0], b[1], b[2])
    c = np.array([cx, cy, cz])
    return float(np.linalg.norm(q - c)), c


_FEATURE_NAMES = {K.FEAT_V0: "vertex", K.FEAT_V1: "vertex", K.FEAT_V2: "vertex",
                  K.FEAT_E01: "edge", K.FEAT_E12: "edge", K.FEAT_E20: "edge",
                  K.FEAT_INT: "interior"}


def point_triangle_distance(q, tri):
    """Exact distance from q to the closed triangle.  Returns
    (distance, closest point, feature) with feature in
    {"vertex", "edge", "interior"}."""
    q = _vec(q)
    a, b, c = (_vec(p) for p in tri)
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    if area2 == 0.0:
        raise DegenerateTriangleError("zero-area triangle")
    px, py, pz, feat = K.closest_on_triangle(q[0], q[1], q[2],
                                             a[0], a[1], a[2],
                                             b[0], b[1], b[2],
                                             c[0], c[1], c[2])
    p = np.array([px, py, pz])
    return float(np.linalg.norm(q - p)), p, _FEATURE_NAMES[feat]


def dist_point_line(q, l: Line) -> float:
    q = _vec(q)
    return float(np.sqrt(K.dist_point_line_sq(
        q[0], q[1], q[2],
        l.origin[0], l.origin[1], l.origin[2],
        l.direction[0], l.direction[1], l.direction[2])))


def dist_point_plane(q, p: Plane) -> float:
    return abs(p.signed_value(q))


def closer_to_point_than_line(x, v, l: Line, margin: float) -> bool:
    """True iff |x - v| + margin <= Dist(x, line); with margin > 0 this is a
    conservative strict test for membership in the point-side bisector
    half."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    x = _vec(x)
    v = _vec(v)
    return float(np.linalg.norm(x - v)) + margin <= dist_point_line(x, l)


def closer_to_point_than_plane(x, v, p: Plane, margin: float) -> bool:
    if margin < 0:
        raise ValueError("margin must be >= 0")
    x = _vec(x)
    v = _vec(v)
    return float(np.linalg.norm(x - v)) + margin <= dist_point_plane(x, p)
