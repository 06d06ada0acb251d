"""Bounded convex polytopes under incremental half-space clipping.

Corners carry the ids of three defining planes; edges are corner-index
pairs.  Clipping keeps the side normal . x <= offset, with on-plane corners
(within tolerance) retained so that repeated clipping can only grow the
result, never shrink it below the true intersection.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .geom import Aabb, Plane

TAG_BOX = "box_face"
TAG_BISECTOR = "bisector"
TAG_VSPACE = "vertical_space"


class ConvexPolytope:
    """Mutable-by-clip convex polytope.

    Attributes (read-only by convention):
      corners: (nc, 3) float64 positions
      corner_planes: (nc, 3) int64 defining plane ids
      edges: (ne, 2) int64 corner-index pairs
      planes: (npl, 4) float64 rows (nx, ny, nz, offset)
      plane_tags: list of (kind, ref) tuples parallel to planes
    """

    def __init__(self, corners, corner_planes, edges, planes, plane_tags):
        self.corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3)
        self.corner_planes = np.asarray(corner_planes,
                                        dtype=np.int64).reshape(-1, 3)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.planes = np.asarray(planes, dtype=np.float64).reshape(-1, 4)
        self.plane_tags = list(plane_tags)

    # -- construction -------------------------------------------------------

    @staticmethod
    def cube(center, half_extent: float) -> "ConvexPolytope":
        if half_extent <= 0:
            raise ValueError("half_extent must be positive")
        cx, cy, cz = (float(c) for c in center)
        C = np.empty((K.CELL_CAP_C, 3))
        CP = np.empty((K.CELL_CAP_C, 3), np.int64)
        E = np.empty((K.CELL_CAP_E, 2), np.int64)
        P = np.empty((K.CELL_CAP_P, 4))
        Ptag = np.empty(K.CELL_CAP_P, np.int64)
        nc, ne, npl = K.init_cube(C, CP, E, P, Ptag, cx, cy, cz,
                                  float(half_extent))
        tags = [(TAG_BOX, i) for i in range(npl)]
        return ConvexPolytope(C[:nc].copy(), CP[:nc].copy(), E[:ne].copy(),
                              P[:npl].copy(), tags)

    @staticmethod
    def empty() -> "ConvexPolytope":
        return ConvexPolytope(np.zeros((0, 3)), np.zeros((0, 3), np.int64),
                              np.zeros((0, 2), np.int64), np.zeros((0, 4)),
                              [])

    # -- queries ------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.corners.shape[0] == 0

    def extreme_points(self):
        return self.corners.copy()

    def bbox(self) -> Aabb:
        if self.is_empty:
            raise ValueError("empty polytope has no bounding box")
        return Aabb(self.corners.min(axis=0), self.corners.max(axis=0))

    def volume(self, tol: float = 1e-9) -> float:
        if self.corners.shape[0] < 4:
            return 0.0
        scale = float(np.abs(self.corners).max()) + 1.0
        return float(K.poly_volume(self.corners, self.corners.shape[0],
                                   self.planes, self.planes.shape[0],
                                   tol * scale))

    # -- clipping -----------------------------------------------------------

    def clip(self, h: Plane, tol: float, tag=(TAG_VSPACE, -1)) -> "ConvexPolytope":
        """Intersect with the half-space of `h`.  Returns a new polytope;
        the input is unchanged."""
        if self.is_empty:
            return ConvexPolytope.empty()
        nc = self.corners.shape[0]
        ne = self.edges.shape[0]
        Ca = np.empty((K.CELL_CAP_C, 3))
        CPa = np.empty((K.CELL_CAP_C, 3), np.int64)
        Ea = np.empty((K.CELL_CAP_E, 2), np.int64)
        Ca[:nc] = self.corners
        CPa[:nc] = self.corner_planes
        Ea[:ne] = self.edges
        Cb = np.empty_like(Ca)
        CPb = np.empty_like(CPa)
        Eb = np.empty_like(Ea)
        side = np.empty(K.CELL_CAP_C)
        newidx = np.empty(K.CELL_CAP_C, np.int64)
        pid = self.planes.shape[0]
        nc2, ne2, code = K.clip_poly(Ca, CPa, Ea, nc, ne,
                                     float(h.normal[0]), float(h.normal[1]),
                                     float(h.normal[2]), float(h.offset),
                                     pid, float(tol), side, newidx,
                                     Cb, CPb, Eb)
        if code == 3:
            raise OverflowError("polytope scratch capacity exceeded")
        if code == 2:
            return ConvexPolytope.empty()
        if code == 0:
            return ConvexPolytope(self.corners.copy(),
                                  self.corner_planes.copy(),
                                  self.edges.copy(), self.planes.copy(),
                                  list(self.plane_tags))
        planes = np.vstack([self.planes, h.as_row()[None, :]])
        tags = list(self.plane_tags) + [tag]
        return ConvexPolytope(Cb[:nc2].copy(), CPb[:nc2].copy(),
                              Eb[:ne2].copy(), planes, tags)

    def clip_many(self, planes, tol: float, tag=(TAG_VSPACE, -1)):
        p = self
        for h in planes:
            p = p.clip(h, tol, tag)
            if p.is_empty:
                break
        return p

    # -- debug export -------------------------------------------------------

    def save_off(self, path):
        """Write corners as an OFF point cloud with edges as degenerate
        faces, enough for visual inspection in a mesh viewer."""
        with open(path, "w") as fh:
            fh.write("OFF\n%d %d 0\n" % (self.corners.shape[0],
                                         self.edges.shape[0]))
            for c in self.corners:
                fh.write("%.17g %.17g %.17g\n" % (c[0], c[1], c[2]))
            for e in self.edges:
                fh.write("3 %d %d %d\n" % (e[0], e[1], e[0]))
