"""Fast point-to-mesh distance queries.

Preprocessing builds a KD-tree over mesh vertices and, per vertex, the list
of edges/faces whose closest-point region can be reached from that vertex's
Voronoi cell (the interception table), each with a conservative candidate
box organized in a small R-tree.  A query finds the nearest vertex, walks
that vertex's R-tree, gates candidates by their vertical spaces and returns
the exact closest primitive, closest point and distance.
"""

from .geom import (Aabb, DegenerateTriangleError, Line, Plane,
                   dist_point_line, dist_point_plane,
                   point_segment_distance, point_triangle_distance)
from .mesh import Mesh, MeshError, MeshStats, build_mesh, load_mesh, \
    mesh_stats, save_obj, triangle_quality
from .polytope import ConvexPolytope
from .vorocell import (DuplicatePointsError, NeighborGraph, VoronoiCells,
                       VoronoiConfig, build_cells)
from .interception import (InterceptionTable, VerticalSpace, build_prim_set,
                           build_table, cannot_intercept_edge,
                           cannot_intercept_face, convex_poly,
                           flood_interceptors, length_histogram, table_stats,
                           vertical_space_edge, vertical_space_face)
from .index import (IndexFormatError, IndexTruncatedError, IndexVersionError,
                    KdTree, P2MIndex, RTreeSet, build_index, build_kdtree,
                    build_rtrees, load_index, nearest_vertex,
                    rtree_point_query, save_index)
from .query import (BatchResult, BvhTree, DomainError, QueryResult,
                    brute_force_batch, brute_force_query, build_bvh,
                    bvh_batch, bvh_query, p2m_query, query_batch)

__version__ = "0.1.0"
