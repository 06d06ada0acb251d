"""Command line front end: build an index, run query files, benchmark
against the in-repo baselines, and report interception statistics.

All reports are plain CSV on stdout; randomness is always driven by an
explicit seed through a counter-based generator so runs are reproducible
across platforms.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from .index import build_index, load_index, save_index
from .interception import table_stats, length_histogram
from .mesh import load_mesh, mesh_stats
from .query import (DomainError, brute_force_batch, build_bvh, bvh_batch,
                    query_batch)

KIND_NAMES = {0: "vertex", 1: "edge", 2: "face"}


@dataclass
class BenchConfig:
    query_count: int = 1_000_000
    box_scale: float = 10.0
    seed: int = 20240901
    threads: int = 1
    baseline: str = "bvh"   # brute | bvh | none

    def __post_init__(self):
        if self.query_count < 1:
            raise ValueError("query_count must be >= 1")
        if self.box_scale < 1:
            raise ValueError("box_scale must be >= 1")


def sample_points(lo, hi, scale: float, n: int, seed: int) -> np.ndarray:
    """Uniform points in the bounding box [lo, hi] scaled by `scale` about
    its center.  Philox keeps the stream identical across platforms."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * scale
    rng = np.random.Generator(np.random.Philox(seed))
    return center + (2.0 * rng.random((n, 3)) - 1.0) * half


def _emit(rows, file=None):
    out = file or sys.stdout
    for row in rows:
        print(",".join(str(c) for c in row), file=out)


def _load_any(path, weld_eps, leaf_size, fanout, box_scale):
    """Accept either a saved index or a mesh file."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"P2M1":
        return load_index(path), None
    mesh = load_mesh(path, weld_epsilon=weld_eps)
    return build_index(mesh, leaf_size=leaf_size, fanout=fanout,
                       domain_scale=box_scale), mesh


def cmd_build(args) -> int:
    mesh = load_mesh(args.mesh, weld_epsilon=args.weld_eps)
    idx = build_index(mesh, leaf_size=args.leaf_size, fanout=args.fanout,
                      domain_scale=args.box_scale)
    save_index(idx, args.out)
    t = idx.timings
    _emit([("phase", "seconds"),
           ("kdt_construction", "%.6f" % t["kdt"]),
           ("voronoi_cells", "%.6f" % t["voronoi"]),
           ("interception_inspection", "%.6f" % t["interception"]),
           ("rtree_construction", "%.6f" % t["rtree"]),
           ("total", "%.6f" % t["total"])])
    if mesh.dropped_degenerate or mesh.dropped_duplicate:
        print(f"warning: dropped {mesh.dropped_degenerate} degenerate and "
              f"{mesh.dropped_duplicate} duplicate faces", file=sys.stderr)
    return 0


def _read_points(path):
    pts = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{ln}: expected 'x y z'")
            try:
                pts.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{ln}: bad number")
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def cmd_query(args) -> int:
    idx, mesh = _load_any(args.index, args.weld_eps, args.leaf_size,
                          args.fanout, args.box_scale)
    pts = _read_points(args.points)
    res = query_batch(idx, pts, threads=args.threads)
    if args.verify:
        if mesh is None:
            print("error: --verify needs a mesh input, not a saved index",
                  file=sys.stderr)
            return 2
        ref = brute_force_batch(mesh, pts)
        bad = int(np.sum(np.abs(res.distance - ref.distance)
                         > 1e-9 * np.maximum(ref.distance, 1e-300)))
        if bad:
            print(f"error: {bad} mismatches against brute force",
                  file=sys.stderr)
            return 1
    rows = [("idx", "distance", "kind", "prim_id", "cx", "cy", "cz")]
    for i in range(len(res)):
        rows.append((i, "%.17g" % res.distance[i], KIND_NAMES[int(res.kind[i])],
                     int(res.prim_id[i]), "%.17g" % res.closest_point[i, 0],
                     "%.17g" % res.closest_point[i, 1],
                     "%.17g" % res.closest_point[i, 2]))
    if args.out and args.out != "-":
        with open(args.out, "w") as fh:
            _emit(rows, fh)
    else:
        _emit(rows)
    return 0


def _chunk_times(run, pts, chunks=64):
    """Per-query average times over sub-batches, for median/p99."""
    n = pts.shape[0]
    step = max(1, n // chunks)
    times = []
    for i0 in range(0, n, step):
        sub = pts[i0:i0 + step]
        r = run(sub)
        times.append(r.total_time / sub.shape[0])
    return np.array(times)


def cmd_bench(args) -> int:
    cfg = BenchConfig(query_count=args.queries, box_scale=args.box_scale,
                      seed=args.seed, threads=args.threads,
                      baseline=args.baseline)
    mesh = load_mesh(args.mesh, weld_epsilon=args.weld_eps)
    idx = build_index(mesh, leaf_size=args.leaf_size, fanout=args.fanout,
                      domain_scale=max(10.0, cfg.box_scale))
    lo, hi = mesh.bbox()
    pts = sample_points(lo, hi, cfg.box_scale, cfg.query_count, cfg.seed)

    rows = [("solver", "avg_us", "median_us", "p99_us", "queries")]
    res = query_batch(idx, pts, threads=cfg.threads, with_breakdown=True)
    tp2m = _chunk_times(lambda s: query_batch(idx, s, threads=cfg.threads),
                        pts)
    rows.append(("p2m", "%.4f" % (res.total_time / len(res) * 1e6),
                 "%.4f" % (np.median(tp2m) * 1e6),
                 "%.4f" % (np.percentile(tp2m, 99) * 1e6), len(res)))

    mismatches = 0
    if cfg.baseline in ("bvh", "brute"):
        if cfg.baseline == "bvh":
            bvh = build_bvh(mesh)
            ref = bvh_batch(bvh, pts, threads=cfg.threads)
            tb = _chunk_times(lambda s: bvh_batch(bvh, s,
                                                  threads=cfg.threads), pts)
        else:
            ref = brute_force_batch(mesh, pts, threads=cfg.threads)
            tb = _chunk_times(
                lambda s: brute_force_batch(mesh, s, threads=cfg.threads),
                pts)
        rows.append((cfg.baseline,
                     "%.4f" % (ref.total_time / len(ref) * 1e6),
                     "%.4f" % (np.median(tb) * 1e6),
                     "%.4f" % (np.percentile(tb, 99) * 1e6), len(ref)))
        mismatches = int(np.sum(np.abs(res.distance - ref.distance)
                                > 1e-9 * np.maximum(ref.distance, 1e-300)))
        rows.append(("speedup_vs_" + cfg.baseline,
                     "%.2f" % (ref.total_time / max(res.total_time, 1e-12)),
                     "", "", ""))
    _emit(rows)

    t = idx.timings
    _emit([("phase", "seconds"),
           ("kdt_construction", "%.6f" % t["kdt"]),
           ("voronoi_cells", "%.6f" % t["voronoi"]),
           ("interception_inspection", "%.6f" % t["interception"]),
           ("rtree_construction", "%.6f" % t["rtree"]),
           ("kdt_search_share", "%.6f" % res.kdt_time),
           ("candidate_resolution_share", "%.6f" % res.resolve_time)])
    _emit([("structure", "bytes"),
           ("mesh", idx.verts.nbytes + idx.edges.nbytes + idx.faces.nbytes
            + idx.face_edges.nbytes + idx.face_vs.nbytes),
           ("kdtree", sum(a.nbytes for a in (idx.kdt.box, idx.kdt.left,
                                             idx.kdt.right, idx.kdt.start,
                                             idx.kdt.end, idx.kdt.perm))),
           ("interception_table", idx.table.ent_off.nbytes
            + idx.table.ent_kind.nbytes + idx.table.ent_prim.nbytes
            + idx.table.ent_box.nbytes),
           ("rtrees", idx.rtrees.root.nbytes + idx.rtrees.node_box.nbytes
            + idx.rtrees.node_child.nbytes + idx.rtrees.node_count.nbytes
            + idx.rtrees.node_leaf.nbytes + idx.rtrees.items.nbytes)])
    _emit([("mismatches", mismatches)])
    return 0 if mismatches == 0 else 1


def cmd_stats(args) -> int:
    mesh = load_mesh(args.mesh, weld_epsilon=args.weld_eps)
    idx = build_index(mesh, leaf_size=args.leaf_size, fanout=args.fanout,
                      domain_scale=args.box_scale)
    vols = idx.cell_volumes
    st = table_stats(idx.table, vols)
    rows = [("kind", "avg1", "avg2", "max")]
    for kind in ("edges", "faces", "total"):
        s = st[kind]
        rows.append((kind, "%.3f" % s["avg1"], "%.3f" % s["avg2"], s["max"]))
    _emit(rows)
    hist = length_histogram(idx.table)
    _emit([("list_length", "vertex_count")])
    _emit([(int(l), int(c)) for l, c in hist])
    ms = mesh_stats(mesh)
    _emit([("quality_metric", "value"),
           ("vertices", ms.vertex_count), ("edges", ms.edge_count),
           ("faces", ms.face_count),
           ("mean_quality", "%.4f" % ms.mean_quality),
           ("min_quality", "%.4f" % ms.min_quality),
           ("bad_triangle_fraction", "%.4f" % ms.bad_triangle_fraction)])
    return 0


def _add_common(sp):
    sp.add_argument("--weld-eps", type=float, default=0.0,
                    help="vertex weld tolerance (0 = exact weld)")
    sp.add_argument("--leaf-size", type=int, default=8,
                    help="KD-tree leaf bucket size")
    sp.add_argument("--fanout", type=int, default=8, help="R-tree fanout")
    sp.add_argument("--box-scale", type=float, default=10.0,
                    help="domain/sampling box scale relative to the mesh "
                         "bounding box")
    sp.add_argument("--threads", type=int,
                    default=int(os.environ.get("P2M_THREADS", "1")),
                    help="query worker threads")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="p2m",
                                 description="point-to-mesh distance queries")
    sub = ap.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("build", help="preprocess a mesh into an index file")
    b.add_argument("mesh")
    b.add_argument("out")
    _add_common(b)
    b.set_defaults(fn=cmd_build)

    q = sub.add_parser("query", help="answer a points file")
    q.add_argument("index", help="index file or mesh file")
    q.add_argument("points", help="text file, one 'x y z' per line")
    q.add_argument("out", nargs="?", default="-", help="output CSV")
    q.add_argument("--verify", action="store_true",
                   help="cross-check against brute force")
    _add_common(q)
    q.set_defaults(fn=cmd_query)

    be = sub.add_parser("bench", help="benchmark against a baseline")
    be.add_argument("mesh")
    be.add_argument("--queries", type=int, default=1_000_000)
    be.add_argument("--seed", type=int, default=20240901)
    be.add_argument("--baseline", choices=("brute", "bvh", "none"),
                    default="bvh")
    _add_common(be)
    be.set_defaults(fn=cmd_bench)

    st = sub.add_parser("stats", help="interception and quality statistics")
    st.add_argument("mesh")
    _add_common(st)
    st.set_defaults(fn=cmd_stats)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
