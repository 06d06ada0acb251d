"""End-to-end command line tests: build/query/bench/stats via main(argv),
deterministic sampling, verification mode and error paths."""
import numpy as np
import pytest

from p2m.cli import main, sample_points
from p2m.mesh import save_obj

from meshgen import bumpy_blob, cube_mesh


@pytest.fixture(scope="module")
def blob_obj(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "blob.obj"
    save_obj(bumpy_blob(10), p)
    return p


@pytest.fixture(scope="module")
def cube_obj(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "cube.obj"
    save_obj(cube_mesh(), p)
    return p


def run(capsys, argv):
    rc = main(argv)
    out = capsys.readouterr()
    return rc, out.out, out.err


# ---------------------------------------------------------------------------
# sample_points
# ---------------------------------------------------------------------------

def test_sample_points_extent_and_determinism():
    lo = np.array([-1.0, 0.0, 2.0])
    hi = np.array([3.0, 2.0, 4.0])
    a = sample_points(lo, hi, 10.0, 5000, seed=7)
    b = sample_points(lo, hi, 10.0, 5000, seed=7)
    assert np.array_equal(a, b)
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * 10.0
    assert np.all(a >= c - half) and np.all(a <= c + half)
    # the sample actually uses the scaled box, not just the bbox
    assert np.any(np.abs(a - c) > 0.9 * half)
    assert not np.array_equal(a, sample_points(lo, hi, 10.0, 5000, seed=8))


# ---------------------------------------------------------------------------
# build + query round trip
# ---------------------------------------------------------------------------

def test_build_then_query_index_file(tmp_path, blob_obj, capsys):
    idx_path = tmp_path / "blob.p2m"
    rc, out, err = run(capsys, ["build", str(blob_obj), str(idx_path)])
    assert rc == 0
    assert idx_path.exists()
    assert out.splitlines()[0] == "phase,seconds"
    assert any(line.startswith("total,") for line in out.splitlines())

    pts = tmp_path / "pts.txt"
    pts.write_text("# a comment\n2 0 0\n0 3 0\n\n-1 -1 -1\n")
    rc, out, err = run(capsys, ["query", str(idx_path), str(pts)])
    assert rc == 0
    lines = out.strip().splitlines()
    assert lines[0] == "idx,distance,kind,prim_id,cx,cy,cz"
    assert len(lines) == 4   # header + 3 points (comment/blank skipped)
    d = float(lines[1].split(",")[1])
    assert 0.0 < d < 2.0


def test_query_output_file_and_mesh_input(tmp_path, blob_obj, capsys):
    pts = tmp_path / "pts.txt"
    pts.write_text("2 0 0\n")
    out_csv = tmp_path / "res.csv"
    rc, out, err = run(capsys, ["query", str(blob_obj), str(pts),
                                str(out_csv)])
    assert rc == 0
    assert out == ""
    text = out_csv.read_text().strip().splitlines()
    assert text[0] == "idx,distance,kind,prim_id,cx,cy,cz"
    assert len(text) == 2


def test_query_verify_against_brute_force(tmp_path, blob_obj, capsys):
    pts = tmp_path / "pts.txt"
    rng = np.random.Generator(np.random.Philox(11))
    pts.write_text("\n".join("%.17g %.17g %.17g" % tuple(q)
                             for q in rng.normal(size=(50, 3)) * 2.0))
    rc, out, err = run(capsys, ["query", "--verify", str(blob_obj), str(pts)])
    assert rc == 0


def test_query_verify_requires_mesh(tmp_path, cube_obj, capsys):
    idx_path = tmp_path / "cube.p2m"
    assert main(["build", str(cube_obj), str(idx_path)]) == 0
    capsys.readouterr()
    pts = tmp_path / "pts.txt"
    pts.write_text("2 0 0\n")
    rc, out, err = run(capsys, ["query", "--verify", str(idx_path), str(pts)])
    assert rc == 2
    assert "verify" in err


def test_query_identical_from_mesh_and_index(tmp_path, blob_obj, capsys):
    idx_path = tmp_path / "i.p2m"
    assert main(["build", str(blob_obj), str(idx_path)]) == 0
    capsys.readouterr()
    pts = tmp_path / "pts.txt"
    pts.write_text("0.5 1.5 -0.25\n-2 0 1\n")
    rc, out1, _ = run(capsys, ["query", str(idx_path), str(pts)])
    assert rc == 0
    rc, out2, _ = run(capsys, ["query", str(blob_obj), str(pts)])
    assert rc == 0
    assert out1 == out2


# ---------------------------------------------------------------------------
# bench and stats
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("baseline", ["bvh", "brute", "none"])
def test_bench_reports_and_verifies(blob_obj, capsys, baseline):
    rc, out, err = run(capsys, ["bench", str(blob_obj), "--queries", "2000",
                                "--seed", "5", "--baseline", baseline])
    assert rc == 0
    lines = out.splitlines()
    assert lines[0] == "solver,avg_us,median_us,p99_us,queries"
    assert lines[1].startswith("p2m,")
    if baseline != "none":
        assert lines[2].startswith(baseline + ",")
        assert any(l.startswith("speedup_vs_" + baseline) for l in lines)
    assert "mismatches,0" in out
    assert any(l.startswith("interception_table,") for l in lines)


def test_stats_report(blob_obj, capsys):
    rc, out, err = run(capsys, ["stats", str(blob_obj)])
    assert rc == 0
    lines = out.splitlines()
    assert lines[0] == "kind,avg1,avg2,max"
    kinds = {l.split(",")[0] for l in lines[1:4]}
    assert kinds == {"edges", "faces", "total"}
    assert "list_length,vertex_count" in out
    assert "mean_quality" in out
    # histogram counts sum to the vertex count
    vi = next(l for l in lines if l.startswith("vertices,"))
    nverts = int(vi.split(",")[1])
    h0 = lines.index("list_length,vertex_count") + 1
    h1 = next(i for i in range(h0, len(lines))
              if lines[i].startswith("quality_metric"))
    assert sum(int(l.split(",")[1]) for l in lines[h0:h1]) == nverts


# ---------------------------------------------------------------------------
# error paths
# ---------------------------------------------------------------------------

def test_missing_mesh_file(tmp_path, capsys):
    rc, out, err = run(capsys, ["build", str(tmp_path / "nope.obj"),
                                str(tmp_path / "x.p2m")])
    assert rc == 2
    assert "error:" in err


def test_bad_points_file(tmp_path, cube_obj, capsys):
    pts = tmp_path / "pts.txt"
    pts.write_text("1 2\n")
    rc, out, err = run(capsys, ["query", str(cube_obj), str(pts)])
    assert rc == 2
    assert "expected 'x y z'" in err

    pts.write_text("1 2 banana\n")
    rc, out, err = run(capsys, ["query", str(cube_obj), str(pts)])
    assert rc == 2
    assert "bad number" in err


def test_out_of_domain_query_point(tmp_path, cube_obj, capsys):
    pts = tmp_path / "pts.txt"
    pts.write_text("1e9 0 0\n")
    rc, out, err = run(capsys, ["query", str(cube_obj), str(pts)])
    assert rc == 2
    assert "domain" in err


def test_bench_rejects_bad_config(blob_obj, capsys):
    rc, out, err = run(capsys, ["bench", str(blob_obj), "--queries", "0"])
    assert rc == 2
    assert "query_count" in err
