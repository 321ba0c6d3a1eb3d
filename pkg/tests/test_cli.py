import io
import json

import pytest

from conftest import BARBELL_EDGES
from regionnet.cli import run


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def barbell_csv(tmp_path):
    path = tmp_path / "barbell.csv"
    rows = ["src,dst,weight"] + [f"{i},{j},1" for i, j in BARBELL_EDGES]
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def country(tmp_path):
    edges, nodes, planted = tmp_path / "s.csv", tmp_path / "n.csv", tmp_path / "planted.csv"
    code, _, _ = call(
        "synth", "--regions", "3", "--nodes-per-region", "15", "--seed", "1",
        "--out-edges", str(edges), "--out-nodes", str(nodes), "--out-partition", str(planted),
    )
    assert code == 0
    return edges, nodes, planted


def test_partition_twice_byte_identical(barbell_csv, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert call("partition", "--edges", str(barbell_csv), "--undirected", "--out", str(a), "--seed", "7")[0] == 0
    assert call("partition", "--edges", str(barbell_csv), "--undirected", "--out", str(b), "--seed", "7")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines() == ["node_id,community", "0,0", "1,0", "2,0", "3,1", "4,1", "5,1"]


def test_bisect_barbell(barbell_csv):
    code, out, _ = call("bisect", "--edges", str(barbell_csv), "--undirected")
    assert code == 0
    assert "communities 2" in out
    assert "cross_fraction 0.142857" in out
    assert "modularity 0.357143" in out


def test_threads_do_not_change_output(country, tmp_path, monkeypatch):
    edges = country[0]
    one, many = tmp_path / "1.csv", tmp_path / "8.csv"
    call("partition", "--edges", str(edges), "--out", str(one), "--threads", "1")
    monkeypatch.setenv("REGIONNET_THREADS", "8")
    call("partition", "--edges", str(edges), "--out", str(many))
    assert one.read_bytes() == many.read_bytes()
    manifest = json.loads((tmp_path / "8.csv.manifest.json").read_text())
    assert manifest["config"]["threads"] == 8


def test_manifest_and_replay(country, tmp_path):
    edges = country[0]
    out = tmp_path / "p.csv"
    manifest_path = tmp_path / "run.json"
    assert call("--manifest", str(manifest_path), "partition", "--edges", str(edges), "--out", str(out),
                "--restarts", "2", "--seed", "3")[0] == 0
    manifest = json.loads(manifest_path.read_text())
    assert manifest["command"] == "partition"
    assert manifest["inputs"] == {"edges": str(edges)}
    assert manifest["outputs"] == {"out": str(out)}
    assert manifest["config"]["restarts"] == 2 and manifest["seed"] == 3
    assert manifest["version"] and manifest["duration_s"] >= 0
    first = out.read_bytes()
    out.unlink()
    assert call("replay", str(manifest_path))[0] == 0
    assert out.read_bytes() == first


def test_compare_row(country, tmp_path):
    edges, nodes, planted = country
    detected = tmp_path / "d.csv"
    call("partition", "--edges", str(edges), "--out", str(detected))
    code, out, _ = call("compare", "--detected", str(detected), "--reference", str(planted), "--samples", "200", "--seed", "1")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == "R_r,R,F_r,F,log2n,VI"
    cells = row.split(",")
    assert cells[1] == "1" and cells[3] == "1" and cells[5] == "0"
    code, out2, _ = call("compare", "--detected", str(detected), "--reference", str(nodes), "--level", "1",
                         "--samples", "200", "--seed", "1", "--out", str(tmp_path / "r.csv"))
    assert code == 0 and out2 == out
    full = (tmp_path / "r.csv").read_text().splitlines()[1].split(",")
    assert float(full[4]) == pytest.approx(5.491853096329675, abs=1e-15)


def test_cohesion_and_geojson(country, tmp_path):
    edges, nodes, planted = country
    code, out, _ = call("cohesion", "--partition", str(planted), "--nodes", str(nodes), "--adjacency", "gabriel")
    assert code == 0
    assert out.splitlines()[0] == "community,components,largest_share"
    assert "non_cohesive 0" in out
    geo = tmp_path / "p.geojson"
    assert call("export-geojson", "--partition", str(planted), "--nodes", str(nodes), "--out", str(geo))[0] == 0
    assert len(json.loads(geo.read_text())["features"]) == 45


def test_hierarchy_and_export(country, tmp_path):
    edges, nodes, _ = country
    h = tmp_path / "h.csv"
    code, out, _ = call("hierarchy", "--edges", str(edges), "--out", str(h))
    assert code == 0 and out.startswith("L1 ")
    assert h.read_text().startswith("node_id,community_l1,community_l2\n")
    geo = tmp_path / "h.geojson"
    assert call("export-geojson", "--hierarchy", str(h), "--nodes", str(nodes), "--out", str(geo))[0] == 0
    props = json.loads(geo.read_text())["features"][0]["properties"]
    assert set(props) == {"id", "community_l1", "community_l2"}


def test_perturb_and_stability(country, tmp_path):
    edges = country[0]
    noisy = tmp_path / "noisy.csv"
    code, out, _ = call("perturb", "--edges", str(edges), "--epsilon", "0", "--out", str(noisy))
    assert code == 0 and "clamped 0" in out
    assert noisy.read_bytes() == edges.read_bytes()
    curve = tmp_path / "curve.csv"
    code, out, _ = call("stability", "--edges", str(edges), "--epsilons", "0,0.1", "--runs", "2", "--out", str(curve))
    assert code == 0
    assert curve.read_text().splitlines()[0] == "epsilon,mean_R,std_R,runs"
    assert out.splitlines()[1] == "0,1,0,2"


def test_inputs_not_mutated(barbell_csv, tmp_path):
    before = barbell_csv.read_bytes()
    call("partition", "--edges", str(barbell_csv), "--out", str(tmp_path / "p.csv"))
    call("perturb", "--edges", str(barbell_csv), "--epsilon", "0.5", "--out", str(tmp_path / "q.csv"))
    assert barbell_csv.read_bytes() == before


def test_warnings_on_stderr(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst,weight\na,b,1\nc,d,1\n")
    code, _, err = call("partition", "--edges", str(path), "--out", str(tmp_path / "p.csv"))
    assert code == 0
    assert "2 disconnected components" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["partition", "--bogus"],
        ["nonsense"],
        ["partition", "--edges", "missing.csv", "--out", "x.csv"],
        ["partition", "--edges", "e.csv", "--out", "x.csv", "--restarts", "0"],
        ["stability", "--edges", "e.csv", "--epsilons", "a,b"],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "e.csv").write_text("src,dst,weight\na,b,1\n")
    code, _, err = call(*argv)
    assert code == 2
    assert err


def test_format_error_exit_2(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst,weight\na,b,-1\n")
    code, _, err = call("partition", "--edges", str(path), "--out", str(tmp_path / "p.csv"))
    assert code == 2 and ":2:" in err


def test_computation_failure_exit_1(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst,weight\na,b,0\n")
    code, _, err = call("partition", "--edges", str(path), "--out", str(tmp_path / "p.csv"))
    assert code == 1 and "weight" in err.lower()


def test_help_and_version():
    assert call("--version")[0] == 0
    assert call("partition", "--help")[0] == 0
