import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BARBELL_EDGES
from regionnet.errors import EmptyGraphError, FormatError, IngestError
from regionnet.netcore import (
    NodeRecord,
    WeightedDigraph,
    build_network,
    induced_subgraph,
    load_edge_list,
    load_nodes,
    natural_order,
    normalize_market_share,
    write_edge_list,
    write_nodes,
)


def test_records_are_summed():
    g = build_network([("a", "b", 10), ("a", "b", 5), ("b", "b", 3)])
    assert g.weight("a", "b") == 15
    assert g.weight("b", "b") == 3
    assert g.total_weight == 18


def test_single_loop():
    g = build_network([("a", "a", 7)])
    assert g.s_out[0] == g.s_in[0] == 7
    assert g.total_weight == 7


def test_empty_stream_is_unusable():
    g = build_network([], nodes=[NodeRecord("a"), NodeRecord("b")])
    assert g.n == 2 and g.total_weight == 0
    assert not g.usable
    with pytest.raises(EmptyGraphError):
        g.require_usable()


def test_declared_nodes_kept_without_activity():
    g = build_network([("a", "b", 1.0)], nodes=[NodeRecord("a"), NodeRecord("b"), NodeRecord("c")])
    assert g.zero_activity_nodes() == ["c"]


def test_unknown_node_rejected():
    with pytest.raises(IngestError, match="'z'"):
        build_network([("a", "z", 1.0)], nodes=[NodeRecord("a")])


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf])
def test_invalid_duration_rejected(bad):
    with pytest.raises(IngestError):
        build_network([("a", "b", bad)])


def test_undirected_feeds_both_arcs():
    g = build_network([("a", "b", 2.0), ("c", "c", 1.0)], directed=False)
    assert g.weight("a", "b") == g.weight("b", "a") == 2.0
    assert g.weight("c", "c") == 1.0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from("abcde"), st.sampled_from("abcde"), st.floats(0, 1e6, allow_nan=False)),
        min_size=1,
        max_size=40,
    ),
    st.randoms(use_true_random=False),
)
def test_order_independent(records, rnd):
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert build_network(records) == build_network(shuffled)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10_000))
def test_strengths_sum_to_total(n, seed):
    rng = np.random.default_rng(seed)
    g = WeightedDigraph.from_dense(rng.random((n, n)) * 1e6)
    W = g.total_weight
    assert math.isclose(g.s_out.sum(), W, rel_tol=1e-9)
    assert math.isclose(g.s_in.sum(), W, rel_tol=1e-9)


def test_edge_list_sums_duplicates(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst,weight\na,b,1.5\nb,a,2\na,b,0.5\n")
    g = load_edge_list(path)
    assert g.weight("a", "b") == 2.0
    assert g.weight("b", "a") == 2.0


def test_edge_list_header_checked(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("from,to,w\na,b,1\n")
    with pytest.raises(FormatError, match=":1:"):
        load_edge_list(path)


@pytest.mark.parametrize("row", ["a,b,-1", "a,b,x", "a,b", ",b,1"])
def test_edge_list_bad_row_reports_line(tmp_path, row):
    path = tmp_path / "e.csv"
    path.write_text(f"src,dst,weight\na,b,1\n{row}\n")
    with pytest.raises(FormatError, match=":3:"):
        load_edge_list(path)


def test_edge_list_round_trip_exact(tmp_path):
    rng = np.random.default_rng(3)
    A = rng.random((8, 8)) * (rng.random((8, 8)) < 0.5) * 1e9 / 7
    g = WeightedDigraph.from_dense(A)
    path = tmp_path / "e.csv"
    write_edge_list(g, path)
    h = load_edge_list(path)
    assert h == g
    assert np.array_equal(h.dense(), g.dense())
    first = path.read_bytes()
    write_edge_list(h, path)
    assert path.read_bytes() == first


def test_edge_list_canonical_order_and_loops(tmp_path):
    g = build_network([("10", "2", 1.0), ("2", "2", 4.0), ("9", "10", 1.0)])
    path = tmp_path / "e.csv"
    write_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "src,dst,weight"
    assert lines[1:] == ["2,2,4.0", "9,10,1.0", "10,2,1.0"]


def test_nodes_round_trip(tmp_path):
    nodes = [
        NodeRecord("a", 1.25, 40.5, None, ((1, "North"), (2, "N1")), 0.3),
        NodeRecord("b", None, None, None, (), None),
        NodeRecord("c", -3.0, 41.0, None, ((1, "South"),), 1.0),
    ]
    path = tmp_path / "n.csv"
    write_nodes(nodes, path)
    back = load_nodes(path)
    assert back == nodes


def test_nodes_lat_without_lon_rejected(tmp_path):
    path = tmp_path / "n.csv"
    path.write_text("id,lon,lat,market_share,region_l1,region_l2\na,,40,,,\n")
    with pytest.raises(FormatError, match=":2:"):
        load_nodes(path)


def test_market_share_must_be_positive():
    with pytest.raises(ValueError):
        NodeRecord("a", market_share=0.0)


def test_normalize_market_share():
    nodes = [NodeRecord("a", market_share=0.5), NodeRecord("b", market_share=0.5)]
    g = build_network([("a", "b", 10.0), ("a", "a", 6.0)], nodes=nodes)
    h = normalize_market_share(g)
    assert h.weight("a", "b") == 40.0
    assert h.weight("a", "a") == 24.0
    assert g.weight("a", "b") == 10.0


def test_normalize_identity_shares():
    g = build_network([("a", "b", 3.0), ("b", "a", 1.0)], nodes=[NodeRecord("a"), NodeRecord("b")])
    assert normalize_market_share(g) == g


def test_normalize_missing_share():
    g = build_network([("a", "b", 3.0)], nodes=[NodeRecord("a"), NodeRecord("b", market_share=None)])
    with pytest.raises(IngestError, match="'b'"):
        normalize_market_share(g)


def test_induced_subgraph_barbell(barbell):
    sub = induced_subgraph(barbell, ["0", "1", "2"])
    assert sub.ids == ("0", "1", "2")
    assert sub.n_edges == 6
    assert sub.total_weight == 6.0
    assert induced_subgraph(barbell, barbell.ids) == barbell


def test_induced_subgraph_single_loop():
    g = build_network([("a", "a", 2.5), ("a", "b", 1.0)])
    sub = induced_subgraph(g, ["a"])
    assert sub.n == 1 and sub.total_weight == 2.5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_induced_weight_is_internal_weight(seed):
    rng = np.random.default_rng(seed)
    A = rng.random((9, 9)) * (rng.random((9, 9)) < 0.6)
    g = WeightedDigraph.from_dense(A)
    members = [i for i in range(9) if rng.random() < 0.5] or [0]
    sub = induced_subgraph(g, [str(i) for i in members])
    assert sub.total_weight == math.fsum(A[np.ix_(members, members)][A[np.ix_(members, members)] > 0])


def test_induced_subgraph_errors(barbell):
    with pytest.raises(ValueError):
        induced_subgraph(barbell, [])
    with pytest.raises(KeyError):
        induced_subgraph(barbell, ["0", "nope"])


def test_natural_order():
    assert natural_order(["10", "9", "-1"]) == ["-1", "9", "10"]
    assert natural_order(["b", "10", "a"]) == ["10", "a", "b"]


def test_graph_is_read_only(barbell):
    with pytest.raises(ValueError):
        barbell.weights.data[0] = 5.0


def test_barbell_fixture_edges(barbell):
    assert barbell.n_edges == 2 * len(BARBELL_EDGES)
    assert barbell.total_weight == 14.0


def test_duplicate_ids_rejected():
    with pytest.raises(IngestError):
        WeightedDigraph([NodeRecord("a"), NodeRecord("a")], np.zeros((2, 2)))

