import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import box

from regionnet.errors import GeometryError, PartitionMismatchError
from regionnet.hierarchy import HierarchicalPartition
from regionnet.modularity import Partition
from regionnet.netcore import NodeRecord
from regionnet.spatial import (
    SpatialLayout,
    build_adjacency,
    cohesion_report,
    export_geojson,
    geojson_features,
    load_polygons,
)


def planar(points, ids=None):
    points = np.asarray(points, dtype=float)
    ids = ids or [str(i) for i in range(len(points))]
    return SpatialLayout(ids, points, geographic=False)


def test_unit_square_delaunay():
    adj = build_adjacency(planar([(0, 0), (1, 0), (1, 1), (0, 1)]), "delaunay")
    assert len(adj.edges) == 5
    sides = {("0", "1"), ("1", "2"), ("2", "3"), ("0", "3")}
    assert sides < adj.edge_set()


def test_gabriel_drops_obtuse_edge():
    layout = planar([(0, 0), (2, 0), (1, 0.2)])
    assert len(build_adjacency(layout, "delaunay").edges) == 3
    assert build_adjacency(layout, "gabriel").edge_set() == {("0", "2"), ("1", "2")}


@pytest.mark.parametrize("points", [[(0, 0), (1, 1)], [(0, 0), (1, 1), (2, 2)], [(0, 0)] * 4])
def test_degenerate_point_sets(points):
    with pytest.raises(GeometryError):
        build_adjacency(planar(points), "delaunay")


def test_missing_geometry():
    with pytest.raises(GeometryError):
        build_adjacency(SpatialLayout(["a", "b", "c"]), "gabriel")
    with pytest.raises(GeometryError):
        build_adjacency(planar([(0, 0), (1, 0), (0, 1)]), "polygon")
    with pytest.raises(ValueError):
        build_adjacency(planar([(0, 0), (1, 0), (0, 1)]), "voronoi")


points_strategy = st.integers(3, 40).flatmap(
    lambda n: st.lists(st.tuples(st.integers(0, 1000), st.integers(0, 1000)), min_size=n, max_size=n, unique=True)
)


@settings(max_examples=60, deadline=None)
@given(points_strategy, st.floats(0.01, 100), st.floats(-50, 50), st.floats(-50, 50))
def test_gabriel_subset_and_similarity_invariance(points, scale, dx, dy):
    pts = np.array(points, dtype=float)
    centred = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centred) < 2:
        return
    base_d = build_adjacency(planar(pts), "delaunay").edge_set()
    base_g = build_adjacency(planar(pts), "gabriel").edge_set()
    assert base_g <= base_d
    moved = planar(pts * scale + np.array([dx, dy]))
    assert build_adjacency(moved, "gabriel").edge_set() == base_g


def test_polygon_touch():
    polys = {"a": box(0, 0, 1, 1), "b": box(1, 0, 2, 1), "c": box(1, 1, 2, 2), "d": box(5, 5, 6, 6)}
    adj = build_adjacency(SpatialLayout(list(polys), polygons=polys), "polygon")
    # a touches c only at a corner.
    assert adj.edge_set() == {("a", "b"), ("b", "c")}
    two = {"a": polys["a"], "b": polys["b"]}
    assert len(build_adjacency(SpatialLayout(["a", "b"], polygons=two)).edges) == 1


def test_default_method():
    polys = {"a": box(0, 0, 1, 1), "b": box(1, 0, 2, 1), "c": box(2, 0, 3, 1)}
    assert build_adjacency(SpatialLayout(list(polys), polygons=polys)).method == "polygon"
    assert build_adjacency(planar([(0, 0), (1, 0), (0, 1)])).method == "gabriel"


def test_geographic_scaling():
    layout = SpatialLayout(["a", "b"], np.array([[10.0, 60.0], [12.0, 60.0]]))
    assert np.allclose(layout.planar()[:, 0], [5.0, 6.0])


def test_cohesion_two_clusters():
    pts = [(0, 0), (1, 0), (0, 1), (10, 10), (11, 10), (10, 11)]
    adj = build_adjacency(planar(pts), "gabriel")
    ids = [str(i) for i in range(6)]
    assert ("0", "4") not in adj.edge_set()
    # Far corners of the two clusters share no edge; the rest stays linked by the bridge.
    split = cohesion_report(Partition(ids, [0, 1, 1, 1, 0, 1]), adj)
    assert split.components == (2, 1)
    assert split.largest_share == (0.5, 1.0)
    assert split.non_cohesive == 1 and not split.cohesive
    good = cohesion_report(Partition(ids, [0, 0, 0, 1, 1, 1]), adj)
    assert good.cohesive and good.largest_share == (1.0, 1.0)


def test_cohesion_single_community_matches_graph_components():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1), (0.5, 3)]
    adj = build_adjacency(planar(pts), "gabriel")
    report = cohesion_report(Partition.single(adj.ids), adj)
    assert report.components == (adj.components(),)


def test_cohesion_singletons_and_csv():
    adj = build_adjacency(planar([(0, 0), (1, 0), (0, 1)]), "gabriel")
    report = cohesion_report(Partition.singletons(adj.ids), adj)
    assert report.components == (1, 1, 1) and report.largest_share == (1.0, 1.0, 1.0)
    assert report.to_csv().splitlines() == ["community,components,largest_share", "0,1,1.0", "1,1,1.0", "2,1,1.0"]


def test_cohesion_mismatch():
    adj = build_adjacency(planar([(0, 0), (1, 0), (0, 1)]), "gabriel")
    with pytest.raises(PartitionMismatchError):
        cohesion_report(Partition(["x", "y", "z"], [0, 0, 1]), adj)


def test_layout_from_nodes_and_alignment():
    nodes = [NodeRecord("a", 1.0, 2.0), NodeRecord("b", 3.0, 4.0)]
    layout = SpatialLayout.from_nodes(nodes)
    assert layout.aligned(["b", "a"]).coords.tolist() == [[3.0, 4.0], [1.0, 2.0]]
    with pytest.raises(PartitionMismatchError):
        layout.aligned(["a", "c"])
    assert SpatialLayout.from_nodes([NodeRecord("a"), NodeRecord("b", 1.0, 1.0)]).coords is None


def _strict_validate(data: dict) -> None:
    geojson = pytest.importorskip("geojson")
    obj = geojson.loads(json.dumps(data))
    assert obj.is_valid, obj.errors()


def test_export_points(tmp_path):
    layout = planar([(0, 0), (1, 0), (0, 1)], ids=["x", "y", "z"])
    p = Partition(["x", "y", "z"], [0, 0, 1])
    path = tmp_path / "p.geojson"
    export_geojson(p, layout, path)
    data = json.loads(path.read_text())
    assert data["type"] == "FeatureCollection"
    assert [f["properties"] for f in data["features"]] == [
        {"id": "x", "community_l1": 0},
        {"id": "y", "community_l1": 0},
        {"id": "z", "community_l1": 1},
    ]
    assert data["features"][1]["geometry"] == {"type": "Point", "coordinates": [1.0, 0.0]}
    _strict_validate(data)


def test_export_hierarchy_and_polygons(tmp_path):
    polys = {"a": box(0, 0, 1, 1), "b": box(1, 0, 2, 1), "c": box(2, 0, 3, 1)}
    layout = SpatialLayout(list(polys), polygons=polys)
    h = HierarchicalPartition(Partition(list(polys), [0, 0, 1]), np.array([0, 1, 0]), (0.1, 0.0))
    data = geojson_features(h, layout)
    assert [f["properties"]["community_l2"] for f in data["features"]] == [0, 1, 0]
    assert data["features"][0]["geometry"]["type"] == "Polygon"
    _strict_validate(data)
    path = tmp_path / "polys.geojson"
    export_geojson(h, layout, path)
    assert set(load_polygons(path)) == {"a", "b", "c"}


def test_export_missing_geometry():
    with pytest.raises(GeometryError):
        geojson_features(Partition(["a"], [0]), SpatialLayout(["a"]))
