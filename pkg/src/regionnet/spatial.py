"""Spatial contiguity graphs, cohesion checks and GeoJSON export.

Point layouts are projected to the plane with an equirectangular scaling by
the cosine of the mean latitude before triangulating.  That is adequate at
country extent; it is not an equal-area projection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import GeometryError, PartitionMismatchError
from .modularity import Partition
from .netcore import NodeRecord

METHODS = ("gabriel", "delaunay", "polygon")


@dataclass
class SpatialLayout:
    """Node positions (``lon``/``lat`` or planar ``x``/``y``) and optional polygons."""

    ids: tuple[str, ...]
    coords: np.ndarray | None = None
    polygons: Mapping[str, object] | None = None
    geographic: bool = True

    def __post_init__(self):
        self.ids = tuple(self.ids)
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
            if self.coords.shape != (len(self.ids), 2):
                raise GeometryError(f"coords must have shape ({len(self.ids)}, 2), got {self.coords.shape}")

    @classmethod
    def from_nodes(cls, nodes: Sequence[NodeRecord], polygons: Mapping[str, object] | None = None) -> "SpatialLayout":
        ids = tuple(node.id for node in nodes)
        if all(node.lon is not None for node in nodes):
            coords = np.array([[node.lon, node.lat] for node in nodes], dtype=float)
        else:
            coords = None
        if polygons is not None:
            refs = {node.id: node.polygon_ref or node.id for node in nodes}
            polygons = {i: polygons[refs[i]] for i in ids if refs[i] in polygons}
        return cls(ids, coords, polygons, geographic=True)

    def planar(self) -> np.ndarray:
        if self.coords is None:
            raise GeometryError("layout has no coordinates")
        if not self.geographic:
            return self.coords
        scale = math.cos(math.radians(float(np.mean(self.coords[:, 1]))))
        return np.column_stack([self.coords[:, 0] * scale, self.coords[:, 1]])

    def aligned(self, ids: Sequence[str]) -> "SpatialLayout":
        ids = tuple(ids)
        if ids == self.ids:
            return self
        if set(ids) != set(self.ids) or len(ids) != len(self.ids):
            raise PartitionMismatchError("layout nodes differ from the requested node set")
        where = {v: i for i, v in enumerate(self.ids)}
        coords = None if self.coords is None else self.coords[[where[v] for v in ids]]
        return SpatialLayout(ids, coords, self.polygons, self.geographic)


def load_polygons(path: str | Path, id_property: str = "id") -> dict[str, object]:
    """Read polygons from a GeoJSON FeatureCollection keyed by a feature property."""
    from shapely.geometry import shape

    with Path(path).open(encoding="utf-8") as fh:
        data = json.load(fh)
    polygons = {}
    for feature in data.get("features", []):
        key = feature.get("properties", {}).get(id_property)
        if key is None or feature.get("geometry") is None:
            continue
        polygons[str(key)] = shape(feature["geometry"])
    return polygons


@dataclass(frozen=True)
class AdjacencyGraph:
    """Unweighted undirected contiguity graph; ``edges`` holds index pairs ``i < j``."""

    ids: tuple[str, ...]
    edges: np.ndarray
    method: str

    @property
    def n(self) -> int:
        return len(self.ids)

    def edge_set(self) -> set[tuple[str, str]]:
        return {(self.ids[i], self.ids[j]) for i, j in self.edges}

    def matrix(self) -> sp.csr_matrix:
        n = self.n
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def components(self) -> int:
        return int(connected_components(self.matrix(), directed=False)[0])


def _edges_array(pairs) -> np.ndarray:
    arr = np.array(sorted({(min(a, b), max(a, b)) for a, b in pairs if a != b}), dtype=np.int64)
    return arr.reshape(-1, 2)


def _delaunay_edges(points: np.ndarray) -> np.ndarray:
    if len(points) < 3:
        raise GeometryError("triangulation needs at least 3 points")
    centred = points - points.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(1.0, np.abs(centred).max())) < 2:
        raise GeometryError("points are collinear; triangulation is undefined")
    try:
        tri = Delaunay(points)
    except QhullError as exc:
        raise GeometryError(f"triangulation failed: {exc}") from None
    pairs = []
    for a, b, c in tri.simplices:
        pairs += [(a, b), (b, c), (a, c)]
    return _edges_array(pairs)


def _gabriel_filter(points: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Keep edges whose diametral disc contains no other point strictly inside."""
    if len(edges) == 0:
        return edges
    p, q = points[edges[:, 0]], points[edges[:, 1]]
    mid = 0.5 * (p + q)
    radius = 0.5 * np.linalg.norm(p - q, axis=1)
    tree = cKDTree(points)
    keep = np.ones(len(edges), dtype=bool)
    hits = tree.query_ball_point(mid, radius)
    for e, candidates in enumerate(hits):
        a, b = edges[e]
        for c in candidates:
            if c != a and c != b and np.linalg.norm(points[c] - mid[e]) < radius[e] * (1 - 1e-12):
                keep[e] = False
                break
    return edges[keep]


def _polygon_edges(ids: Sequence[str], polygons: Mapping[str, object]) -> np.ndarray:
    from shapely.strtree import STRtree

    missing = [i for i in ids if i not in polygons]
    if missing:
        raise GeometryError(f"no polygon for nodes {missing[:5]}")
    geoms = [polygons[i] for i in ids]
    tree = STRtree(geoms)
    pairs = []
    for a, b in zip(*tree.query(geoms, predicate="intersects")):
        if a >= b:
            continue
        shared = geoms[a].boundary.intersection(geoms[b].boundary)
        # Touching at a single corner does not make two areas neighbours.
        if shared.length > 0 or geoms[a].intersection(geoms[b]).area > 0:
            pairs.append((a, b))
    return _edges_array(pairs)


def build_adjacency(layout: SpatialLayout, method: str | None = None) -> AdjacencyGraph:
    """Contiguity graph over the layout's nodes.

    ``method`` defaults to ``polygon`` when polygons are present, else ``gabriel``.
    """
    if method is None:
        method = "polygon" if layout.polygons else "gabriel"
    if method not in METHODS:
        raise ValueError(f"unknown adjacency method {method!r}; choose from {METHODS}")
    if method == "polygon":
        if not layout.polygons:
            raise GeometryError("polygon adjacency needs polygons")
        edges = _polygon_edges(layout.ids, layout.polygons)
    else:
        points = layout.planar()
        edges = _delaunay_edges(points)
        if method == "gabriel":
            edges = _gabriel_filter(points, edges)
    return AdjacencyGraph(layout.ids, edges, method)


@dataclass(frozen=True)
class CohesionReport:
    """Connected components of each community inside the contiguity graph."""

    components: tuple[int, ...]
    largest_share: tuple[float, ...]

    @property
    def non_cohesive(self) -> int:
        return sum(1 for c in self.components if c > 1)

    @property
    def cohesive(self) -> bool:
        return self.non_cohesive == 0

    def rows(self) -> list[tuple[int, int, float]]:
        return [(c, k, s) for c, (k, s) in enumerate(zip(self.components, self.largest_share))]

    def to_csv(self, digits: int | None = None) -> str:
        fmt = repr if digits is None else (lambda v: f"{v:.{digits}g}")
        lines = ["community,components,largest_share"]
        lines += [f"{c},{k},{fmt(float(s))}" for c, k, s in self.rows()]
        return "\n".join(lines) + "\n"


def cohesion_report(p: Partition, adj: AdjacencyGraph) -> CohesionReport:
    if set(p.nodes) != set(adj.ids) or p.n != adj.n:
        raise PartitionMismatchError("partition and adjacency graph cover different nodes")
    labels = p.aligned(adj.ids).labels
    edges = adj.edges
    inside = labels[edges[:, 0]] == labels[edges[:, 1]] if len(edges) else np.zeros(0, dtype=bool)
    restricted = AdjacencyGraph(adj.ids, edges[inside], adj.method)
    _, comp = connected_components(restricted.matrix(), directed=False)
    counts, shares = [], []
    for c in range(int(labels.max()) + 1):
        sizes = np.unique(comp[labels == c], return_counts=True)[1]
        counts.append(int(sizes.size))
        shares.append(float(sizes.max() / sizes.sum()))
    return CohesionReport(tuple(counts), tuple(shares))


def geojson_features(p, layout: SpatialLayout) -> dict:
    """FeatureCollection with one feature per node carrying its community labels.

    ``p`` is a :class:`Partition` or a hierarchical partition exposing
    ``level1`` and ``level2``.
    """
    from shapely.geometry import mapping

    if isinstance(p, Partition):
        l1, l2, nodes = p.labels, None, p.nodes
    else:
        nodes = p.level1.nodes
        l1, l2 = p.level1.labels, p.level2
    layout = layout.aligned(nodes)
    features = []
    for i, node in enumerate(nodes):
        if layout.polygons and node in layout.polygons:
            geometry = mapping(layout.polygons[node])
        elif layout.coords is not None:
            geometry = {"type": "Point", "coordinates": [float(layout.coords[i, 0]), float(layout.coords[i, 1])]}
        else:
            raise GeometryError(f"no geometry for node {node!r}")
        props = {"id": node, "community_l1": int(l1[i])}
        if l2 is not None:
            props["community_l2"] = int(l2[i])
        features.append({"type": "Feature", "geometry": geometry, "properties": props})
    return {"type": "FeatureCollection", "features": features}


def export_geojson(p, layout: SpatialLayout, path: str | Path) -> None:
    data = geojson_features(p, layout)
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
