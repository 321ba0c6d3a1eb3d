"""Weighted directed interaction networks: data model, ingestion and I/O.

Nodes are locations (cell towers, exchange areas, municipalities) and the arc
weight ``w_ij`` is the total duration of calls placed from ``i`` to ``j``.
Self-loops are kept.  Graphs are immutable once built.
"""

from __future__ import annotations

import csv
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraphError, FormatError, IngestError

EDGE_HEADER = ("src", "dst", "weight")
NODE_HEADER = ("id", "lon", "lat", "market_share", "region_l1", "region_l2")

_INT_RE = re.compile(r"-?\d+\Z")


@dataclass(frozen=True)
class NodeRecord:
    """A location with optional coordinates, geometry reference and reference regions."""

    id: str
    lon: float | None = None
    lat: float | None = None
    polygon_ref: str | None = None
    region_labels: tuple[tuple[int, str], ...] = ()
    market_share: float | None = 1.0

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        if (self.lon is None) != (self.lat is None):
            raise ValueError(f"node {self.id!r}: longitude and latitude must be given together")
        if self.market_share is not None and not self.market_share > 0:
            raise ValueError(f"node {self.id!r}: market_share must be > 0, got {self.market_share}")

    def region(self, level: int) -> str | None:
        for lvl, label in self.region_labels:
            if lvl == level:
                return label
        return None


def natural_order(ids: Iterable[str]) -> list[str]:
    """Sort ids numerically when every id is an integer literal, else lexicographically."""
    ids = list(ids)
    if ids and all(_INT_RE.match(i) for i in ids):
        return sorted(ids, key=int)
    return sorted(ids)


class WeightedDigraph:
    """Directed weighted network with self-loops.

    ``weights`` is an ``n x n`` CSR matrix where entry ``(i, j)`` holds ``w_ij``.
    Node order is the order of ``nodes`` and defines every index used by the
    rest of the package.
    """

    def __init__(self, nodes: Sequence[NodeRecord], weights: sp.spmatrix):
        nodes = tuple(nodes)
        n = len(nodes)
        ids = tuple(node.id for node in nodes)
        if len(set(ids)) != n:
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IngestError(f"duplicate node ids: {dupes[:5]}")
        w = sp.csr_matrix(weights, dtype=np.float64, copy=True)
        if w.shape != (n, n):
            raise ValueError(f"weight matrix shape {w.shape} does not match {n} nodes")
        w.sum_duplicates()
        w.eliminate_zeros()
        w.sort_indices()
        if w.nnz and (not np.all(np.isfinite(w.data)) or w.data.min() < 0):
            raise IngestError("weights must be finite and non-negative")
        for arr in (w.data, w.indices, w.indptr):
            arr.flags.writeable = False

        self.nodes = nodes
        self.ids = ids
        self.index = {node_id: i for i, node_id in enumerate(ids)}
        self.weights = w
        self.s_out = np.asarray(w.sum(axis=1)).ravel()
        self.s_in = np.asarray(w.sum(axis=0)).ravel()
        self.s_out.flags.writeable = False
        self.s_in.flags.writeable = False
        self.total_weight = math.fsum(w.data)

    @classmethod
    def from_arrays(cls, nodes, src, dst, weight) -> "WeightedDigraph":
        nodes = [n if isinstance(n, NodeRecord) else NodeRecord(str(n)) for n in nodes]
        size = len(nodes)
        w = sp.coo_matrix(
            (np.asarray(weight, dtype=float), (np.asarray(src), np.asarray(dst))),
            shape=(size, size),
        )
        return cls(nodes, w)

    @classmethod
    def from_dense(cls, matrix, ids: Sequence[str] | None = None) -> "WeightedDigraph":
        matrix = np.asarray(matrix, dtype=float)
        if ids is None:
            ids = [str(i) for i in range(matrix.shape[0])]
        return cls([NodeRecord(str(i)) for i in ids], sp.csr_matrix(matrix))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return int(self.weights.nnz)

    @property
    def usable(self) -> bool:
        """True when the graph can be partitioned (at least one node and W > 0)."""
        return self.n > 0 and self.total_weight > 0

    def require_usable(self) -> None:
        if self.n == 0:
            raise EmptyGraphError("graph has no nodes")
        if not self.total_weight > 0:
            raise EmptyGraphError("graph has zero total weight")

    def weight(self, src: str, dst: str) -> float:
        return float(self.weights[self.index[src], self.index[dst]])

    def edges(self) -> Iterator[tuple[str, str, float]]:
        """Yield ``(src, dst, w)`` in canonical order: source index, then target index."""
        w = self.weights
        for i in range(self.n):
            for k in range(w.indptr[i], w.indptr[i + 1]):
                yield self.ids[i], self.ids[w.indices[k]], float(w.data[k])

    def zero_activity_nodes(self) -> list[str]:
        idle = (self.s_out == 0) & (self.s_in == 0)
        return [self.ids[i] for i in np.flatnonzero(idle)]

    def dense(self) -> np.ndarray:
        return self.weights.toarray()

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        if self.ids != other.ids:
            return False
        a, b = self.weights, other.weights
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"WeightedDigraph(n={self.n}, edges={self.n_edges}, W={self.total_weight:.6g})"


def _aggregate(rows, nodes, directed, source) -> WeightedDigraph:
    """Sum ``(line, src, dst, weight)`` rows into a graph; ``nodes`` None infers them."""
    sums: dict[tuple[str, str], list[float]] = defaultdict(list)
    declared = None if nodes is None else {node.id for node in nodes}
    for line, src, dst, value in rows:
        for node_id in (src, dst):
            if declared is not None and node_id not in declared:
                raise IngestError(f"unknown node id {node_id!r}", path=source, line=line)
        if not math.isfinite(value):
            raise IngestError(f"non-finite weight {value!r}", path=source, line=line)
        if value < 0:
            raise IngestError(f"negative weight {value!r}", path=source, line=line)
        sums[(src, dst)].append(value)
        if not directed and src != dst:
            sums[(dst, src)].append(value)

    if nodes is None:
        seen = {node_id for pair in sums for node_id in pair}
        nodes = [NodeRecord(node_id) for node_id in natural_order(seen)]
    index = {node.id: i for i, node in enumerate(nodes)}
    size = len(sums)
    src_idx = np.empty(size, dtype=np.int64)
    dst_idx = np.empty(size, dtype=np.int64)
    weight = np.empty(size)
    for k, ((src, dst), values) in enumerate(sums.items()):
        src_idx[k] = index[src]
        dst_idx[k] = index[dst]
        # fsum is correctly rounded, hence independent of record order.
        weight[k] = math.fsum(values)
    return WeightedDigraph.from_arrays(nodes, src_idx, dst_idx, weight)


def build_network(
    records: Iterable[tuple[str, str, float]],
    nodes: Sequence[NodeRecord] | None = None,
    directed: bool = True,
) -> WeightedDigraph:
    """Aggregate call records ``(origin, destination, duration)`` into a network.

    The weight of arc ``i -> j`` is the sum of durations of all records from
    ``i`` to ``j``.  When ``nodes`` is given, every record must refer to a
    declared node and declared nodes without activity are kept.  With
    ``directed=False`` each record contributes to both arcs.

    An empty record stream yields a graph with ``W = 0``; check
    :attr:`WeightedDigraph.usable` before partitioning.
    """
    if nodes is not None:
        nodes = [n if isinstance(n, NodeRecord) else NodeRecord(str(n)) for n in nodes]

    def rows():
        for line, (src, dst, duration) in enumerate(records, start=1):
            yield line, str(src), str(dst), float(duration)

    return _aggregate(rows(), nodes, directed, source=None)


def load_edge_list(
    path: str | Path,
    nodes: Sequence[NodeRecord] | None = None,
    directed: bool = True,
) -> WeightedDigraph:
    """Read a ``src,dst,weight`` file.  Duplicate rows are summed."""
    path = Path(path)

    def rows(reader):
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"expected 3 fields, got {len(row)}", path=path, line=line)
            src, dst, raw = (field_.strip() for field_ in row)
            if not src or not dst:
                raise FormatError("empty node id", path=path, line=line)
            try:
                value = float(raw)
            except ValueError:
                raise FormatError(f"weight {raw!r} is not a number", path=path, line=line) from None
            yield line, src, dst, value

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EDGE_HEADER:
            raise FormatError(f"header must be {','.join(EDGE_HEADER)!r}, got {header}", path=path, line=1)
        return _aggregate(rows(reader), nodes, directed, source=path)


def write_edge_list(g: WeightedDigraph, path: str | Path) -> None:
    """Write ``g`` in canonical order with round-trip exact (``repr``) weights."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(EDGE_HEADER) + "\n")
        for src, dst, w in g.edges():
            fh.write(f"{_check_id(src)},{_check_id(dst)},{w!r}\n")


def _check_id(node_id: str) -> str:
    if any(c in node_id for c in ',\n\r"'):
        raise FormatError(f"node id {node_id!r} cannot be written to a comma-separated file")
    return node_id


def _opt_float(raw: str, name: str, path, line) -> float | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError:
        raise FormatError(f"{name} {raw!r} is not a number", path=path, line=line) from None


def load_nodes(path: str | Path) -> list[NodeRecord]:
    """Read a node file with header ``id,lon,lat,market_share,region_l1,region_l2``."""
    path = Path(path)
    nodes = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != NODE_HEADER:
            raise FormatError(f"header must be {','.join(NODE_HEADER)!r}, got {header}", path=path, line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(NODE_HEADER):
                raise FormatError(f"expected {len(NODE_HEADER)} fields, got {len(row)}", path=path, line=line)
            node_id = row[0].strip()
            if not node_id:
                raise FormatError("empty node id", path=path, line=line)
            lon = _opt_float(row[1], "lon", path, line)
            lat = _opt_float(row[2], "lat", path, line)
            share = _opt_float(row[3], "market_share", path, line)
            labels = tuple(
                (level, row[3 + level].strip()) for level in (1, 2) if row[3 + level].strip()
            )
            try:
                nodes.append(NodeRecord(node_id, lon, lat, None, labels, share))
            except ValueError as exc:
                raise FormatError(str(exc), path=path, line=line) from None
    return nodes


def write_nodes(nodes: Iterable[NodeRecord], path: str | Path) -> None:
    def fmt(x):
        return "" if x is None else repr(float(x))

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(NODE_HEADER) + "\n")
        for node in nodes:
            l1 = node.region(1) or ""
            l2 = node.region(2) or ""
            fields = [_check_id(node.id), fmt(node.lon), fmt(node.lat), fmt(node.market_share), l1, l2]
            fh.write(",".join(fields) + "\n")


def normalize_market_share(g: WeightedDigraph) -> WeightedDigraph:
    """Correct for operator coverage: ``w'_ij = w_ij / (m_i * m_j)``."""
    shares = []
    for node in g.nodes:
        m = node.market_share
        if m is None or not m > 0:
            raise IngestError(f"node {node.id!r} has no valid market share ({m!r})")
        shares.append(m)
    inv = sp.diags(1.0 / np.asarray(shares))
    return WeightedDigraph(g.nodes, inv @ g.weights @ inv)


def induced_subgraph(g: WeightedDigraph, members: Iterable[str]) -> WeightedDigraph:
    """Subnetwork on ``members`` keeping only arcs with both ends inside (loops included)."""
    members = set(members)
    if not members:
        raise ValueError("member set is empty")
    unknown = members.difference(g.index)
    if unknown:
        raise KeyError(f"unknown members: {sorted(unknown)[:5]}")
    idx = np.array(sorted(g.index[m] for m in members))
    return WeightedDigraph([g.nodes[i] for i in idx], g.weights[idx][:, idx])
