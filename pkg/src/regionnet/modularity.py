"""Partitions and the directed weighted modularity score.

For a partition ``c`` of a directed network with total weight ``W`` and
out/in strengths ``s_out``, ``s_in``::

    Q = sum_c [ w_in(c) / W - (s_out(c) / W) * (s_in(c) / W) ]

Self-loops count towards both ``w_in`` and the strengths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, PartitionMismatchError
from .netcore import WeightedDigraph, _check_id

PARTITION_HEADER = ("node_id", "community")


class _NewCommunity:
    def __repr__(self):
        return "NEW"


#: Move target meaning "a community that does not exist yet".
NEW = _NewCommunity()


def _dense_labels(values: Sequence[Hashable]) -> np.ndarray:
    """Relabel by order of first appearance, so community 0 holds node 0."""
    mapping: dict = {}
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        key = v.item() if isinstance(v, np.generic) else v
        out[i] = mapping.setdefault(key, len(mapping))
    return out


class Partition:
    """Assignment of each node to exactly one community.

    Labels are always canonical: dense integers ``0..k-1`` ordered by the
    smallest node index in each community.  ``quality`` optionally carries the
    modularity of the partition on the graph it was computed for.
    """

    def __init__(self, nodes: Sequence[str], labels: Sequence[Hashable], quality: float | None = None):
        nodes = tuple(str(v) for v in nodes)
        if len(nodes) != len(labels):
            raise PartitionMismatchError(f"{len(nodes)} nodes but {len(labels)} labels")
        if len(set(nodes)) != len(nodes):
            raise PartitionMismatchError("duplicate node ids in partition")
        self.nodes = nodes
        self.labels = _dense_labels(list(labels))
        self.labels.flags.writeable = False
        self.quality = quality

    @classmethod
    def from_mapping(cls, assignment: Mapping[str, Hashable], order: Sequence[str] | None = None) -> "Partition":
        if order is None:
            order = list(assignment)
        elif set(order) != set(assignment) or len(order) != len(assignment):
            raise PartitionMismatchError("assignment keys do not match the requested node order")
        return cls(order, [assignment[v] for v in order])

    @classmethod
    def single(cls, nodes: Sequence[str]) -> "Partition":
        return cls(nodes, [0] * len(nodes))

    @classmethod
    def singletons(cls, nodes: Sequence[str]) -> "Partition":
        return cls(nodes, list(range(len(nodes))))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def communities(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.k)]
        for node, c in zip(self.nodes, self.labels):
            groups[c].append(node)
        return groups

    def as_dict(self) -> dict[str, int]:
        return {node: int(c) for node, c in zip(self.nodes, self.labels)}

    def aligned(self, ids: Sequence[str]) -> "Partition":
        """The same partition with nodes listed in ``ids`` order."""
        ids = tuple(ids)
        if ids == self.nodes:
            return self
        if len(ids) != self.n or set(ids) != set(self.nodes):
            missing = set(ids) - set(self.nodes)
            extra = set(self.nodes) - set(ids)
            raise PartitionMismatchError(
                f"partition nodes differ from graph nodes (missing {sorted(missing)[:5]}, extra {sorted(extra)[:5]})"
            )
        where = {node: i for i, node in enumerate(self.nodes)}
        return Partition(ids, self.labels[[where[v] for v in ids]], self.quality)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.nodes == other.nodes and np.array_equal(self.labels, other.labels)

    __hash__ = None

    def __repr__(self):
        q = "" if self.quality is None else f", Q={self.quality:.6g}"
        return f"Partition(n={self.n}, k={self.k}{q})"


PartitionLike = Partition | Mapping[str, Hashable] | Sequence[Hashable]


def _raw_labels(g: WeightedDigraph, p: PartitionLike) -> list:
    """Labels of ``p`` in the node order of ``g``, in the caller's label space."""
    if isinstance(p, Partition):
        if p.nodes != g.ids:
            p.aligned(g.ids)  # raises on node-set mismatch
            where = {node: i for i, node in enumerate(p.nodes)}
            return [int(p.labels[where[v]]) for v in g.ids]
        return p.labels.tolist()
    if isinstance(p, Mapping):
        if len(p) != g.n or set(p) != set(g.ids):
            raise PartitionMismatchError("assignment keys differ from graph nodes")
        return [p[v] for v in g.ids]
    if len(p) != g.n:
        raise PartitionMismatchError(f"{len(p)} labels for a graph with {g.n} nodes")
    return list(p)


def labels_for(g: WeightedDigraph, p: PartitionLike) -> np.ndarray:
    """Dense integer labels of ``p`` in the node order of ``g``."""
    if isinstance(p, Partition) and p.nodes == g.ids:
        return p.labels
    return _dense_labels(_raw_labels(g, p))


def _grouped_fsum(values: np.ndarray, groups: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(groups, kind="stable")
    bounds = np.searchsorted(groups[order], np.arange(k + 1))
    sorted_values = values[order]
    return np.array([math.fsum(sorted_values[bounds[c]:bounds[c + 1]]) for c in range(k)])


def community_totals(g: WeightedDigraph, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Internal weight, out-strength and in-strength of every community."""
    k = int(labels.max()) + 1
    coo = g.weights.tocoo()
    src, dst = labels[coo.row], labels[coo.col]
    inside = src == dst
    w_in = _grouped_fsum(coo.data[inside], src[inside], k)
    s_out = _grouped_fsum(coo.data, src, k)
    s_in = _grouped_fsum(coo.data, dst, k)
    return w_in, s_out, s_in


def modularity(g: WeightedDigraph, p: PartitionLike) -> float:
    """Directed weighted modularity of ``p`` on ``g``."""
    g.require_usable()
    labels = labels_for(g, p)
    W = g.total_weight
    w_in, s_out, s_in = community_totals(g, labels)
    return math.fsum(w_in / W) - math.fsum((s_out / W) * (s_in / W))


@dataclass(frozen=True)
class EdgeScore:
    """Null-model scores ``q_ij = w_ij / W - s_out[i] * s_in[j] / W**2``.

    ``src``, ``dst`` and ``q`` list the arcs with positive weight; the score of
    any other pair is ``-null(i, j)``.
    """

    src: np.ndarray
    dst: np.ndarray
    q: np.ndarray
    total_weight: float
    s_out: np.ndarray
    s_in: np.ndarray

    def null(self, i: int, j: int) -> float:
        return self.s_out[i] * self.s_in[j] / self.total_weight**2

    def score(self, i: int, j: int) -> float:
        hit = np.flatnonzero((self.src == i) & (self.dst == j))
        if hit.size:
            return float(self.q[hit[0]])
        return -self.null(i, j)

    def dense(self) -> np.ndarray:
        W = self.total_weight
        out = -np.outer(self.s_out, self.s_in) / W**2
        out[self.src, self.dst] += (self.q + self.s_out[self.src] * self.s_in[self.dst] / W**2)
        return out


def edge_scores(g: WeightedDigraph) -> EdgeScore:
    g.require_usable()
    W = g.total_weight
    coo = g.weights.tocoo()
    q = coo.data / W - g.s_out[coo.row] * g.s_in[coo.col] / W**2
    return EdgeScore(coo.row.astype(np.int64), coo.col.astype(np.int64), q, W, g.s_out, g.s_in)


def _pair_score(g: WeightedDigraph, x: np.ndarray, y: np.ndarray) -> float:
    """``sum_{i in x, j in y} (q_ij + q_ji) / 2`` for boolean node masks."""
    W = g.total_weight
    w = g.weights
    e_xy = w[x][:, y].sum()
    e_yx = w[y][:, x].sum()
    null = g.s_out[x].sum() * g.s_in[y].sum() + g.s_in[x].sum() * g.s_out[y].sum()
    return (e_xy + e_yx) / (2 * W) - null / (2 * W * W)


def gain(g: WeightedDigraph, p: PartitionLike, movers: Iterable[str], target) -> float:
    """Change in modularity when ``movers`` (all in one community) move to ``target``.

    ``target`` is a community label of ``p`` or :data:`NEW`.
    """
    g.require_usable()
    raw = _raw_labels(g, p)
    movers = list(movers)
    if not movers:
        raise ValueError("movers is empty")
    try:
        idx = np.array([g.index[m] for m in movers])
    except KeyError as exc:
        raise PartitionMismatchError(f"unknown mover {exc.args[0]!r}") from None
    sources = {raw[i] for i in idx}
    if len(sources) != 1:
        raise ValueError(f"movers span {len(sources)} communities")
    (source,) = sources
    if target is not NEW:
        if target == source:
            raise ValueError("target equals the movers' current community")
        if target not in set(raw):
            raise ValueError(f"unknown target community {target!r}")

    moving = np.zeros(g.n, dtype=bool)
    moving[idx] = True
    staying = np.array([c == source for c in raw]) & ~moving
    delta = -_pair_score(g, moving, staying)
    if target is not NEW:
        delta += _pair_score(g, moving, np.array([c == target for c in raw]))
    return 2.0 * delta


def cross_weight_fraction(g: WeightedDigraph, p: PartitionLike) -> float:
    """Share of total weight carried by arcs between different communities."""
    g.require_usable()
    labels = labels_for(g, p)
    coo = g.weights.tocoo()
    crossing = labels[coo.row] != labels[coo.col]
    return math.fsum(coo.data[crossing]) / g.total_weight


def read_partition(path: str | Path) -> Partition:
    path = Path(path)
    nodes, labels = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PARTITION_HEADER:
            raise FormatError(f"header must be {','.join(PARTITION_HEADER)!r}, got {header}", path=path, line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                raise FormatError("expected node_id,community", path=path, line=reader.line_num)
            nodes.append(row[0].strip())
            labels.append(row[1].strip())
    try:
        return Partition(nodes, labels)
    except PartitionMismatchError as exc:
        raise FormatError(str(exc), path=path) from None


def write_partition(p: Partition, path: str | Path, order: Sequence[str] | None = None) -> None:
    """Write canonical labels, rows in ``order`` (default: the partition's node order)."""
    if order is not None:
        p = p.aligned(order)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(PARTITION_HEADER) + "\n")
        for node, c in zip(p.nodes, p.labels):
            fh.write(f"{_check_id(node)},{int(c)}\n")
