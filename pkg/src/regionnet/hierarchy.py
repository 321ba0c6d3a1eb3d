"""Second-level partitions: re-run the optimizer inside each community.

Only arcs internal to a community enter its subproblem.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .combo import OptimizerConfig, optimize
from .errors import FormatError, PartitionMismatchError, RegionNetError
from .modularity import Partition, labels_for
from .netcore import WeightedDigraph, _check_id, induced_subgraph

HIERARCHY_HEADER = ("node_id", "community_l1", "community_l2")


@dataclass(frozen=True)
class HierarchicalPartition:
    """A level-1 partition and, per node, a sublabel inside its level-1 community.

    ``level2[i]`` is the sublabel of ``level1.nodes[i]``; sublabels are dense
    ``0..k_c-1`` within each community ``c``.  ``sub_quality[c]`` is the
    modularity of community ``c``'s subpartition on its own subgraph (0 when
    the community was not split for lack of nodes or weight).
    """

    level1: Partition
    level2: np.ndarray
    sub_quality: tuple[float, ...]

    def __post_init__(self):
        level2 = np.asarray(self.level2, dtype=np.int64)
        if level2.shape != (self.level1.n,):
            raise PartitionMismatchError("level2 needs one sublabel per node")
        for c in range(self.level1.k):
            sub = level2[self.level1.labels == c]
            if not np.array_equal(np.unique(sub), np.arange(sub.max() + 1)):
                raise PartitionMismatchError(f"sublabels of community {c} are not dense")
        level2.flags.writeable = False
        object.__setattr__(self, "level2", level2)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.level1.nodes

    def sub_counts(self) -> list[int]:
        return [int(self.level2[self.level1.labels == c].max()) + 1 for c in range(self.level1.k)]

    @property
    def l2_count(self) -> int:
        """Total number of level-2 cells."""
        return sum(self.sub_counts())

    def flat(self) -> Partition:
        """Level-2 cells as an ordinary partition."""
        k2 = int(self.level2.max()) + 1
        return Partition(self.nodes, self.level1.labels * k2 + self.level2)

    def as_dict(self) -> dict[str, tuple[int, int]]:
        return {v: (int(a), int(b)) for v, a, b in zip(self.nodes, self.level1.labels, self.level2)}

    def aligned(self, ids: Sequence[str]) -> "HierarchicalPartition":
        ids = tuple(ids)
        if ids == self.nodes:
            return self
        level1 = self.level1.aligned(ids)
        where = {v: i for i, v in enumerate(self.nodes)}
        level2 = self.level2[[where[v] for v in ids]]
        # Level-1 relabelling keeps communities intact, so reorder the sub-qualities.
        old = {int(self.level1.labels[where[v]]): int(c) for v, c in zip(ids, level1.labels)}
        sub_q = [0.0] * len(self.sub_quality)
        for before, after in old.items():
            sub_q[after] = self.sub_quality[before]
        return HierarchicalPartition(level1, level2, tuple(sub_q))


def subpartition(
    g: WeightedDigraph, level1: Partition, cfg: OptimizerConfig | None = None, depth: int = 2
) -> HierarchicalPartition:
    """Split every community of ``level1`` by optimizing its induced subgraph.

    ``depth`` greater than 2 recurses further; the returned level-2 sublabels
    then index the finest cells found inside each level-1 community.
    """
    if depth < 2:
        raise ValueError("depth must be >= 2")
    cfg = cfg or OptimizerConfig()
    labels = labels_for(g, level1)
    level1 = Partition(g.ids, labels, level1.quality)
    level2 = np.zeros(g.n, dtype=np.int64)
    sub_q = []
    for c in range(level1.k):
        idx = np.flatnonzero(labels == c)
        sub = induced_subgraph(g, [g.ids[i] for i in idx])
        if sub.n == 1 or not sub.usable:
            sub_q.append(0.0)
            continue
        try:
            inner = optimize(sub, cfg)
            if depth > 2 and inner.k > 1:
                inner = subpartition(sub, inner, cfg, depth - 1).flat()
                inner = Partition(inner.nodes, inner.labels, inner.quality)
        except RegionNetError as exc:
            raise type(exc)(f"community {c}: {exc}") from exc
        level2[[g.index[v] for v in sub.ids]] = inner.aligned(sub.ids).labels
        sub_q.append(float(inner.quality) if inner.quality is not None else 0.0)
    return HierarchicalPartition(level1, level2, tuple(sub_q))


def write_hierarchy(h: HierarchicalPartition, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(HIERARCHY_HEADER) + "\n")
        for node, a, b in zip(h.nodes, h.level1.labels, h.level2):
            fh.write(f"{_check_id(node)},{int(a)},{int(b)}\n")


def read_hierarchy(path: str | Path) -> HierarchicalPartition:
    path = Path(path)
    nodes, l1, l2 = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HIERARCHY_HEADER:
            raise FormatError(f"header must be {','.join(HIERARCHY_HEADER)!r}, got {header}", path=path, line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise FormatError("expected node_id,community_l1,community_l2", path=path, line=reader.line_num)
            nodes.append(row[0].strip())
            l1.append(row[1].strip())
            l2.append(row[2].strip())
    try:
        level1 = Partition(nodes, l1)
        level2 = np.zeros(len(nodes), dtype=np.int64)
        for c in range(level1.k):
            idx = np.flatnonzero(level1.labels == c)
            level2[idx] = Partition([nodes[i] for i in idx], [l2[i] for i in idx]).labels
        return HierarchicalPartition(level1, level2, tuple(0.0 for _ in range(level1.k)))
    except PartitionMismatchError as exc:
        raise FormatError(str(exc), path=path) from None
