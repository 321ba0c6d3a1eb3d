"""Pair-counting and information-theoretic comparison of two partitions.

All indices are computed from the contingency table of the two labelings, in
``O(n + k1 * k2)``.  Pair counts are exact integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePartitionError, PartitionMismatchError
from .modularity import Partition

REPORT_COLUMNS = ("R_r", "R", "F_r", "F", "log2n", "VI")


def _aligned(p1: Partition, p2: Partition) -> tuple[np.ndarray, np.ndarray]:
    if set(p1.nodes) != set(p2.nodes) or p1.n != p2.n:
        raise PartitionMismatchError("partitions are defined on different node sets")
    return p1.labels, p2.aligned(p1.nodes).labels


def contingency(l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    k2 = int(l2.max()) + 1
    k1 = int(l1.max()) + 1
    return np.bincount(l1 * k2 + l2, minlength=k1 * k2).reshape(k1, k2)


def _comb2(counts: np.ndarray) -> int:
    c = counts.astype(np.int64)
    return int((c * (c - 1) // 2).sum())


@dataclass(frozen=True)
class PairCounts:
    """``both``: together in both; ``only_first`` / ``only_second``: together in one; ``neither``."""

    both: int
    only_first: int
    only_second: int
    neither: int

    @property
    def total(self) -> int:
        return self.both + self.only_first + self.only_second + self.neither


def _pair_counts_from_labels(l1: np.ndarray, l2: np.ndarray) -> PairCounts:
    table = contingency(l1, l2)
    n = l1.size
    a = _comb2(table)
    first = _comb2(table.sum(axis=1))
    second = _comb2(table.sum(axis=0))
    total = n * (n - 1) // 2
    return PairCounts(a, first - a, second - a, total - first - second + a)


def pair_counts(p1: Partition, p2: Partition) -> PairCounts:
    return _pair_counts_from_labels(*_aligned(p1, p2))


def _rand(c: PairCounts) -> float:
    return (c.both + c.neither) / c.total


def _fm(c: PairCounts) -> float:
    first = c.both + c.only_first
    second = c.both + c.only_second
    if first == 0 or second == 0:
        raise DegeneratePartitionError("Fowlkes-Mallows is undefined when a partition has no co-clustered pair")
    return c.both / math.sqrt(first * second)


def rand_index(p1: Partition, p2: Partition) -> float:
    """Fraction of node pairs on which the two partitions agree."""
    if p1.n < 2:
        raise ValueError("Rand index needs at least two nodes")
    return _rand(pair_counts(p1, p2))


def fowlkes_mallows(p1: Partition, p2: Partition) -> float:
    if p1.n < 2:
        raise ValueError("Fowlkes-Mallows index needs at least two nodes")
    return _fm(pair_counts(p1, p2))


def _conditional_terms(table: np.ndarray, n: int) -> list[float]:
    """Weighted entropies of the rows of ``table`` given each column."""
    terms = []
    for col in table.T:
        cells = col[col > 0]
        if cells.size <= 1:
            continue
        b = int(cells.sum())
        s = math.fsum(float(c) * math.log2(c) for c in cells if c > 1)
        terms.append((b / n) * (math.log2(b) - s / b))
    return terms


def variation_of_information(p1: Partition, p2: Partition) -> float:
    """``H(p1 | p2) + H(p2 | p1)`` in bits."""
    l1, l2 = _aligned(p1, p2)
    table = contingency(l1, l2)
    n = l1.size
    return math.fsum(_conditional_terms(table, n) + _conditional_terms(table.T, n))


@dataclass(frozen=True)
class Baseline:
    r_mean: float
    f_mean: float
    r_std: float
    f_std: float
    samples: int
    skipped: int
    """Samples for which Fowlkes-Mallows was undefined (excluded from ``f_mean``)."""


def _mean(values: np.ndarray) -> float:
    # Constant samples (e.g. a single-block reference) give their value exactly.
    if values.min() == values.max():
        return float(values[0])
    return math.fsum(values) / values.size


def _std(values: np.ndarray) -> float:
    if values.size < 2 or values.min() == values.max():
        return 0.0
    return float(values.std(ddof=1))


def reshuffle_baseline(detected: Partition, reference: Partition, samples: int = 1000, seed: int = 0) -> Baseline:
    """Mean R and F against random relabelings of ``reference`` that keep its group sizes.

    The reference labels are permuted across nodes; ``detected`` stays fixed.
    Sample ``s`` uses its own generator spawned from ``seed``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    l1, l2 = _aligned(detected, reference)
    if l1.size < 2:
        raise ValueError("baseline needs at least two nodes")
    r_vals, f_vals = [], []
    skipped = 0
    for child in np.random.SeedSequence(seed).spawn(samples):
        shuffled = np.random.default_rng(child).permutation(l2)
        counts = _pair_counts_from_labels(l1, shuffled)
        r_vals.append(_rand(counts))
        try:
            f_vals.append(_fm(counts))
        except DegeneratePartitionError:
            skipped += 1
    r = np.array(r_vals)
    f = np.array(f_vals) if f_vals else np.array([math.nan])
    return Baseline(
        _mean(r),
        _mean(f),
        _std(r),
        _std(f),
        samples,
        skipped,
    )


@dataclass(frozen=True)
class OverlapReport:
    """Detected-vs-reference comparison in the column order ``R_r, R, F_r, F, log2n, VI``."""

    R: float
    F: float
    VI: float
    R_baseline: float
    F_baseline: float
    vi_bound: float
    n: int
    sample_count: int
    skipped: int = 0
    modularity: float | None = None

    def values(self) -> tuple[float, ...]:
        vals = (self.R_baseline, self.R, self.F_baseline, self.F, self.vi_bound, self.VI)
        if self.modularity is not None:
            vals += (self.modularity,)
        return vals

    def header(self) -> str:
        cols = REPORT_COLUMNS + (("Mod",) if self.modularity is not None else ())
        return ",".join(cols)

    def row(self, digits: int | None = None) -> str:
        """Comma-separated values; ``digits=None`` gives full precision."""
        if digits is None:
            return ",".join(repr(float(v)) for v in self.values())
        return ",".join(f"{v:.{digits}g}" for v in self.values())

    def text(self) -> str:
        lines = [
            f"nodes            {self.n}",
            f"Rand R           {self.R:.6g}   (reshuffled {self.R_baseline:.6g})",
            f"Fowlkes-Mallows  {self.F:.6g}   (reshuffled {self.F_baseline:.6g})",
            f"VI               {self.VI:.6g} bits   (bound log2 n = {self.vi_bound:.6g})",
            f"reshuffles       {self.sample_count}" + (f" ({self.skipped} skipped for F)" if self.skipped else ""),
        ]
        if self.modularity is not None:
            lines.append(f"modularity       {self.modularity:.6g}")
        return "\n".join(lines)


def overlap_report(
    detected: Partition,
    reference: Partition,
    samples: int = 1000,
    seed: int = 0,
    modularity: float | None = None,
) -> OverlapReport:
    counts = pair_counts(detected, reference)
    base = reshuffle_baseline(detected, reference, samples, seed)
    return OverlapReport(
        R=_rand(counts),
        F=_fm(counts),
        VI=variation_of_information(detected, reference),
        R_baseline=base.r_mean,
        F_baseline=base.f_mean,
        vi_bound=math.log2(detected.n),
        n=detected.n,
        sample_count=samples,
        skipped=base.skipped,
        modularity=modularity,
    )
