from __future__ import annotations

import itertools

import numpy as np
import pytest

from regionnet.modularity import Partition
from regionnet.netcore import WeightedDigraph

BARBELL_EDGES = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]


def barbell_graph() -> WeightedDigraph:
    """Two unit triangles joined by one bridge, every undirected edge as two arcs."""
    A = np.zeros((6, 6))
    for i, j in BARBELL_EDGES:
        A[i, j] = A[j, i] = 1.0
    return WeightedDigraph.from_dense(A)


def random_digraph(rng: np.random.Generator, n: int, density: float = 0.5, loops: bool = True) -> WeightedDigraph:
    A = rng.random((n, n)) * (rng.random((n, n)) < density)
    if not loops:
        np.fill_diagonal(A, 0.0)
    if A.sum() == 0:
        A[0, 1 % n] = 1.0
    return WeightedDigraph.from_dense(A)


def set_partitions(items: list):
    """All set partitions of ``items`` as lists of blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def labels_of(blocks, n: int) -> list[int]:
    out = [0] * n
    for c, block in enumerate(blocks):
        for v in block:
            out[v] = c
    return out


def pair_enumeration(l1, l2) -> tuple[int, int, int, int]:
    """Naive O(n^2) pair counts: together in both, only first, only second, neither."""
    a = b = c = d = 0
    for i, j in itertools.combinations(range(len(l1)), 2):
        s1, s2 = l1[i] == l1[j], l2[i] == l2[j]
        if s1 and s2:
            a += 1
        elif s1:
            b += 1
        elif s2:
            c += 1
        else:
            d += 1
    return a, b, c, d


@pytest.fixture
def barbell() -> WeightedDigraph:
    return barbell_graph()


@pytest.fixture
def triangles() -> Partition:
    return Partition([str(i) for i in range(6)], [0, 0, 0, 1, 1, 1])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
