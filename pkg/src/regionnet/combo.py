"""Iterative modularity optimizer with split, merge and shift-part moves.

Starting from a single community, every step considers each pair
``(source community, destination)`` where the destination is another existing
community or a new one.  For each pair the subset of the source that gains the
most by moving is found by a Kernighan-Lin style local search; the best move
over all pairs is applied.  Moving a proper subset to a new community is a
split, moving the whole source to an existing community is a merge, moving a
proper subset to an existing community is a shift.  The loop stops when no
move gains more than ``gain_tolerance``.

Only pairs touching a community changed by the last move are re-evaluated.

Internally the objective is written with the symmetrised modularity matrix
``B_ij = (q_ij + q_ji) / 2`` so that ``Q = sum_{c(i)=c(j)} B_ij``.  Moving the
subset ``x`` (0/1 vector over the source ``A``) to destination ``D`` changes
``Q`` by ``2 f(x)`` with::

    f(x) = sum_i x_i (d_i - a_i) + x' B_AA x

where ``a_i`` and ``d_i`` are the row sums of ``B`` over ``A`` and ``D``.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import EmptyGraphError
from .modularity import NEW, Partition, cross_weight_fraction, modularity
from .netcore import WeightedDigraph

# Subproblems up to this size use a dense block of B; larger ones use the
# sparse weights plus the rank-2 null model.
DENSE_LIMIT = 3000
# Below this size the spectral initialisation uses a full eigendecomposition.
EIGH_LIMIT = 400
# Gains closer than this are treated as ties.
TIE_EPS = 1e-12
_IMPROVE_EPS = 1e-14


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`optimize`.

    ``max_communities=None`` leaves the number of communities unbounded.
    ``threads`` only changes how subproblems are scheduled; results do not
    depend on it.
    """

    max_communities: int | None = None
    gain_tolerance: float = 1e-9
    seed: int = 0
    kl_sweeps: int = 20
    restarts: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.max_communities is not None and self.max_communities < 1:
            raise ValueError("max_communities must be >= 1")
        if not self.gain_tolerance > 0:
            raise ValueError("gain_tolerance must be > 0")
        if self.kl_sweeps < 1:
            raise ValueError("kl_sweeps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


class _Model:
    """Symmetrised modularity matrix of a graph, kept in factored form."""

    def __init__(self, g: WeightedDigraph):
        W = g.total_weight
        w = g.weights
        self.n = g.n
        self.sym = ((w + w.T) * (0.5 / W)).tocsr()
        self.sym.sort_indices()
        self.so = g.s_out / W
        self.si = g.s_in / W
        self.diag = self.sym.diagonal() - self.so * self.si


class _Block:
    """Restriction of ``B`` to one source community with everything a pair search needs."""

    def __init__(self, model: _Model, idx: np.ndarray, labels: np.ndarray, order: dict[int, int]):
        self.idx = idx
        self.m = m = idx.size
        rows = model.sym[idx]
        self.so = so = model.so[idx]
        self.si = si = model.si[idx]
        self.diag = model.diag[idx]

        # Row sums of B from each source node into every community.
        k = len(order)
        pos = np.fromiter((order[c] for c in labels), dtype=np.int64, count=labels.size)
        coo = rows.tocoo()
        conn = sp.csr_matrix((coo.data, (coo.row, pos[coo.col])), shape=(m, k)).toarray()
        out_tot = np.bincount(pos, weights=model.so, minlength=k)
        in_tot = np.bincount(pos, weights=model.si, minlength=k)
        self.row_sums = conn - 0.5 * (np.outer(so, in_tot) + np.outer(si, out_tot))
        self.own = self.row_sums[:, order[int(labels[idx[0]])]]

        if m <= DENSE_LIMIT:
            block = rows[:, idx].toarray()
            block -= 0.5 * (np.outer(so, si) + np.outer(si, so))
            self.dense = block
            self.sparse = None
        else:
            self.dense = None
            self.sparse = rows[:, idx].tocsr()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ x
        return self.sparse @ x - 0.5 * (self.so * (self.si @ x) + self.si * (self.so @ x))

    def column(self, u: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[u]
        col = -0.5 * (self.so * self.si[u] + self.si * self.so[u])
        sl = slice(self.sparse.indptr[u], self.sparse.indptr[u + 1])
        col[self.sparse.indices[sl]] += self.sparse.data[sl]
        return col

    def objective(self, c: np.ndarray, x: np.ndarray) -> float:
        return float(c @ x + x @ self.matvec(x))

    def leading_vector(self) -> np.ndarray | None:
        """Leading eigenvector of ``B_AA - diag(a)``, the relaxed bisection problem."""
        m = self.m
        if m <= EIGH_LIMIT:
            mat = self.dense - np.diag(self.own)
            vals, vecs = np.linalg.eigh(mat)
            if vals[-1] <= _IMPROVE_EPS:
                return None
            v = vecs[:, -1]
        else:
            op = LinearOperator((m, m), matvec=lambda v: self.matvec(v) - self.own * v, dtype=float)
            v0 = np.linspace(1.0, 2.0, m)
            try:
                vals, vecs = eigsh(op, k=1, which="LA", v0=v0, tol=1e-6, maxiter=50 * m)
            except ArpackNoConvergence as exc:
                if exc.eigenvalues.size == 0:
                    return None
                vals, vecs = exc.eigenvalues, exc.eigenvectors
            if vals[0] <= _IMPROVE_EPS:
                return None
            v = vecs[:, 0]
        # Orient so that the first node stays put; the split is the same either way.
        if v[np.argmax(np.abs(v) > 1e-12)] < 0:
            v = -v
        return v

    def refine(self, c: np.ndarray, x: np.ndarray, sweeps: int) -> tuple[np.ndarray, float]:
        """Kernighan-Lin passes with rollback to the best prefix of each pass."""
        m = self.m
        x = x.astype(float)
        patience = m if m <= 200 else max(50, m // 8)
        for _ in range(sweeps):
            y = self.matvec(x)
            sign = 1.0 - 2.0 * x
            delta = sign * (c + 2.0 * y) + self.diag
            flips: list[int] = []
            total = best = 0.0
            best_len = 0
            for _step in range(m):
                u = int(np.argmax(delta))
                du = delta[u]
                if du == -np.inf:
                    break
                total += du
                s = sign[u]
                x[u] = 1.0 - x[u]
                delta += (2.0 * s) * sign * self.column(u)
                sign[u] = -s
                delta[u] = -np.inf
                flips.append(u)
                if total > best + _IMPROVE_EPS:
                    best = total
                    best_len = len(flips)
                elif len(flips) - best_len > patience:
                    break
            for u in flips[best_len:]:
                x[u] = 1.0 - x[u]
            if best <= _IMPROVE_EPS:
                break
        return x, self.objective(c, x)

    def best_move(self, dest_rows: np.ndarray | None, sweeps: int, rng) -> tuple[float, np.ndarray]:
        """Best subset to move; ``dest_rows`` None means a new community."""
        m = self.m
        if dest_rows is None:
            c = -self.own
            starts = []
            v = self.leading_vector()
            if v is not None:
                starts.append((v > 0).astype(float))
        else:
            c = dest_rows - self.own
            starts = [
                (c + self.diag > 0).astype(float),
                np.ones(m),
            ]
        if rng is not None:
            starts.append((rng.random(m) < 0.5).astype(float))
        if not starts:
            starts.append(np.zeros(m))

        best_gain, best_x = 0.0, np.zeros(m, dtype=bool)
        for x0 in starts:
            x, f = self.refine(c, x0, sweeps)
            if 2.0 * f > best_gain + TIE_EPS:
                best_gain, best_x = 2.0 * f, x > 0.5
        return best_gain, best_x


@dataclass
class _Run:
    labels: np.ndarray
    quality: float
    history: list[float] = field(default_factory=list)


def _connected_pairs(model: _Model, labels: np.ndarray, order: dict[int, int]) -> np.ndarray:
    k = len(order)
    pos = np.fromiter((order[c] for c in labels), dtype=np.int64, count=labels.size)
    onehot = sp.csr_matrix((np.ones(labels.size), (np.arange(labels.size), pos)), shape=(labels.size, k))
    return (onehot.T @ model.sym @ onehot).toarray() > 0


def _initial_labels(n: int, cfg: OptimizerConfig, run: int) -> np.ndarray:
    """Run 0 starts from one community; later runs from a seeded random partition."""
    if run == 0 or n == 1:
        return np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, run]))
    cap = max(2, int(round(math.sqrt(n))))
    if cfg.max_communities is not None:
        cap = min(cap, cfg.max_communities)
    k0 = int(rng.integers(1, cap + 1))
    return rng.integers(0, k0, size=n).astype(np.int64)


def _single_run(g: WeightedDigraph, model: _Model, cfg: OptimizerConfig, run: int, pool) -> _Run:
    n = g.n
    labels = _initial_labels(n, cfg, run)
    members = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
    version = {c: i for i, c in enumerate(members)}
    stamp = len(members)
    next_id = int(labels.max()) + 1
    cache: dict[tuple[int, object], tuple[tuple, bool, float, np.ndarray | None]] = {}
    quality = modularity(g, labels)
    history = [quality]
    step = 0
    randomize = run > 0

    while True:
        comm_ids = sorted(members)
        order = {c: i for i, c in enumerate(comm_ids)}
        can_new = cfg.max_communities is None or len(comm_ids) < cfg.max_communities
        adjacent = _connected_pairs(model, labels, order)

        tasks = []
        for a in comm_ids:
            dests: list = [d for d in comm_ids if d != a]
            if can_new and members[a].size > 1:
                dests.append(NEW)
            stale = []
            for d in dests:
                key = (version[a], None if d is NEW else version[d])
                pruned = d is not NEW and can_new and not adjacent[order[a], order[d]]
                entry = cache.get((a, d))
                if entry is not None and entry[0] == key and (not entry[1] or pruned):
                    continue
                if pruned:
                    # Moving to an unconnected community never beats moving to a new one.
                    cache[(a, d)] = (key, True, -math.inf, None)
                    continue
                stale.append(d)
            if stale:
                seed = np.random.SeedSequence([cfg.seed, run, step, a]) if randomize else None
                tasks.append((a, stale, seed))

        def evaluate(task):
            a, stale, seed = task
            rng = np.random.default_rng(seed) if seed is not None else None
            block = _Block(model, members[a], labels, order)
            out = []
            for d in stale:
                rows = None if d is NEW else block.row_sums[:, order[d]]
                out.append((d,) + block.best_move(rows, cfg.kl_sweeps, rng))
            return a, out

        results = pool.map(evaluate, tasks) if pool is not None else map(evaluate, tasks)
        for a, out in results:
            for d, gain_value, mask in out:
                key = (version[a], None if d is NEW else version[d])
                cache[(a, d)] = (key, False, gain_value, mask)

        moves = []
        for (a, d), (key, _pruned, gain_value, mask) in cache.items():
            if a not in members or (d is not NEW and d not in members):
                continue
            if d is NEW and not can_new:
                continue
            if key != (version[a], None if d is NEW else version[d]):
                continue
            if gain_value > cfg.gain_tolerance:
                moves.append((gain_value, (a, math.inf if d is NEW else d), a, d, mask))
        if not moves:
            break
        moves.sort(key=lambda mv: mv[1])
        # Largest gain; near-ties go to the smallest (source, destination).
        best = moves[0]
        for mv in moves[1:]:
            if mv[0] > best[0] + TIE_EPS:
                best = mv

        gain_value, _rank, a, d, mask = best
        moving = members[a][mask]
        if d is NEW:
            d = next_id
            next_id += 1
            members[d] = np.empty(0, dtype=np.int64)
        labels[moving] = d
        members[a] = members[a][~mask]
        members[d] = np.union1d(members[d], moving)
        version[d] = stamp
        version[a] = stamp + 1
        stamp += 2
        if members[a].size == 0:
            del members[a], version[a]
        stale_keys = [key for key in cache if key[0] not in members or (key[1] is not NEW and key[1] not in members)]
        for key in stale_keys:
            del cache[key]
        quality += gain_value
        history.append(quality)
        step += 1

    return _Run(labels, modularity(g, labels), history)


class Combo:
    """Stateful front end to the optimizer; keeps the accepted-Q trace of the best run."""

    def __init__(self, cfg: OptimizerConfig | None = None):
        self.cfg = cfg or OptimizerConfig()
        self.history: list[float] = []
        self.run_qualities: list[float] = []

    def fit(self, g: WeightedDigraph) -> Partition:
        if g.n == 0:
            raise EmptyGraphError("graph has no nodes")
        g.require_usable()
        cfg = self.cfg
        model = _Model(g)
        pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            best = None
            self.run_qualities = []
            for run in range(cfg.restarts):
                result = _single_run(g, model, cfg, run, pool)
                self.run_qualities.append(result.quality)
                if best is None or result.quality > best.quality + TIE_EPS:
                    best = result
        finally:
            if pool is not None:
                pool.shutdown()
        self.history = best.history
        return Partition(g.ids, best.labels, quality=best.quality)


def optimize(g: WeightedDigraph, cfg: OptimizerConfig | None = None) -> Partition:
    """Maximise modularity; the returned partition carries its ``quality`` (Q)."""
    return Combo(cfg).fit(g)


@dataclass(frozen=True)
class Bisection:
    partition: Partition
    quality: float
    cross_fraction: float
    part_weights: tuple[float, ...]
    """Internal weight of each part as a share of ``W``."""


def bisect(g: WeightedDigraph, cfg: OptimizerConfig | None = None) -> Bisection:
    """Best split into at most two communities ("breaking line")."""
    if g.n < 2:
        raise ValueError("bisection needs at least two nodes")
    cfg = replace(cfg or OptimizerConfig(), max_communities=2)
    p = optimize(g, cfg)
    W = g.total_weight
    coo = g.weights.tocoo()
    lab = p.labels
    inside = lab[coo.row] == lab[coo.col]
    parts = tuple(
        math.fsum(coo.data[inside & (lab[coo.row] == c)]) / W for c in range(p.k)
    )
    return Bisection(p, p.quality, cross_weight_fraction(g, p), parts)


def greedy_baseline(g: WeightedDigraph) -> Partition:
    """Agglomerative best-merge-first modularity heuristic.

    Starts from singletons and repeatedly merges the connected pair of
    communities with the largest non-negative gain.
    """
    if g.n == 0:
        raise EmptyGraphError("graph has no nodes")
    g.require_usable()
    model = _Model(g)
    n = g.n
    so = model.so.copy()
    si = model.si.copy()
    links: list[dict[int, float]] = [dict() for _ in range(n)]
    coo = model.sym.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        if i != j:
            links[i][j] = links[i].get(j, 0.0) + v
    parent = np.arange(n)
    version = [0] * n
    alive = [True] * n

    def merge_gain(a, b):
        return 2.0 * links[a][b] - (so[a] * si[b] + si[a] * so[b])

    heap = []
    for a in range(n):
        for b in links[a]:
            if a < b:
                heapq.heappush(heap, (-merge_gain(a, b), a, b, 0, 0))

    while heap:
        neg, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        if -neg < -1e-15:
            break
        # Keep the community with more links, fold the other into it.
        if len(links[a]) < len(links[b]):
            a, b = b, a
        for c, v in links[b].items():
            if c == a:
                continue
            links[a][c] = links[a].get(c, 0.0) + v
            links[c][a] = links[a][c]
            del links[c][b]
        links[a].pop(b, None)
        links[b] = {}
        so[a] += so[b]
        si[a] += si[b]
        alive[b] = False
        parent[parent == b] = a
        version[a] += 1
        for c in links[a]:
            lo, hi = (a, c) if a < c else (c, a)
            heapq.heappush(heap, (-merge_gain(lo, hi), lo, hi, version[lo], version[hi]))

    p = Partition(g.ids, parent)
    p.quality = modularity(g, p)
    return p
