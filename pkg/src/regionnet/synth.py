"""Synthetic countries from a gravity model with planted regions, and noise.

Nodes are scattered in small discs around region centers in the unit square.
Arc weights follow ``w_ij = p_i p_j / max(d_ij, floor)**gamma`` with an extra
factor ``beta`` inside a planted region; self-loops are ``p_i**2 * loop_scale``.
The distance floor keeps weights bounded for nearby nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .combo import OptimizerConfig, optimize
from .errors import GeometryError
from .modularity import Partition
from .netcore import NodeRecord, WeightedDigraph
from .overlap import rand_index
from .spatial import SpatialLayout, build_adjacency, cohesion_report

STABILITY_HEADER = ("epsilon", "mean_R", "std_R", "runs")
NOISE_MODELS = ("multiplicative-uniform",)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of :func:`generate_country`.

    ``neighbors`` keeps, besides loops, only arcs between mutual or one-sided
    k-nearest neighbours; ``None`` keeps the complete graph.
    """

    region_count: int = 4
    nodes_per_region: int = 50
    gravity_exponent: float = 2.0
    intra_boost: float = 10.0
    population_spread: float = 0.5
    seed: int = 0
    region_radius: float = 0.05
    min_separation: float = 0.3
    distance_floor: float = 0.1
    loop_scale: float = 1.0
    neighbors: int | None = None
    max_attempts: int = 50

    def __post_init__(self):
        if self.region_count < 1:
            raise ValueError("region_count must be >= 1")
        if self.nodes_per_region < 1:
            raise ValueError("nodes_per_region must be >= 1")
        if not self.intra_boost > 1:
            raise ValueError("intra_boost must be > 1")
        if not self.gravity_exponent > 0:
            raise ValueError("gravity_exponent must be > 0")
        if self.population_spread < 0:
            raise ValueError("population_spread must be >= 0")
        if not (self.region_radius > 0 and self.distance_floor > 0 and self.loop_scale >= 0):
            raise ValueError("region_radius and distance_floor must be > 0, loop_scale >= 0")
        if self.neighbors is not None and self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class SyntheticCountry:
    graph: WeightedDigraph
    layout: SpatialLayout
    planted: Partition
    centers: np.ndarray
    masses: np.ndarray
    inter_share: float
    """Share of total weight on arcs between planted regions."""
    attempts: int = 1
    nested: Partition | None = None
    """Planted sub-blocks, for nested countries."""


def _scatter_centers(rng, k: int, separation: float, margin: float, tries: int = 2000) -> np.ndarray | None:
    centers: list[np.ndarray] = []
    for _ in range(tries):
        if len(centers) == k:
            break
        c = rng.uniform(margin, 1 - margin, size=2)
        if all(np.hypot(*(c - o)) >= separation for o in centers):
            centers.append(c)
    return np.array(centers) if len(centers) == k else None


def _disc(rng, center: np.ndarray, radius: float, m: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(m))
    t = rng.uniform(0, 2 * math.pi, m)
    return center + np.column_stack([r * np.cos(t), r * np.sin(t)])


def _gravity_graph(
    points: np.ndarray,
    masses: np.ndarray,
    multiplier: np.ndarray,
    cfg: SynthConfig,
    ids: Sequence[str],
    regions: Sequence[tuple[tuple[int, str], ...]],
) -> WeightedDigraph:
    n = len(points)
    if cfg.neighbors is not None and cfg.neighbors < n - 1:
        _, nn = cKDTree(points).query(points, k=cfg.neighbors + 1)
        src = np.repeat(np.arange(n), cfg.neighbors + 1)
        dst = nn.ravel()
        pairs = np.unique(np.r_[src * n + dst, dst * n + src])
        src, dst = pairs // n, pairs % n
        src, dst = src[src != dst], dst[src != dst]
    else:
        src, dst = np.nonzero(~np.eye(n, dtype=bool))
    d = np.maximum(np.linalg.norm(points[src] - points[dst], axis=1), cfg.distance_floor)
    w = masses[src] * masses[dst] / d**cfg.gravity_exponent * multiplier[src, dst]
    loops = np.arange(n)
    src = np.r_[src, loops]
    dst = np.r_[dst, loops]
    w = np.r_[w, masses**2 * cfg.loop_scale]
    nodes = [
        NodeRecord(ids[i], float(points[i, 0]), float(points[i, 1]), region_labels=regions[i]) for i in range(n)
    ]
    return WeightedDigraph.from_arrays(nodes, src, dst, w)


def _inter_share(g: WeightedDigraph, labels: np.ndarray) -> float:
    coo = g.weights.tocoo()
    return math.fsum(coo.data[labels[coo.row] != labels[coo.col]]) / g.total_weight


def _contiguous(layout: SpatialLayout, planted: Partition) -> bool:
    if layout.coords.shape[0] < 3:
        return True
    try:
        adj = build_adjacency(layout, "gabriel")
    except GeometryError:
        return False
    return cohesion_report(planted, adj).cohesive


def generate_country(cfg: SynthConfig) -> SyntheticCountry:
    """Synthetic network whose planted regions are contiguous under gabriel adjacency."""
    rng = np.random.default_rng(cfg.seed)
    k, m = cfg.region_count, cfg.nodes_per_region
    margin = min(0.5, cfg.region_radius + 0.05)
    for attempt in range(1, cfg.max_attempts + 1):
        centers = _scatter_centers(rng, k, cfg.min_separation, margin)
        if centers is None:
            continue
        points = np.concatenate([_disc(rng, c, cfg.region_radius, m) for c in centers])
        labels = np.repeat(np.arange(k), m)
        ids = [str(i) for i in range(k * m)]
        layout = SpatialLayout(ids, points, geographic=False)
        planted = Partition(ids, labels)
        if k > 1 and not _contiguous(layout, planted):
            continue
        masses = rng.lognormal(0.0, cfg.population_spread, size=k * m)
        multiplier = np.where(labels[:, None] == labels[None, :], cfg.intra_boost, 1.0)
        regions = [((1, f"R{c}"),) for c in labels]
        g = _gravity_graph(points, masses, multiplier, cfg, ids, regions)
        return SyntheticCountry(g, layout, planted, centers, masses, _inter_share(g, labels), attempt)
    raise GeometryError(f"no feasible layout after {cfg.max_attempts} attempts; lower min_separation or region_count")


@dataclass(frozen=True)
class NestedConfig:
    """Two-level planted structure: ``super_count`` blocks of ``sub_count`` sub-blocks.

    Arc multipliers are ``sub_boost * super_boost`` inside a sub-block,
    ``super_boost`` between sub-blocks of one super-block and 1 across
    super-blocks.  Sub-blocks sit on a ring of radius ``ring_radius`` around
    their super-block center.
    """

    super_count: int = 2
    sub_count: int = 3
    nodes_per_sub: int = 30
    sub_boost: float = 2.0
    super_boost: float = 50.0
    gravity_exponent: float = 2.0
    population_spread: float = 0.3
    seed: int = 0
    ring_radius: float = 0.12
    sub_radius: float = 0.03
    min_separation: float = 0.5
    distance_floor: float = 0.3
    loop_scale: float = 1.0
    max_attempts: int = 50

    def __post_init__(self):
        if self.super_count < 1 or self.sub_count < 1 or self.nodes_per_sub < 1:
            raise ValueError("block counts and sizes must be >= 1")
        if not (self.sub_boost > 1 and self.super_boost > 1):
            raise ValueError("boosts must be > 1")


def generate_nested_country(cfg: NestedConfig) -> SyntheticCountry:
    """Nested synthetic; ``planted`` holds the super-blocks and ``nested`` the sub-blocks."""
    rng = np.random.default_rng(cfg.seed)
    S, s, m = cfg.super_count, cfg.sub_count, cfg.nodes_per_sub
    flat = SynthConfig(
        region_count=S,
        gravity_exponent=cfg.gravity_exponent,
        distance_floor=cfg.distance_floor,
        loop_scale=cfg.loop_scale,
        region_radius=cfg.ring_radius + cfg.sub_radius,
    )
    margin = min(0.5, cfg.ring_radius + cfg.sub_radius + 0.02)
    for attempt in range(1, cfg.max_attempts + 1):
        centers = _scatter_centers(rng, S, cfg.min_separation, margin)
        if centers is None:
            continue
        phase = rng.uniform(0, 2 * math.pi, S)
        parts = []
        for a in range(S):
            for b in range(s):
                t = phase[a] + 2 * math.pi * b / s
                sub_center = centers[a] + cfg.ring_radius * np.array([math.cos(t), math.sin(t)])
                parts.append(_disc(rng, sub_center, cfg.sub_radius, m))
        points = np.concatenate(parts)
        sub = np.repeat(np.arange(S * s), m)
        sup = sub // s
        ids = [str(i) for i in range(len(points))]
        layout = SpatialLayout(ids, points, geographic=False)
        planted, nested = Partition(ids, sup), Partition(ids, sub)
        if len(points) >= 3 and not (_contiguous(layout, planted) and _contiguous(layout, nested)):
            continue
        masses = rng.lognormal(0.0, cfg.population_spread, size=len(points))
        same_sup = sup[:, None] == sup[None, :]
        same_sub = sub[:, None] == sub[None, :]
        multiplier = np.where(same_sub, cfg.sub_boost * cfg.super_boost, np.where(same_sup, cfg.super_boost, 1.0))
        regions = [((1, f"R{a}"), (2, f"R{a}.{b % s}")) for a, b in zip(sup, sub)]
        g = _gravity_graph(points, masses, multiplier, flat, ids, regions)
        return SyntheticCountry(g, layout, planted, centers, masses, _inter_share(g, sup), attempt, nested)
    raise GeometryError(f"no feasible nested layout after {cfg.max_attempts} attempts")


@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float = 0.0
    model: str = "multiplicative-uniform"
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; choose from {NOISE_MODELS}")


@dataclass(frozen=True)
class Perturbation:
    graph: WeightedDigraph
    clamped: int
    """Arcs whose perturbed weight was negative and set to 0."""

    @property
    def clamped_fraction(self) -> float:
        return self.clamped / max(1, self.graph.weights.nnz + self.clamped)


def perturb_with_stats(g: WeightedDigraph, noise: NoiseConfig) -> Perturbation:
    """``w_ij * (1 + eps * u_ij)`` with ``u_ij ~ U(-1, 1)`` per arc, negatives set to 0."""
    if noise.epsilon == 0:
        return Perturbation(g, 0)
    w = g.weights
    u = np.random.default_rng(noise.seed).uniform(-1.0, 1.0, size=w.nnz)
    data = w.data * (1.0 + noise.epsilon * u)
    clamped = int(np.count_nonzero(data < 0))
    data = np.maximum(data, 0.0)
    out = w.copy()
    out.data = data
    return Perturbation(WeightedDigraph(g.nodes, out), clamped)


def perturb(g: WeightedDigraph, noise: NoiseConfig) -> WeightedDigraph:
    return perturb_with_stats(g, noise).graph


@dataclass(frozen=True)
class StabilityRow:
    epsilon: float
    mean_R: float
    std_R: float
    runs: int
    clamped_fraction: float = 0.0


def stability_curve(
    g: WeightedDigraph,
    epsilons: Sequence[float],
    runs: int = 20,
    seed: int = 0,
    cfg: OptimizerConfig | None = None,
    reference: Partition | None = None,
) -> list[StabilityRow]:
    """Mean Rand index between partitions of noisy copies and the noiseless partition.

    Run ``r`` at grid position ``e`` perturbs with seed ``(seed, e, r)``; the
    optimizer itself always uses ``cfg.seed``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cfg = cfg or OptimizerConfig(seed=seed)
    if reference is None:
        reference = optimize(g, cfg)
    rows = []
    for e, eps in enumerate(epsilons):
        values, clamped = [], []
        for r in range(runs):
            noise_seed = int(np.random.SeedSequence([seed, e, r]).generate_state(1)[0])
            pert = perturb_with_stats(g, NoiseConfig(float(eps), seed=noise_seed))
            clamped.append(pert.clamped_fraction)
            p = optimize(pert.graph, cfg) if eps > 0 else reference
            values.append(rand_index(p, reference))
        arr = np.array(values)
        std = float(arr.std(ddof=1)) if runs > 1 else 0.0
        rows.append(StabilityRow(float(eps), float(arr.mean()), std, runs, float(np.mean(clamped))))
    return rows


def write_stability(rows: Sequence[StabilityRow], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STABILITY_HEADER)
        for row in rows:
            writer.writerow([repr(row.epsilon), repr(row.mean_R), repr(row.std_R), row.runs])


def config_dict(cfg) -> dict:
    return asdict(cfg)
