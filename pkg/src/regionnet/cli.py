"""Command-line front end: one pipeline step per invocation, composed via files.

Every run writes a JSON manifest (``--manifest``, default ``<first output>.manifest.json``;
runs without output files print it to stderr).  ``replay`` re-executes a manifest.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from scipy.sparse.csgraph import connected_components

from . import __version__
from .combo import OptimizerConfig, bisect, optimize
from .errors import FormatError, PartitionMismatchError, RegionNetError
from .hierarchy import read_hierarchy, subpartition, write_hierarchy
from .modularity import Partition, modularity, read_partition, write_partition
from .netcore import load_edge_list, load_nodes, normalize_market_share, write_edge_list, write_nodes
from .overlap import overlap_report
from .spatial import METHODS, SpatialLayout, build_adjacency, cohesion_report, export_geojson, load_polygons
from .synth import (
    NoiseConfig,
    SynthConfig,
    generate_country,
    perturb_with_stats,
    stability_curve,
    write_stability,
)

THREADS_ENV = "REGIONNET_THREADS"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# Path-valued options recorded in the manifest, split by direction.
INPUT_OPTS = ("edges", "nodes", "polygons", "partition", "level1", "detected", "reference", "hierarchy", "manifest_in")
OUTPUT_OPTS = ("out", "out_edges", "out_nodes", "out_partition")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def g6(x: float) -> str:
    return f"{x:.6g}"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise _UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise _UsageError(f"{THREADS_ENV} must be >= 1")
    return value


def _optimizer_args(p: argparse.ArgumentParser, partition_flags: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    if partition_flags:
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--max-communities", type=int, default=None)


def _graph_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edges", required=True, help="edge list src,dst,weight")
    p.add_argument("--nodes", help="node file; declares isolated nodes and coordinates")
    p.add_argument("--undirected", action="store_true", help="each row feeds both directions")
    p.add_argument("--normalize-share", action="store_true", help="divide weights by both endpoints' market share")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regionnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"regionnet {__version__}")
    parser.add_argument("--manifest", help="where to write the run manifest")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("partition", help="maximise modularity")
    _graph_args(p)
    _optimizer_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bisect", help="best split into two communities")
    _graph_args(p)
    _optimizer_args(p, partition_flags=False)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("hierarchy", help="second-level partition inside each community")
    _graph_args(p)
    _optimizer_args(p)
    p.add_argument("--level1", help="first-level partition (computed when omitted)")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="overlap of a detected and a reference partition")
    p.add_argument("--detected", required=True)
    p.add_argument("--reference", required=True, help="partition file, or node file with --level")
    p.add_argument("--level", type=int, choices=(1, 2), help="read the reference from this node-file region column")
    p.add_argument("--edges", help="add the detected partition's modularity")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write header and full-precision row")

    p = sub.add_parser("cohesion", help="spatial connectivity of each community")
    p.add_argument("--partition", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--polygons", help="GeoJSON polygons keyed by property 'id'")
    p.add_argument("--adjacency", choices=METHODS, default=None)
    p.add_argument("--out")

    p = sub.add_parser("synth", help="gravity-model synthetic country")
    p.add_argument("--regions", type=int, default=4)
    p.add_argument("--nodes-per-region", type=int, default=50)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.05)
    p.add_argument("--separation", type=float, default=0.3)
    p.add_argument("--floor", type=float, default=0.1)
    p.add_argument("--loop-scale", type=float, default=1.0)
    p.add_argument("--neighbors", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-nodes")
    p.add_argument("--out-partition")

    p = sub.add_parser("perturb", help="multiplicative uniform noise on arc weights")
    _graph_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stability", help="Rand index of noisy partitions against the noiseless one")
    _graph_args(p)
    _optimizer_args(p)
    p.add_argument("--epsilons", default="0,0.2,0.5,1,2,5")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--out")

    p = sub.add_parser("export-geojson", help="GeoJSON with community labels per node")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--partition")
    group.add_argument("--hierarchy")
    p.add_argument("--nodes", required=True)
    p.add_argument("--polygons")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest_in", metavar="MANIFEST")
    return parser


def _load_graph(args):
    nodes = load_nodes(args.nodes) if args.nodes else None
    g = load_edge_list(args.edges, nodes, directed=not args.undirected)
    if args.normalize_share:
        g = normalize_market_share(g)
    return g


def _warn_structure(g, err) -> None:
    idle = g.zero_activity_nodes()
    if idle:
        print(f"warning: {len(idle)} node(s) without activity, e.g. {idle[:5]}", file=err)
    pattern = g.weights + g.weights.T
    parts = connected_components(pattern, directed=False)[0]
    if parts > 1:
        print(f"warning: graph has {parts} disconnected components", file=err)


def _config(args) -> OptimizerConfig:
    threads = args.threads if args.threads is not None else _default_threads()
    return OptimizerConfig(
        max_communities=getattr(args, "max_communities", None),
        seed=args.seed,
        restarts=args.restarts,
        threads=threads,
    )


def _layout(args) -> SpatialLayout:
    polygons = load_polygons(args.polygons) if args.polygons else None
    return SpatialLayout.from_nodes(load_nodes(args.nodes), polygons)


def _reference(args) -> Partition:
    if args.level is None:
        return read_partition(args.reference)
    nodes = load_nodes(args.reference)
    missing = [n.id for n in nodes if n.region(args.level) is None]
    if missing:
        raise FormatError(f"no region_l{args.level} for nodes {missing[:5]}", path=args.reference)
    return Partition([n.id for n in nodes], [n.region(args.level) for n in nodes])


def cmd_partition(args, out, err) -> dict:
    g = _load_graph(args)
    _warn_structure(g, err)
    cfg = _config(args)
    p = optimize(g, cfg)
    write_partition(p, args.out)
    print(f"communities {p.k}", file=out)
    print(f"modularity {g6(p.quality)}", file=out)
    return {"config": vars(cfg)}


def cmd_bisect(args, out, err) -> dict:
    g = _load_graph(args)
    _warn_structure(g, err)
    cfg = _config(args)
    b = bisect(g, cfg)
    if args.out:
        write_partition(b.partition, args.out)
    print(f"communities {b.partition.k}", file=out)
    print(f"modularity {g6(b.quality)}", file=out)
    print(f"cross_fraction {g6(b.cross_fraction)}", file=out)
    print("part_weights " + " ".join(g6(w) for w in b.part_weights), file=out)
    return {"config": vars(cfg)}


def cmd_hierarchy(args, out, err) -> dict:
    g = _load_graph(args)
    _warn_structure(g, err)
    cfg = _config(args)
    level1 = read_partition(args.level1) if args.level1 else optimize(g, cfg)
    h = subpartition(g, level1, cfg, depth=args.depth)
    write_hierarchy(h, args.out)
    print(f"L1 {h.level1.k}", file=out)
    print(f"L2 {h.l2_count}", file=out)
    print("community,subcommunities,sub_modularity", file=out)
    for c, (k, q) in enumerate(zip(h.sub_counts(), h.sub_quality)):
        print(f"{c},{k},{g6(q)}", file=out)
    return {"config": vars(cfg)}


def cmd_compare(args, out, err) -> dict:
    detected = read_partition(args.detected)
    reference = _reference(args)
    q = None
    if args.edges:
        q = modularity(load_edge_list(args.edges), detected)
    report = overlap_report(detected, reference, samples=args.samples, seed=args.seed, modularity=q)
    print(report.header(), file=out)
    print(report.row(digits=6), file=out)
    if args.out:
        Path(args.out).write_text(report.header() + "\n" + report.row() + "\n", encoding="utf-8")
    return {"config": {"samples": args.samples, "seed": args.seed, "level": args.level}}


def cmd_cohesion(args, out, err) -> dict:
    layout = _layout(args)
    p = read_partition(args.partition)
    adj = build_adjacency(layout.aligned(p.nodes), args.adjacency)
    report = cohesion_report(p, adj)
    out.write(report.to_csv(digits=6))
    print(f"non_cohesive {report.non_cohesive}", file=out)
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    return {"config": {"adjacency": adj.method}}


def cmd_synth(args, out, err) -> dict:
    cfg = SynthConfig(
        region_count=args.regions,
        nodes_per_region=args.nodes_per_region,
        gravity_exponent=args.gamma,
        intra_boost=args.beta,
        population_spread=args.spread,
        seed=args.seed,
        region_radius=args.radius,
        min_separation=args.separation,
        distance_floor=args.floor,
        loop_scale=args.loop_scale,
        neighbors=args.neighbors,
    )
    country = generate_country(cfg)
    write_edge_list(country.graph, args.out_edges)
    if args.out_nodes:
        write_nodes(country.graph.nodes, args.out_nodes)
    if args.out_partition:
        write_partition(country.planted, args.out_partition)
    print(f"nodes {country.graph.n}", file=out)
    print(f"arcs {country.graph.n_edges}", file=out)
    print(f"inter_share {g6(country.inter_share)}", file=out)
    return {"config": vars(cfg)}


def cmd_perturb(args, out, err) -> dict:
    g = _load_graph(args)
    noise = NoiseConfig(args.epsilon, seed=args.seed)
    result = perturb_with_stats(g, noise)
    write_edge_list(result.graph, args.out)
    print(f"clamped {result.clamped} ({g6(result.clamped_fraction)} of arcs)", file=out)
    return {"config": vars(noise)}


def cmd_stability(args, out, err) -> dict:
    try:
        epsilons = [float(x) for x in args.epsilons.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"--epsilons must be comma-separated numbers, got {args.epsilons!r}") from None
    g = _load_graph(args)
    _warn_structure(g, err)
    cfg = _config(args)
    rows = stability_curve(g, epsilons, runs=args.runs, seed=args.seed, cfg=cfg)
    print("epsilon,mean_R,std_R,runs", file=out)
    for r in rows:
        print(f"{g6(r.epsilon)},{g6(r.mean_R)},{g6(r.std_R)},{r.runs}", file=out)
    if args.out:
        write_stability(rows, args.out)
    return {"config": {"optimizer": vars(cfg), "epsilons": epsilons, "runs": args.runs}}


def cmd_export_geojson(args, out, err) -> dict:
    layout = _layout(args)
    p = read_hierarchy(args.hierarchy) if args.hierarchy else read_partition(args.partition)
    export_geojson(p, layout, args.out)
    print(f"features {len(p.nodes)}", file=out)
    return {"config": {}}


COMMANDS = {
    "partition": cmd_partition,
    "bisect": cmd_bisect,
    "hierarchy": cmd_hierarchy,
    "compare": cmd_compare,
    "cohesion": cmd_cohesion,
    "synth": cmd_synth,
    "perturb": cmd_perturb,
    "stability": cmd_stability,
    "export-geojson": cmd_export_geojson,
}


def _check_args(args) -> None:
    for name in ("restarts", "runs", "samples", "threads", "max_communities", "depth"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise _UsageError(f"--{name.replace('_', '-')} must be >= 1")


def _manifest(argv, args, extra: dict, started: float) -> dict:
    opts = vars(args)
    return {
        "command": args.command,
        "argv": list(argv),
        "inputs": {k: opts[k] for k in INPUT_OPTS if opts.get(k)},
        "outputs": {k: opts[k] for k in OUTPUT_OPTS if opts.get(k)},
        "config": extra.get("config", {}),
        "seed": opts.get("seed"),
        "version": __version__,
        "duration_s": time.perf_counter() - started,
    }


def _write_manifest(manifest: dict, args, err) -> None:
    text = json.dumps(manifest, indent=2, default=str) + "\n"
    target = args.manifest
    if target is None and manifest["outputs"]:
        target = str(next(iter(manifest["outputs"].values()))) + ".manifest.json"
    if target is None:
        err.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    """Execute one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        _check_args(args)
        if args.command == "replay":
            manifest = json.loads(Path(args.manifest_in).read_text(encoding="utf-8"))
            if "argv" not in manifest or not isinstance(manifest["argv"], list):
                raise FormatError("manifest has no argv list", path=args.manifest_in)
            return run(manifest["argv"], out, err)
        started = time.perf_counter()
        extra = COMMANDS[args.command](args, out, err)
        _write_manifest(_manifest(argv, args, extra, started), args, err)
        return EXIT_OK
    except _UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (FormatError, PartitionMismatchError, OSError, json.JSONDecodeError) as exc:
        print(f"regionnet: {exc}", file=err)
        return EXIT_USAGE
    except (RegionNetError, ValueError) as exc:
        print(f"regionnet: {exc}", file=err)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
