"""Region delineation from weighted interaction networks."""

from .combo import Bisection, Combo, OptimizerConfig, bisect, greedy_baseline, optimize
from .hierarchy import HierarchicalPartition, subpartition
from .modularity import NEW, Partition, cross_weight_fraction, gain, modularity
from .netcore import NodeRecord, WeightedDigraph, build_network, load_edge_list, load_nodes
from .overlap import fowlkes_mallows, overlap_report, rand_index, reshuffle_baseline, variation_of_information

__version__ = "0.1.0"

__all__ = [
    "NEW",
    "Bisection",
    "Combo",
    "HierarchicalPartition",
    "NodeRecord",
    "OptimizerConfig",
    "Partition",
    "WeightedDigraph",
    "bisect",
    "build_network",
    "cross_weight_fraction",
    "fowlkes_mallows",
    "gain",
    "greedy_baseline",
    "load_edge_list",
    "load_nodes",
    "modularity",
    "optimize",
    "overlap_report",
    "rand_index",
    "reshuffle_baseline",
    "subpartition",
    "variation_of_information",
]
