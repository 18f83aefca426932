"""Image-specific attribute learning by propagation over hyperbolic neighborhood graphs."""

from .datasets import SyntheticSpec, generate_synthetic, load_dataset
from .geometry import embed_features, hyperbolic_distance, pairwise_distances
from .graph import NeighborhoodGraph, build_graph, graph_stats
from .refine import (
    PropagationConfig,
    compute_edge_weights,
    expand_class_attributes,
    identify_and_refine,
    neighborhood_consistency,
    propagate,
)
from .zsc import evaluate, predict, train_map

__version__ = "0.1.0"
