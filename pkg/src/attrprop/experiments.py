"""Benchmark routines: theta sweeps and graph ablations on zero-shot splits."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .refine import (
    PropagationConfig,
    build_feature_graph,
    compute_edge_weights,
    identify_and_refine,
    neighborhood_consistency,
    propagate,
)
from .zsc import DEFAULT_LAMBDA, zero_shot_evaluate

THETA_GRID = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass(frozen=True)
class ZeroShotSplit:
    train_features: np.ndarray
    train_labels: np.ndarray
    train_initial: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    class_attrs: np.ndarray


def split_by_class(dataset, test_classes):
    """Hold out whole classes of a synthetic dataset; training keeps the noisy annotations."""
    labels = dataset.features.labels
    test = np.isin(labels, np.asarray(test_classes))
    return ZeroShotSplit(
        dataset.features.rows[~test], labels[~test], dataset.observed[:, ~test],
        dataset.features.rows[test], labels[test], dataset.class_attrs,
    )


def theta_sweep(split, thetas=THETA_GRID, config=PropagationConfig(), ridge_lambda=DEFAULT_LAMBDA, graph=None):
    """Flip fraction and mean-class accuracy for each theta.

    The graph and consistency scores do not depend on theta, so they are
    computed once.
    """
    if graph is None:
        graph = build_feature_graph(split.train_features, config)
    weights = compute_edge_weights(graph, config.p)
    J, z = neighborhood_consistency(split.train_initial, weights, graph)
    rows = []
    for theta in thetas:
        refined, report = identify_and_refine(split.train_initial, J, theta, z)
        result = zero_shot_evaluate(split.train_features, refined, split.test_features, split.test_labels,
                                    split.class_attrs, ridge_lambda, split.train_labels)
        rows.append((float(theta), report.flip_fraction, result.mean_class_accuracy))
    return rows


ABLATION_VARIANTS = {
    "ISA-HNG": {"metric": "hyperbolic", "topology": "relative_neighborhood"},
    "ISA-ENG": {"metric": "euclidean", "topology": "relative_neighborhood"},
    "ISA-HCG": {"metric": "hyperbolic", "topology": "complete"},
}


def ablation(split, config=PropagationConfig(), ridge_lambda=DEFAULT_LAMBDA):
    """Mean-class accuracy when training on unrefined annotations (CSA) versus each graph variant."""
    out = {}
    csa = zero_shot_evaluate(split.train_features, split.train_initial, split.test_features, split.test_labels,
                             split.class_attrs, ridge_lambda, split.train_labels)
    out["CSA"] = csa.mean_class_accuracy
    for name, opts in ABLATION_VARIANTS.items():
        refined, _, _ = propagate(split.train_features, split.train_labels, split.class_attrs,
                                  replace(config, **opts), initial=split.train_initial)
        res = zero_shot_evaluate(split.train_features, refined, split.test_features, split.test_labels,
                                 split.class_attrs, ridge_lambda, split.train_labels)
        out[name] = res.mean_class_accuracy
    return out
