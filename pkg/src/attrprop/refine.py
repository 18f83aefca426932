"""Neighborhood-consistency scoring and bit-flip refinement of attribute matrices.

Attribute matrices are laid out attributes x samples (M x N). Every
attribute row is handled independently against one shared graph, and all
scores are computed from the unrefined input before anything is flipped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InvalidInputError, TopologyError
from .geometry import DEFAULT_MAX_NORM, embed_features, pairwise_distances
from .graph import Metric, Topology, build_graph

DEFAULT_P = 2.0
DEFAULT_THETA = 0.7


def as_binary_matrix(values, name="attributes"):
    a = np.asarray(values)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all((a == 0) | (a == 1)):
        bad = np.argwhere((a != 0) & (a != 1))[0]
        raise InvalidInputError(f"{name} must be binary; entry {tuple(int(b) for b in bad)} is {a[tuple(bad)]}")
    return a.astype(np.uint8)


def expand_class_attributes(class_attrs, labels):
    """Give every sample its class column: result[:, n] = class_attrs[:, labels[n]]."""
    a = as_binary_matrix(class_attrs, "class attributes")
    lab = np.asarray(labels)
    if lab.ndim != 1 or (lab.size and not np.all(lab == np.round(lab))):
        raise InvalidInputError("labels must be a 1-D sequence of integer class indices")
    lab = lab.astype(np.int64)
    if lab.size and (lab.min() < 0 or lab.max() >= a.shape[1]):
        raise InvalidInputError(f"label out of range [0, {a.shape[1]}): {lab.min() if lab.min() < 0 else lab.max()}")
    return a[:, lab]


@dataclass(frozen=True)
class EdgeWeights:
    """Row-stochastic inverse-distance weights, one row per vertex (CSR)."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    p: float

    @property
    def vertex_count(self):
        return self.indptr.size - 1

    def of(self, v):
        s = slice(self.indptr[v], self.indptr[v + 1])
        return self.indices[s], self.weights[s]

    def matrix(self):
        n = self.vertex_count
        return sparse.csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))


def idw_weights(distances, p):
    """Inverse-distance weights h^-p / sum(h^-p) for one vertex's incident edges.

    Zero distances take all the weight, split evenly; this is the limit of
    the formula as those distances shrink to 0.
    """
    h = np.asarray(distances, dtype=np.float64)
    zero = h == 0
    if zero.any():
        return zero / np.count_nonzero(zero)
    # (h_min / h)^p is in (0, 1], so no overflow for tiny h or large p
    r = (h.min() / h) ** p
    return r / r.sum()


def compute_edge_weights(graph, p=DEFAULT_P):
    if not (p > 0 and np.isfinite(p)):
        raise InvalidInputError(f"IDW exponent p must be a positive real, got {p}")
    deg = graph.degrees()
    if np.any(deg == 0):
        raise TopologyError(f"vertex {int(np.flatnonzero(deg == 0)[0])} has no neighbors; IDW weights are undefined")
    w = np.empty(graph.indices.size)
    for v in range(graph.vertex_count):
        s = slice(graph.indptr[v], graph.indptr[v + 1])
        w[s] = idw_weights(graph.neighbor_lengths[s], p)
    return EdgeWeights(graph.indptr.copy(), graph.indices.copy(), w, float(p))


def neighborhood_consistency(attrs, weights, graph=None):
    """Per-cell consistency J and expected value z against the neighbors.

    z is the weighted mean of the neighbors' bits. J is the weighted share of
    neighbors agreeing with the cell's own bit, i.e. z when the bit is 1 and
    1 - z when it is 0. Both are formed as ratios of sums over the agreeing
    and disagreeing neighbors, so unanimous neighborhoods give exactly 0 or
    1 and complementing a whole row leaves J bit-for-bit unchanged.

    Returns
    -------
    J, z : (M, N) float arrays
    """
    a = as_binary_matrix(attrs)
    n = weights.vertex_count
    if graph is not None:
        if graph.vertex_count != n or not np.array_equal(graph.indices, weights.indices):
            raise InvalidInputError("edge weights were not computed on this graph")
    if a.shape[1] != n:
        raise InvalidInputError(f"attribute matrix has {a.shape[1]} columns but the graph has {n} vertices")
    w = weights.matrix()
    ones = np.asarray(w @ a.T.astype(np.float64)).T
    zeros = np.asarray(w @ (1 - a).T.astype(np.float64)).T
    total = ones + zeros
    z = ones / total
    J = np.where(a == 1, ones, zeros) / total
    return J, z


@dataclass(frozen=True)
class ConsistencyReport:
    consistency: np.ndarray
    expected: np.ndarray
    original: np.ndarray
    flip_mask: np.ndarray
    theta: float

    @property
    def flipped(self):
        """Flipped cells as sorted (attribute, sample) pairs."""
        return [tuple(int(v) for v in c) for c in np.argwhere(self.flip_mask)]

    @property
    def flip_count(self):
        return int(np.count_nonzero(self.flip_mask))

    @property
    def flip_fraction(self):
        return self.flip_count / self.flip_mask.size

    def write_csv(self, path):
        """One row per cell: attribute_index,sample_index,a,z,J,flipped."""
        m, n = self.original.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["attribute_index", "sample_index", "a", "z", "J", "flipped"])
            for i in range(m):
                for j in range(n):
                    w.writerow([
                        i, j, int(self.original[i, j]),
                        f"{self.expected[i, j]:.17g}", f"{self.consistency[i, j]:.17g}",
                        int(self.flip_mask[i, j]),
                    ])


def identify_and_refine(attrs, J, theta=DEFAULT_THETA, z=None):
    """Flip every bit whose consistency falls strictly below ``theta``."""
    a = as_binary_matrix(attrs)
    J = np.asarray(J, dtype=np.float64)
    if J.shape != a.shape:
        raise InvalidInputError(f"consistency shape {J.shape} does not match attributes {a.shape}")
    if not (0.0 <= theta <= 1.0):
        raise InvalidInputError(f"theta must lie in [0, 1], got {theta}")
    mask = J < theta
    refined = np.where(mask, 1 - a, a).astype(np.uint8)
    expected = np.full(a.shape, np.nan) if z is None else np.asarray(z, dtype=np.float64)
    return refined, ConsistencyReport(J, expected, a, mask, float(theta))


@dataclass(frozen=True)
class PropagationConfig:
    metric: str = Metric.HYPERBOLIC.value
    topology: str = Topology.RELATIVE_NEIGHBORHOOD.value
    target_max_norm: float = DEFAULT_MAX_NORM
    p: float = DEFAULT_P
    theta: float = DEFAULT_THETA
    center: bool = False
    threads: int | None = None


def build_feature_graph(features, config=PropagationConfig()):
    """Embed features, measure all pairs, and build the configured graph."""
    points = embed_features(features, config.target_max_norm, center=config.center)
    dist = pairwise_distances(points, metric=Metric(config.metric).value, threads=config.threads)
    return build_graph(dist, config.topology, config.metric, threads=config.threads)


def propagate(features, labels, class_attrs, config=PropagationConfig(), initial=None, graph=None):
    """Learn image-level attributes from class-level ones in a single pass.

    The starting matrix is ``class_attrs`` expanded by ``labels`` unless an
    explicit per-sample ``initial`` matrix (M x N) is given, e.g. annotations
    that are already noisy per image. A prebuilt ``graph`` skips the
    geometry stages.

    Returns
    -------
    refined, report, graph
    """
    if initial is None:
        start = expand_class_attributes(class_attrs, labels)
    else:
        start = as_binary_matrix(initial, "initial attributes")
    if graph is None:
        graph = build_feature_graph(features, config)
    if start.shape[1] != graph.vertex_count:
        raise InvalidInputError(f"{start.shape[1]} attribute columns for {graph.vertex_count} samples")
    weights = compute_edge_weights(graph, config.p)
    J, z = neighborhood_consistency(start, weights, graph)
    refined, report = identify_and_refine(start, J, config.theta, z)
    return refined, report, graph


def recovery_metrics(report, noise_mask):
    """Share of planted flips undone, and share of clean cells wrongly flipped."""
    noise = np.asarray(noise_mask, dtype=bool)
    if noise.shape != report.flip_mask.shape:
        raise InvalidInputError("noise mask shape does not match the report")
    n_noise = np.count_nonzero(noise)
    n_clean = noise.size - n_noise
    reverted = np.count_nonzero(report.flip_mask & noise) / n_noise if n_noise else 1.0
    clean = np.count_nonzero(report.flip_mask & ~noise) / n_clean if n_clean else 0.0
    return {"reverted": reverted, "clean_flipped": clean}
