"""Linear attribute-embedding zero-shot classifier and mean-class accuracy."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IllConditionedError, InvalidInputError, UndefinedClassError

DEFAULT_LAMBDA = 1.0
# relative slack under which two cosine distances count as a tie
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LinearAttributeMap:
    """``weights`` is M x d: attribute embedding = weights @ feature."""

    weights: np.ndarray
    ridge_lambda: float

    def project(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights.shape[1]:
            raise InvalidInputError(f"expected features with {self.weights.shape[1]} columns, got shape {x.shape}")
        return x @ self.weights.T


def train_map(features, targets, ridge_lambda=DEFAULT_LAMBDA):
    """Closed-form ridge solution of min_W ||W X^T - A||^2 + lambda ||W||^2.

    ``features`` is N x d, ``targets`` is M x N (one column per sample).
    """
    x = np.asarray(features, dtype=np.float64)
    a = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidInputError(f"features must be N x d with N, d >= 1, got {x.shape}")
    if a.ndim != 2 or a.shape[1] != x.shape[0]:
        raise InvalidInputError(f"targets must be M x {x.shape[0]}, got {a.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(a))):
        raise InvalidInputError("features and targets must be finite")
    if not (ridge_lambda >= 0 and np.isfinite(ridge_lambda)):
        raise InvalidInputError(f"ridge_lambda must be a nonnegative real, got {ridge_lambda}")
    gram = x.T @ x
    gram[np.diag_indices_from(gram)] += ridge_lambda
    rhs = x.T @ a.T
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            wt = scipy.linalg.solve(gram, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise IllConditionedError(
                f"normal equations are singular or ill-conditioned (lambda={ridge_lambda}); use lambda > 0"
            ) from exc
    return LinearAttributeMap(np.ascontiguousarray(wt.T), float(ridge_lambda))


def cosine_distances(u, class_attrs):
    """N x K matrix of 1 - cos(u_n, s_k); rows of zero-norm ``u`` come back NaN."""
    s = np.asarray(class_attrs, dtype=np.float64)
    s_norm = np.linalg.norm(s, axis=0)
    u_norm = np.linalg.norm(u, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (u @ s) / np.outer(u_norm, s_norm)
    return 1.0 - cos


def predict(attr_map, test_features, test_class_attrs, return_degenerate=False):
    """Nearest test class by cosine distance in attribute space.

    Distances within ``TIE_TOLERANCE`` of the minimum are ties, resolved to
    the lowest class index. A sample whose projection is the zero vector
    has no defined cosine; it falls to class 0 by the same rule and is
    reported in the degenerate mask when ``return_degenerate`` is set.
    """
    s = np.asarray(test_class_attrs, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] < 1:
        raise InvalidInputError("test class attributes must be an M x K matrix with K >= 1")
    if s.shape[0] != attr_map.weights.shape[0]:
        raise InvalidInputError(f"class attributes have {s.shape[0]} rows, the map produces {attr_map.weights.shape[0]}")
    empty = np.flatnonzero(~np.any(s != 0, axis=0))
    if empty.size:
        raise InvalidInputError(f"test class column {int(empty[0])} is all zero; cosine distance is undefined")
    u = attr_map.project(test_features)
    dist = cosine_distances(u, s)
    degenerate = np.isnan(dist).any(axis=1)
    dist[degenerate] = 0.0
    best = dist.min(axis=1, keepdims=True)
    ties = dist <= best + TIE_TOLERANCE * np.maximum(1.0, np.abs(best))
    pred = np.argmax(ties, axis=1)
    if return_degenerate:
        return pred, degenerate
    return pred


@dataclass(frozen=True)
class ZscResult:
    per_class_accuracy: dict
    mean_class_accuracy: float
    confusion: np.ndarray
    class_ids: list = field(default_factory=list)
    degenerate_count: int = 0

    @property
    def n_samples(self):
        return self.confusion.sum(axis=1)

    @property
    def n_correct(self):
        return np.diag(self.confusion).copy()

    def write_csv(self, path):
        """Per-class table followed by a ``mean_class_accuracy`` summary line."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class_index", "n_samples", "n_correct", "accuracy"])
            for k, cid in enumerate(self.class_ids):
                w.writerow([cid, int(self.n_samples[k]), int(self.n_correct[k]), f"{self.per_class_accuracy[cid]:.17g}"])
            w.writerow(["mean_class_accuracy", "", "", f"{self.mean_class_accuracy:.17g}"])

    def write_confusion_csv(self, path):
        np.savetxt(path, self.confusion, fmt="%d", delimiter=",")


def evaluate(predictions, true_labels, class_count=None, class_ids=None, degenerate_count=0):
    """Mean of per-class top-1 accuracies over local classes 0..K-1.

    ``class_ids`` (optional) names the local classes for reporting. Every
    class in 0..K-1 must have at least one sample.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InvalidInputError("predictions and labels must be 1-D and of equal length")
    if true.size == 0:
        raise UndefinedClassError("no test samples")
    if class_count is None:
        class_count = len(class_ids) if class_ids is not None else int(max(true.max(), pred.max())) + 1
    if class_ids is None:
        class_ids = list(range(class_count))
    if len(class_ids) != class_count:
        raise InvalidInputError("class_ids length does not match class_count")
    for arr, name in ((true, "label"), (pred, "prediction")):
        if arr.min() < 0 or arr.max() >= class_count:
            raise InvalidInputError(f"{name} outside [0, {class_count})")
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    counts = confusion.sum(axis=1)
    if np.any(counts == 0):
        missing = class_ids[int(np.flatnonzero(counts == 0)[0])]
        raise UndefinedClassError(f"class {missing} has no test samples; its accuracy is undefined")
    acc = np.diag(confusion) / counts
    per_class = {cid: float(v) for cid, v in zip(class_ids, acc)}
    return ZscResult(per_class, float(np.mean(acc)), confusion, list(class_ids), int(degenerate_count))


def zero_shot_evaluate(train_features, train_targets, test_features, test_labels, class_attrs,
                       ridge_lambda=DEFAULT_LAMBDA, train_labels=None):
    """Train on image-level targets, classify test samples among the test classes only.

    ``test_labels`` and ``train_labels`` hold global class indices into the
    columns of ``class_attrs``. When ``train_labels`` is given, any class
    appearing on both sides is rejected.
    """
    s = np.asarray(class_attrs)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if test_labels.size and (test_labels.min() < 0 or test_labels.max() >= s.shape[1]):
        raise InvalidInputError(f"test label outside [0, {s.shape[1]})")
    test_classes = np.unique(test_labels)
    if train_labels is not None:
        overlap = np.intersect1d(test_classes, np.asarray(train_labels))
        if overlap.size:
            raise InvalidInputError(f"classes {overlap.tolist()} appear in both train and test; zero-shot needs disjoint classes")
    attr_map = train_map(train_features, train_targets, ridge_lambda)
    pred, degenerate = predict(attr_map, test_features, s[:, test_classes], return_degenerate=True)
    local = np.searchsorted(test_classes, test_labels)
    return evaluate(pred, local, len(test_classes), [int(c) for c in test_classes], int(degenerate.sum()))
