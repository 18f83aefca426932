"""Matrix file formats, dataset loading and the planted-noise synthetic benchmark.

Two on-disk formats are supported for every matrix:

csv
    Comma separated, no header, one matrix row per line. Reals are written
    with 17 significant digits so they read back exactly; binary matrices
    are written as 0/1. Label files hold one integer per line.
binary
    ``HNGM`` magic, then little-endian u32 version, u32 rows, u32 cols and
    a u8 dtype tag (0 = f64, 1 = u8), followed by the row-major payload.
    Labels are stored as an N x 1 f64 matrix.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    GenerationError,
    InvalidInputError,
    NonBinaryError,
    ParseError,
)

MAGIC = b"HNGM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("u1")}
FORMATS = ("csv", "binary")


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.rows, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidInputError(f"features must be N x d with N, d >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain non-finite values")
        if lab.shape != (x.shape[0],):
            raise InvalidInputError(f"{lab.size} labels for {x.shape[0]} feature rows")
        if lab.min() < 0 or lab.max() >= self.class_count:
            raise InvalidInputError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "rows", x)
        object.__setattr__(self, "labels", lab)

    @property
    def n_samples(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]


def _check_format(fmt):
    if fmt not in FORMATS:
        raise InvalidInputError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _is_binary_valued(a):
    return a.dtype == np.uint8 or bool(np.all((a == 0) | (a == 1)))


def save_matrix(path, matrix, fmt="csv"):
    """Write a 2-D matrix. uint8/bool arrays keep their integer form."""
    _check_format(fmt)
    a = np.asarray(matrix)
    if a.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {a.shape}")
    integral = a.dtype == np.bool_ or np.issubdtype(a.dtype, np.integer)
    if integral and not (a.size == 0 or (a.min() >= 0 and a.max() <= 1)):
        a = a.astype(np.float64)
        integral = False
    if fmt == "binary":
        if integral:
            tag, payload = 1, a.astype("u1")
        else:
            tag, payload = 0, a.astype("<f8")
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1], tag))
            fh.write(np.ascontiguousarray(payload).tobytes())
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if integral:
            w.writerows(a.astype(np.int64).tolist())
        else:
            w.writerows([f"{v:.17g}" for v in row] for row in a.astype(np.float64).tolist())


def _read_binary(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", path) from exc
    if len(raw) < _HEADER.size:
        raise ParseError("file too short for an HNGM header", path)
    magic, version, rows, cols, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", path)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", path)
    if tag not in _DTYPES:
        raise ParseError(f"unknown dtype tag {tag}", path)
    dtype = _DTYPES[tag]
    expected = rows * cols * dtype.itemsize
    if len(raw) - _HEADER.size != expected:
        raise ParseError(f"payload is {len(raw) - _HEADER.size} bytes, header implies {expected}", path)
    return np.frombuffer(raw, dtype=dtype, offset=_HEADER.size).reshape(rows, cols).copy()


def _read_csv(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", path) from exc
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DimensionMismatchError(f"row has {len(fields)} fields, expected {width}", path, lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", path, lineno) from exc
    if not rows:
        raise ParseError("no data rows", path)
    return np.array(rows, dtype=np.float64)


def load_matrix(path, fmt="csv"):
    _check_format(fmt)
    return _read_binary(path) if fmt == "binary" else _read_csv(path)


def load_binary_matrix(path, fmt="csv"):
    """Load a 0/1 matrix as uint8; any other value raises :class:`NonBinaryError`."""
    a = load_matrix(path, fmt)
    bad = np.argwhere((a != 0) & (a != 1))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        line = r + 1 if fmt == "csv" else None
        raise NonBinaryError(f"non-binary attribute value {a[r, c]:g} at row {r}, column {c}", path, line)
    return a.astype(np.uint8)


def save_labels(path, labels, fmt="csv"):
    _check_format(fmt)
    lab = np.asarray(labels, dtype=np.int64).reshape(-1)
    if fmt == "binary":
        save_matrix(path, lab.astype(np.float64)[:, None], "binary")
    else:
        Path(path).write_text("".join(f"{v}\n" for v in lab.tolist()))


def load_labels(path, fmt="csv"):
    _check_format(fmt)
    if fmt == "binary":
        a = _read_binary(path)
        if a.ndim != 2 or a.shape[1] != 1:
            raise DimensionMismatchError(f"label matrix must have one column, got {a.shape[1]}", path)
        vals = a[:, 0]
        bad = np.flatnonzero((vals != np.round(vals)) | (vals < 0))
        if bad.size:
            raise ParseError(f"label {vals[bad[0]]!r} at row {bad[0]} is not a nonnegative integer", path)
        return vals.astype(np.int64)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", path) from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            v = int(s)
        except ValueError as exc:
            raise ParseError(f"label {s!r} is not an integer", path, lineno) from exc
        if v < 0:
            raise ParseError(f"label {v} is negative", path, lineno)
        out.append(v)
    if not out:
        raise ParseError("no labels", path)
    return np.array(out, dtype=np.int64)


def load_dataset(feature_path, label_path, class_attr_path, fmt="csv"):
    """Read features (N x d), labels (N) and class attributes (M x L).

    Returns
    -------
    FeatureMatrix, np.ndarray
        The class attribute matrix is uint8.
    """
    x = load_matrix(feature_path, fmt)
    if not np.all(np.isfinite(x)):
        raise ParseError("features contain non-finite values", feature_path)
    labels = load_labels(label_path, fmt)
    attrs = load_binary_matrix(class_attr_path, fmt)
    if labels.size != x.shape[0]:
        raise DimensionMismatchError(f"{labels.size} labels for {x.shape[0]} feature rows", label_path)
    if labels.max() >= attrs.shape[1]:
        raise DimensionMismatchError(
            f"label {labels.max()} needs at least {labels.max() + 1} class columns, "
            f"attribute file has {attrs.shape[1]}",
            class_attr_path,
        )
    return FeatureMatrix(x, labels, attrs.shape[1]), attrs


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-noise benchmark.

    ``center_scale`` sets how far apart clusters sit relative to
    ``cluster_spread`` (see :func:`generate_synthetic`).
    """

    cluster_count: int = 5
    points_per_cluster: int = 40
    dimension: int = 16
    cluster_spread: float = 1.0
    attribute_count: int = 20
    noise_rate: float = 0.1
    seed: int = 0
    center_scale: float = 3.0

    def __post_init__(self):
        for name in ("cluster_count", "points_per_cluster", "dimension", "attribute_count"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if not self.cluster_spread > 0:
            raise InvalidInputError("cluster_spread must be positive")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise InvalidInputError("noise_rate must lie in [0, 1]")
        if not self.center_scale > 0:
            raise InvalidInputError("center_scale must be positive")


@dataclass(frozen=True)
class SyntheticDataset:
    features: FeatureMatrix
    class_attrs: np.ndarray
    ground_truth: np.ndarray
    observed: np.ndarray
    noise_mask: np.ndarray

    @property
    def noise_cells(self):
        return [tuple(int(v) for v in c) for c in np.argwhere(self.noise_mask)]

    def subset(self, classes):
        """Samples of the given classes only, keeping global class indices."""
        keep = np.isin(self.features.labels, np.asarray(classes))
        fm = FeatureMatrix(self.features.rows[keep], self.features.labels[keep], self.features.class_count)
        return SyntheticDataset(fm, self.class_attrs, self.ground_truth[:, keep], self.observed[:, keep],
                                self.noise_mask[:, keep])


MIN_SEPARATION = 6.0
_MAX_TRIES = 100


def noise_cell_count(noise_rate, cells):
    """floor(noise_rate * cells), ignoring float error below 1e-9."""
    return int(math.floor(round(noise_rate * cells, 9)))


def generate_synthetic(spec):
    """Gaussian clusters with distinct binary attribute columns and planted bit flips.

    Class attribute columns are distinct, nonzero random binary vectors.
    Cluster centers are a random linear image of the attribute signs,
    ``center_scale * cluster_spread * Q (2a - 1)`` with Q ~ N(0, 1/M), so
    classes sharing attributes lie closer together and a linear map can
    relate features to attributes. Q is redrawn until every pair of
    centers is at least 6 * cluster_spread apart. Each point is its center
    plus isotropic N(0, cluster_spread^2) noise.

    The observed image-level matrix equals the expanded class attributes
    with exactly floor(noise_rate * M * N) cells flipped, chosen uniformly
    without replacement.

    Raises
    ------
    GenerationError
        No distinct attribute columns exist (L > 2^M - 1) or the separation
        could not be met, which happens in very low dimension.
    """
    rng = np.random.default_rng(spec.seed)
    L, M, d = spec.cluster_count, spec.attribute_count, spec.dimension
    n_per = spec.points_per_cluster
    if M < 63 and L > 2 ** M - 1:
        raise GenerationError(f"cannot draw {L} distinct nonzero columns of {M} binary attributes")

    columns = []
    seen = set()
    while len(columns) < L:
        c = rng.integers(0, 2, size=M, dtype=np.uint8)
        key = c.tobytes()
        if c.any() and key not in seen:
            seen.add(key)
            columns.append(c)
    class_attrs = np.column_stack(columns)
    signs = 2.0 * class_attrs - 1.0

    min_sep = MIN_SEPARATION * spec.cluster_spread
    for _ in range(_MAX_TRIES):
        q = rng.normal(scale=1.0 / np.sqrt(M), size=(d, M))
        centers = spec.center_scale * spec.cluster_spread * (q @ signs).T
        if L < 2:
            break
        diff = centers[:, None, :] - centers[None, :, :]
        sep = np.sqrt(np.sum(diff * diff, axis=-1))
        if sep[np.triu_indices(L, k=1)].min() >= min_sep:
            break
    else:
        raise GenerationError(
            f"could not separate {L} clusters by {MIN_SEPARATION} x spread in {d} dimensions "
            f"after {_MAX_TRIES} tries; use a higher dimension or larger center_scale"
        )

    labels = np.repeat(np.arange(L), n_per)
    rows = centers[labels] + rng.normal(scale=spec.cluster_spread, size=(L * n_per, d))
    truth = class_attrs[:, labels]
    k = noise_cell_count(spec.noise_rate, truth.size)
    mask = np.zeros(truth.size, dtype=bool)
    mask[rng.choice(truth.size, size=k, replace=False)] = True
    mask = mask.reshape(truth.shape)
    observed = np.where(mask, 1 - truth, truth).astype(np.uint8)
    return SyntheticDataset(FeatureMatrix(rows, labels, L), class_attrs, truth, observed, mask)
