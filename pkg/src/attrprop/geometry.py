"""Poincaré ball embedding and hyperbolic distances (curvature -1)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    InvalidInputError,
    OutOfDomainError,
)

DEFAULT_MAX_NORM = 0.9
_ROW_BLOCK = 64


def _as_finite_matrix(x, name="features"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contain non-finite values")
    return arr


def _check_in_ball(sq_norms):
    bad = np.flatnonzero(~(sq_norms < 1.0))
    if bad.size:
        raise OutOfDomainError(
            f"point {bad[0]} has norm {np.sqrt(sq_norms[bad[0]]):.17g} >= 1; "
            "Poincaré ball points must satisfy ||x|| < 1"
        )


@dataclass(frozen=True)
class PoincarePoint:
    """A single point strictly inside the unit ball."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("a Poincaré point needs a non-empty 1-D coordinate vector")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("point coordinates must be finite")
        _check_in_ball(np.array([c @ c]))
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self):
        return self.coords.size


@dataclass(frozen=True)
class PoincarePointSet:
    """N points in the ball, stored row-wise, plus the rescale used to get there.

    ``center`` is the mean that was subtracted before rescaling (zeros when
    centering was off), so ``points / scale_factor + center`` recovers the
    original feature rows.
    """

    points: np.ndarray
    scale_factor: float
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InvalidInputError(f"points must be an (N, d) array with N, d >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        if not (self.scale_factor > 0 and np.isfinite(self.scale_factor)):
            raise InvalidInputError(f"scale_factor must be positive, got {self.scale_factor}")
        _check_in_ball(np.einsum("ij,ij->i", pts, pts))
        center = np.zeros(pts.shape[1]) if self.center is None else np.asarray(self.center, dtype=np.float64)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", center)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __getitem__(self, i):
        return PoincarePoint(self.points[i])

    def to_features(self):
        """Undo the embedding."""
        return self.points / self.scale_factor + self.center


def embed_features(features, target_max_norm=DEFAULT_MAX_NORM, center=False):
    """Rescale feature rows globally so the largest row norm equals ``target_max_norm``.

    Relative geometry is preserved (one shared multiplier). With
    ``center=True`` the column mean is subtracted first.

    Raises
    ------
    InvalidInputError
        Non-finite features or ``target_max_norm`` outside (0, 1).
    DegenerateInputError
        Every row has zero norm, so no rescale exists.
    """
    x = _as_finite_matrix(features)
    if not (0.0 < target_max_norm < 1.0):
        raise InvalidInputError(f"target_max_norm must lie in (0, 1), got {target_max_norm}")
    mean = x.mean(axis=0) if center else np.zeros(x.shape[1])
    if center:
        x = x - mean
    max_norm = np.sqrt(np.einsum("ij,ij->i", x, x)).max()
    if max_norm == 0.0:
        raise DegenerateInputError("all feature rows have zero norm; cannot embed into the ball")
    scale = target_max_norm / max_norm
    pts = x * scale
    # rounding can leave the farthest point a hair above target; pull it back inside
    sq = np.einsum("ij,ij->i", pts, pts)
    if sq.max() >= 1.0:
        pts = pts * np.nextafter(1.0, 0.0) / np.sqrt(sq.max())
    return PoincarePointSet(pts, float(scale), mean)


def _hyperbolic_block(xa, xb, sqa, sqb):
    """Distances between every row of ``xa`` and every row of ``xb``.

    arcosh(1 + 2u) is evaluated as 2 asinh(sqrt(u)), which is the same
    function but keeps full relative precision for nearby points.
    """
    diff = xa[:, None, :] - xb[None, :, :]
    num = np.sum(diff * diff, axis=-1)
    den = (1.0 - sqa)[:, None] * (1.0 - sqb)[None, :]
    return 2.0 * np.arcsinh(np.sqrt(num / den))


def _euclidean_block(xa, xb, sqa=None, sqb=None):
    diff = xa[:, None, :] - xb[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _coords(p):
    if isinstance(p, PoincarePoint):
        return p.coords
    c = np.asarray(p, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise InvalidInputError("expected a 1-D coordinate vector")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("point coordinates must be finite")
    return c


def hyperbolic_distance(a, b):
    """Poincaré-ball distance arcosh(1 + 2|a-b|^2 / ((1-|a|^2)(1-|b|^2)))."""
    ca, cb = _coords(a), _coords(b)
    if ca.shape != cb.shape:
        raise InvalidInputError(f"dimension mismatch: {ca.size} vs {cb.size}")
    pair = np.stack([ca, cb])
    sq = np.einsum("ij,ij->i", pair, pair)
    _check_in_ball(sq)
    return float(_hyperbolic_block(pair[:1], pair[1:], sq[:1], sq[1:])[0, 0])


def euclidean_distance(a, b):
    ca, cb = _coords(a), _coords(b)
    if ca.shape != cb.shape:
        raise InvalidInputError(f"dimension mismatch: {ca.size} vs {cb.size}")
    return float(_euclidean_block(ca[None, :], cb[None, :])[0, 0])


def pairwise_distances(points, metric="hyperbolic", threads=None):
    """Full symmetric N x N distance matrix with an exactly zero diagonal.

    Rows are computed in independent blocks; ``threads`` > 1 spreads the
    blocks over a thread pool. Every entry is produced by the same kernel
    regardless of schedule, so the result does not depend on ``threads``.

    ``points`` may be a :class:`PoincarePointSet` or an (N, d) array. The
    euclidean metric accepts any finite coordinates.
    """
    x = points.points if isinstance(points, PoincarePointSet) else _as_finite_matrix(points, "points")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points for pairwise distances, got {n}")
    sq = np.einsum("ij,ij->i", x, x)
    if metric == "hyperbolic":
        _check_in_ball(sq)
        kernel = _hyperbolic_block
    elif metric == "euclidean":
        kernel = _euclidean_block
    else:
        raise InvalidInputError(f"unknown metric {metric!r}")

    out = np.empty((n, n))

    def fill(start):
        stop = min(start + _ROW_BLOCK, n)
        out[start:stop] = kernel(x[start:stop], x, sq[start:stop], sq)

    starts = range(0, n, _ROW_BLOCK)
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    np.fill_diagonal(out, 0.0)
    return out
