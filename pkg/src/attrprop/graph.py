"""Relative neighborhood graphs (and the complete-graph ablation) over a distance matrix."""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, ParseError


class Metric(str, Enum):
    HYPERBOLIC = "hyperbolic"
    EUCLIDEAN = "euclidean"


class Topology(str, Enum):
    RELATIVE_NEIGHBORHOOD = "relative_neighborhood"
    COMPLETE = "complete"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if value == "rng":
            return cls.RELATIVE_NEIGHBORHOOD
        return cls(value)


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """Undirected graph on ``vertex_count`` vertices.

    ``edges`` is an (E, 2) integer array with ``i < j`` in every row, sorted
    lexicographically; ``lengths[e]`` is the distance along edge ``e``.
    Per-vertex views are kept in CSR form (``indptr``/``indices`` with the
    matching ``neighbor_lengths``), neighbors sorted by index.
    """

    vertex_count: int
    edges: np.ndarray
    lengths: np.ndarray
    metric: str = Metric.HYPERBOLIC.value
    topology: str = Topology.RELATIVE_NEIGHBORHOOD.value

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(self.lengths, dtype=np.float64).reshape(-1)
        n = int(self.vertex_count)
        if edges.shape[0] != lengths.shape[0]:
            raise InvalidInputError("edges and lengths differ in length")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise InvalidInputError("edge endpoint out of range")
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise InvalidInputError("edges must be stored as (i, j) with i < j; self-loops are not allowed")
        if np.any(lengths < 0) or not np.all(np.isfinite(lengths)):
            raise InvalidInputError("edge lengths must be finite and nonnegative")
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges, lengths = edges[order], lengths[order]
        if edges.shape[0] > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
            raise InvalidInputError("duplicate edge")

        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        both = np.concatenate([lengths, lengths])
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        for name, value in (
            ("vertex_count", n),
            ("edges", edges),
            ("lengths", lengths),
            ("metric", Metric(self.metric).value),
            ("topology", Topology.parse(self.topology).value),
            ("indptr", indptr),
            ("indices", dst[order]),
            ("neighbor_lengths", both[order]),
        ):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def edge_count(self):
        return self.edges.shape[0]

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def neighbor_distances(self, v):
        return self.neighbor_lengths[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self):
        return [self.neighbors(v) for v in range(self.vertex_count)]

    def degrees(self):
        return np.diff(self.indptr)

    def edge_set(self):
        return {(int(i), int(j)) for i, j in self.edges}

    def edge_length(self, i, j):
        i, j = min(i, j), max(i, j)
        nbrs = self.neighbors(i)
        k = np.searchsorted(nbrs, j)
        if k == nbrs.size or nbrs[k] != j:
            raise KeyError((i, j))
        return float(self.neighbor_distances(i)[k])

    def same_edges(self, other):
        return (
            self.vertex_count == other.vertex_count
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.lengths, other.lengths)
        )


def _validate_distances(distances):
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidInputError(f"distance matrix must be square, got shape {d.shape}")
    n = d.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 vertices, got {n}")
    if not np.all(np.isfinite(d)):
        raise InvalidInputError("distance matrix has non-finite entries")
    if np.any(d < 0):
        raise InvalidInputError("distance matrix has negative entries")
    if np.any(np.diag(d) != 0):
        raise InvalidInputError("distance matrix must have a zero diagonal")
    if not np.array_equal(d, d.T):
        if not np.allclose(d, d.T, rtol=1e-12, atol=0.0):
            raise InvalidInputError("distance matrix is not symmetric")
        # mirror the upper triangle so both endpoints see identical lengths
        upper = np.triu(d)
        d = upper + upper.T
    return d


def _rng_rows(d, rows):
    """Edges (i, j), j > i, for the given i values.

    (i, j) survives iff d[i, j] <= max(d[i, k], d[j, k]) for every other k.
    Including k = i or k = j in the minimum is harmless: both give exactly
    d[i, j] on a symmetric zero-diagonal matrix.
    """
    out = []
    for i in rows:
        block = np.maximum(d[i + 1:], d[i])
        keep = d[i, i + 1:] <= block.min(axis=1)
        js = np.flatnonzero(keep) + i + 1
        out.append(np.column_stack([np.full(js.size, i, dtype=np.int64), js]))
    return out


def build_graph(distances, topology=Topology.RELATIVE_NEIGHBORHOOD, metric=Metric.HYPERBOLIC, threads=None):
    """Build a neighborhood graph from a symmetric distance matrix.

    For the relative neighborhood topology, vertices i and j are joined when
    no third vertex is strictly closer to both of them than they are to
    each other; ties keep the edge. Direct O(N^3) evaluation. With
    ``threads`` > 1 the candidate rows are split across a thread pool; the
    output is identical either way.

    ``metric`` only labels the graph; it does not change the construction.
    """
    d = _validate_distances(distances)
    n = d.shape[0]
    topology = Topology.parse(topology)
    if topology is Topology.COMPLETE:
        iu, ju = np.triu_indices(n, k=1)
        edges = np.column_stack([iu, ju])
    else:
        if threads is not None and threads > 1:
            chunks = np.array_split(np.arange(n - 1), threads * 4)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = [p for res in pool.map(lambda r: _rng_rows(d, r), chunks) for p in res]
        else:
            parts = _rng_rows(d, range(n - 1))
        edges = np.concatenate(parts) if parts else np.empty((0, 2), dtype=np.int64)
    return NeighborhoodGraph(n, edges, d[edges[:, 0], edges[:, 1]], Metric(metric).value, topology.value)


def graph_stats(graph):
    """Edge count, degree summary and connectivity (breadth-first traversal)."""
    deg = graph.degrees()
    n = graph.vertex_count
    seen = np.zeros(n, dtype=bool)
    if n:
        seen[0] = True
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for u in graph.neighbors(v):
                if not seen[u]:
                    seen[u] = True
                    queue.append(u)
    return {
        "edge_count": int(graph.edge_count),
        "min_degree": int(deg.min()) if n else 0,
        "max_degree": int(deg.max()) if n else 0,
        "mean_degree": float(deg.mean()) if n else 0.0,
        "connected": bool(seen.all()),
    }


def write_graph(graph, path):
    """Edge-list text: ``HNG <N> <E> <metric> <topology>`` then ``i j length`` per line."""
    lines = [f"HNG {graph.vertex_count} {graph.edge_count} {graph.metric} {graph.topology}"]
    lines.extend(f"{i} {j} {h:.17g}" for (i, j), h in zip(graph.edges.tolist(), graph.lengths.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read graph file ({exc.strerror})", path) from exc
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty graph file", path, 1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "HNG":
        raise ParseError("expected header 'HNG <N> <edge_count> <metric> <topology>'", path, 1)
    try:
        n, e = int(head[1]), int(head[2])
        metric, topology = Metric(head[3]), Topology(head[4])
    except ValueError as exc:
        raise ParseError(f"bad header: {exc}", path, 1) from exc
    body = [(k + 2, ln) for k, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != e:
        raise ParseError(f"header declares {e} edges, found {len(body)}", path)
    edges = np.empty((e, 2), dtype=np.int64)
    lengths = np.empty(e)
    for row, (lineno, ln) in enumerate(body):
        parts = ln.split()
        try:
            if len(parts) != 3:
                raise ValueError("expected 'i j length'")
            edges[row] = int(parts[0]), int(parts[1])
            lengths[row] = float(parts[2])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from exc
    try:
        return NeighborhoodGraph(n, edges, lengths, metric.value, topology.value)
    except InvalidInputError as exc:
        raise ParseError(str(exc), path) from exc
