"""Independent reference implementations used only by the tests.

Deliberately naive: plain loops and textbook formulas, sharing no code
with the package.
"""

import math

import numpy as np


def mobius_add(x, y):
    xy = float(np.dot(x, y))
    x2 = float(np.dot(x, x))
    y2 = float(np.dot(y, y))
    num = (1 + 2 * xy + y2) * np.asarray(x) + (1 - x2) * np.asarray(y)
    return num / (1 + 2 * xy + x2 * y2)


def poincare_distance_mobius(a, b):
    """d(a, b) = 2 artanh ||(-a) (+) b|| via Möbius addition."""
    return 2.0 * math.atanh(float(np.linalg.norm(mobius_add(-np.asarray(a), b))))


def rng_edges_bruteforce(dist):
    """Edge set of the relative neighborhood graph, straight triple loop."""
    d = [list(map(float, row)) for row in np.asarray(dist)]
    n = len(d)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            ok = True
            for k in range(n):
                if k == i or k == j:
                    continue
                if d[i][j] > max(d[i][k], d[j][k]):
                    ok = False
                    break
            if ok:
                edges.add((i, j))
    return edges


def prim_mst_edges(dist):
    """Edges of one minimum spanning tree of a dense distance matrix (Prim, O(N^2))."""
    d = np.asarray(dist, dtype=float)
    n = d.shape[0]
    in_tree = [False] * n
    best = [math.inf] * n
    parent = [-1] * n
    best[0] = 0.0
    edges = set()
    for _ in range(n):
        v = min((i for i in range(n) if not in_tree[i]), key=lambda i: best[i])
        in_tree[v] = True
        if parent[v] >= 0:
            edges.add((min(v, parent[v]), max(v, parent[v])))
        for u in range(n):
            if not in_tree[u] and d[v, u] < best[u]:
                best[u] = d[v, u]
                parent[u] = v
    return edges


def idw_by_hand(h, p):
    inv = [x ** -p for x in h]
    s = sum(inv)
    return [x / s for x in inv]
