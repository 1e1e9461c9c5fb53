"""Slow, obviously-correct reference implementations used by the tests."""
from fractions import Fraction
from itertools import combinations

import numpy as np


def loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def loop_frobenius(m):
    s = 0.0
    for v in np.asarray(m).ravel():
        s += v * v
    return s ** 0.5


def loop_mae(a, b):
    s = 0.0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        s += abs(x - y)
    return s / np.size(a)


def loop_strength_mae(a, b):
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        sa = sum(a[i, j] for j in range(n))
        sb = sum(b[i, j] for j in range(n))
        total += abs(sa - sb)
    return total / n


def edges(a):
    n = a.shape[0]
    return {(i, j) for i in range(n) for j in range(n) if i != j and (a[i, j] != 0 or a[j, i] != 0)}


def triangle_clustering(a):
    """Local clustering as Fractions by enumerating node triples."""
    n = a.shape[0]
    e = edges(a)
    out = []
    for i in range(n):
        nb = [j for j in range(n) if (i, j) in e]
        d = len(nb)
        if d < 2:
            out.append(Fraction(0))
            continue
        tri = sum(1 for u, v in combinations(nb, 2) if (u, v) in e)
        out.append(Fraction(tri, d * (d - 1) // 2))
    return out


def _all_shortest_paths(adj_list, s, t):
    # breadth-first layering, then enumerate every geodesic
    dist = {s: 0}
    frontier = [s]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj_list[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    if t not in dist:
        return []
    paths = []

    def walk(path):
        v = path[-1]
        if v == t:
            paths.append(list(path))
            return
        for w in adj_list[v]:
            if dist.get(w) == dist[v] + 1 and dist[w] <= dist[t]:
                path.append(w)
                walk(path)
                path.pop()

    walk([s])
    return paths


def path_betweenness(a, normalized=True):
    """Betweenness as Fractions from explicit enumeration of all geodesics."""
    n = a.shape[0]
    e = edges(a)
    adj_list = {i: [j for j in range(n) if (i, j) in e] for i in range(n)}
    cb = [Fraction(0)] * n
    for s, t in combinations(range(n), 2):
        paths = _all_shortest_paths(adj_list, s, t)
        if not paths:
            continue
        for i in range(n):
            if i in (s, t):
                continue
            through = sum(1 for p in paths if i in p)
            cb[i] += Fraction(through, len(paths))
    if normalized and n > 2:
        norm = Fraction((n - 1) * (n - 2), 2)
        cb = [c / norm for c in cb]
    return cb


def dense_eigvec_centrality(a):
    w, v = np.linalg.eigh(a)
    x = v[:, np.argmax(w)]
    x = np.abs(x)
    return x / np.linalg.norm(x)


def charpoly_radius(m):
    return float(np.max(np.abs(np.roots(np.poly(m)))))


def random_connected(rng, n, p=0.4, weighted=False):
    a = np.zeros((n, n))
    order = rng.permutation(n)
    for u, v in zip(order[:-1], order[1:]):
        a[u, v] = a[v, u] = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                a[i, j] = a[j, i] = 1.0
    if weighted:
        w = rng.uniform(0.1, 1.0, size=(n, n))
        a = a * np.triu(w, 1)
        a = a + a.T
    return a


def random_graph(rng, n, p=0.4):
    up = np.triu(rng.random((n, n)) < p, 1)
    return (up | up.T).astype(float)


def jitter_offsets(model, rng, scale=0.1):
    """Move zero-initialised biases off 0.

    With zero offsets a dead ReLU row sits exactly on the kink, where the
    analytic gradient (0) and a central difference (half the slope) differ
    by definition rather than by error.
    """
    for name, p in model.named_parameters():
        if name.endswith(("bias", "beta")):
            p.value = rng.normal(0.0, scale, p.shape)
    return model
