"""Measures comparing a ground-truth adjacency with a predicted one.

Path-based measures (clustering, betweenness) use the binarised graph,
where an edge exists iff ``|w| > threshold``. Eigenvector centrality uses
the weighted matrix.
"""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DimensionError, DomainError, NumericError
from .graph import binarize, clustering_coefficients
from .linalg import as_matrix

__all__ = [
    "EvalReport",
    "mae",
    "frobenius_distance",
    "node_strength",
    "mae_node_strength",
    "mae_clustering",
    "betweenness_centrality",
    "mae_betweenness",
    "eigenvector_centrality",
    "mae_eigenvector",
    "evaluate",
    "mean_report",
    "write_reports",
]


def _pair(a, b, square: bool = False):
    a = as_matrix(a, "truth")
    b = as_matrix(b, "prediction")
    if a.shape != b.shape:
        raise DimensionError(f"shapes differ: {a.shape} vs {b.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"square matrices required, got {a.shape}")
    return a, b


def mae(a, a_hat) -> float:
    a, a_hat = _pair(a, a_hat)
    return float(np.mean(np.abs(a - a_hat)))


def frobenius_distance(a, a_hat) -> float:
    a, a_hat = _pair(a, a_hat)
    return float(np.linalg.norm(a - a_hat))


def node_strength(a) -> np.ndarray:
    return as_matrix(a).sum(axis=1)


def mae_node_strength(a, a_hat) -> float:
    a, a_hat = _pair(a, a_hat, square=True)
    return float(np.mean(np.abs(node_strength(a) - node_strength(a_hat))))


def mae_clustering(a, a_hat, threshold: float = 0.0) -> float:
    a, a_hat = _pair(a, a_hat, square=True)
    return float(np.mean(np.abs(clustering_coefficients(a, threshold) - clustering_coefficients(a_hat, threshold))))


def betweenness_centrality(a, normalized: bool = True, threshold: float = 0.0) -> np.ndarray:
    """Exact betweenness over unordered pairs (Brandes' accumulation).

    Normalised values divide by ``(n-1)(n-2)/2``. Unreachable pairs add
    nothing.
    """
    b = binarize(a, threshold)
    b = b | b.T
    n = b.shape[0]
    nbrs = [np.flatnonzero(row) for row in b]
    cb = np.zeros(n)
    for s in range(n):
        order = []
        preds = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in nbrs[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    cb /= 2.0  # each unordered pair was counted from both ends
    if normalized and n > 2:
        cb /= (n - 1) * (n - 2) / 2.0
    return cb


def mae_betweenness(a, a_hat, normalized: bool = True, threshold: float = 0.0) -> float:
    a, a_hat = _pair(a, a_hat, square=True)
    diff = betweenness_centrality(a, normalized, threshold) - betweenness_centrality(a_hat, normalized, threshold)
    return float(np.mean(np.abs(diff)))


def eigenvector_centrality(a, tol: float = 1e-10, max_iter: int = 10000) -> np.ndarray:
    """Dominant eigenvector of the weighted adjacency, L2-normalised, nonnegative.

    Power iteration runs on ``A + s I`` with ``s`` the largest absolute row
    sum, which moves the whole spectrum of a symmetric ``A`` to ``[0, 2s]``
    so the dominant eigenvalue is the largest algebraic one. An all-zero
    matrix gives all-zero centrality.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"square matrix required, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise DomainError("eigenvector centrality needs a symmetric matrix")
    shift = float(np.max(np.abs(a).sum(axis=1), initial=0.0))
    if shift == 0.0:
        return np.zeros(n)
    m = a + shift * np.eye(n)
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        y = m @ x
        y /= np.linalg.norm(y)
        done = np.max(np.abs(y - x)) < tol
        x = y
        if done:
            break
    else:
        raise NumericError(f"eigenvector centrality did not converge in {max_iter} iterations", partial=np.abs(x))
    if x.sum() < 0:
        x = -x
    return np.abs(x)


def mae_eigenvector(a, a_hat, tol: float = 1e-10, max_iter: int = 10000) -> float:
    a, a_hat = _pair(a, a_hat, square=True)
    return float(np.mean(np.abs(eigenvector_centrality(a, tol, max_iter) - eigenvector_centrality(a_hat, tol, max_iter))))


@dataclass
class EvalReport:
    mae: float
    frobenius_distance: float
    mae_node_strength: float
    mae_clustering: float
    mae_betweenness: float
    mae_eigenvector: float
    betweenness_normalized: bool = True

    METRICS = (
        "mae",
        "frobenius_distance",
        "mae_node_strength",
        "mae_clustering",
        "mae_betweenness",
        "mae_eigenvector",
    )

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in self.METRICS)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def header(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow([repr(v) if isinstance(v, float) else v for v in asdict(self).values()])
        return buf.getvalue()


def evaluate(a, a_hat, threshold: float = 0.0, normalized: bool = True) -> EvalReport:
    """All six measures for one (truth, prediction) pair."""
    return EvalReport(
        mae(a, a_hat),
        frobenius_distance(a, a_hat),
        mae_node_strength(a, a_hat),
        mae_clustering(a, a_hat, threshold),
        mae_betweenness(a, a_hat, normalized, threshold),
        mae_eigenvector(a, a_hat),
        normalized,
    )


def mean_report(reports) -> EvalReport:
    reports = list(reports)
    if not reports:
        raise DomainError("no reports to average")
    conv = {r.betweenness_normalized for r in reports}
    if len(conv) != 1:
        raise DomainError("cannot average reports with different betweenness conventions")
    means = np.mean([r.values() for r in reports], axis=0)
    return EvalReport(*(float(v) for v in means), conv.pop())


def write_reports(path, rows) -> None:
    """Write ``(label, EvalReport)`` pairs as a CSV table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model"] + EvalReport.header())
        for label, r in rows:
            w.writerow([label] + list(asdict(r).values()))
