"""Graph samples, symmetric normalisation, node permutations and topology."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .errors import DimensionError, DomainError
from .linalg import as_matrix, make_rng

__all__ = [
    "Graph",
    "Permutation",
    "normalize_adjacency",
    "permute",
    "binarize",
    "degrees",
    "clustering_coefficients",
    "hop_distances",
    "topology_stats",
]


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=np.float64)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class Graph:
    """One sample: adjacency, node features and optional annotations."""

    adjacency: np.ndarray
    features: np.ndarray
    label: int | None = None
    timepoint: int | None = None
    subject: str | int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = as_matrix(self.adjacency, "adjacency")
        if self.features is None:
            x = np.zeros((a.shape[0], 0))
        else:
            x = np.asarray(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2:
                raise DimensionError(f"features must be 2-D, got shape {x.shape}")
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if x.shape[0] != a.shape[0]:
            raise DimensionError(f"{x.shape[0]} feature rows for {a.shape[0]} nodes")
        object.__setattr__(self, "adjacency", _frozen(a))
        object.__setattr__(self, "features", _frozen(x))

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.adjacency - self.adjacency.T), initial=0.0) <= tol)

    def with_features(self, features) -> "Graph":
        return replace(self, features=features)


@dataclass(frozen=True)
class Permutation:
    """Node relabelling: new node ``i`` is old node ``mapping[i]``.

    As a matrix, ``P[i, mapping[i]] = 1`` so that ``P X`` reorders rows.
    """

    mapping: tuple

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise DomainError(f"{self.mapping!r} is not a bijection on 0..{len(m) - 1}")
        object.__setattr__(self, "mapping", m)

    def __len__(self):
        return len(self.mapping)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.mapping, dtype=int)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def random(cls, n: int, rng) -> "Permutation":
        return cls(tuple(make_rng(rng).permutation(n)))

    def matrix(self) -> np.ndarray:
        n = len(self)
        p = np.zeros((n, n))
        p[np.arange(n), self.index] = 1.0
        return p

    def apply_rows(self, m) -> np.ndarray:
        """``P M`` without forming ``P``."""
        return np.asarray(m)[self.index]

    def compose(self, other: "Permutation") -> "Permutation":
        """Permutation equal to applying ``other`` first, then ``self``."""
        return Permutation(tuple(other.index[self.index]))


def normalize_adjacency(a, add_self_loops: bool = False) -> np.ndarray:
    """``D^-1/2 A D^-1/2`` with ``D`` the diagonal of row sums.

    Rows and columns of isolated nodes come out as zeros.
    """
    a = as_matrix(a, "adjacency")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"adjacency must be square, got {a.shape}")
    if np.any(a < 0):
        raise DomainError("adjacency has negative entries")
    if add_self_loops:
        a = a + np.eye(a.shape[0])
    deg = a.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def permute(g: Graph, p: Permutation) -> Graph:
    """Relabel nodes: adjacency becomes ``P A P^T``, features ``P X``."""
    if len(p) != g.n_nodes:
        raise DimensionError(f"permutation of length {len(p)} for {g.n_nodes} nodes")
    idx = p.index
    return replace(g, adjacency=g.adjacency[np.ix_(idx, idx)], features=g.features[idx])


def binarize(a, threshold: float = 0.0) -> np.ndarray:
    """Boolean edge indicator ``|a_ij| > threshold`` with self-loops dropped."""
    a = as_matrix(a, "adjacency")
    b = np.abs(a) > threshold
    np.fill_diagonal(b, False)
    return b


def degrees(a, threshold: float = 0.0) -> np.ndarray:
    return binarize(a, threshold).sum(axis=1)


def clustering_coefficients(a, threshold: float = 0.0) -> np.ndarray:
    """Local clustering of the binarised, symmetrised graph.

    Nodes of degree < 2 get 0.
    """
    b = binarize(a, threshold)
    b = (b | b.T).astype(np.float64)
    deg = b.sum(axis=1)
    triangles = np.einsum("ij,jk,ki->i", b, b, b) / 2.0
    possible = deg * (deg - 1) / 2.0
    out = np.zeros_like(deg)
    ok = possible > 0
    out[ok] = triangles[ok] / possible[ok]
    return out


def hop_distances(a, threshold: float = 0.0) -> np.ndarray:
    """All-pairs BFS hop counts on the binarised graph; ``inf`` if unreachable."""
    b = binarize(a, threshold)
    return csgraph.shortest_path(csr_matrix(b | b.T), method="D", unweighted=True)


def topology_stats(g, threshold: float = 0.0) -> dict:
    """Degree, clustering, path length, diameter and density of one graph.

    Path statistics are taken over the largest connected component.
    Accepts a :class:`Graph` or an adjacency matrix.
    """
    a = g.adjacency if isinstance(g, Graph) else as_matrix(g)
    n = a.shape[0]
    if n == 0:
        raise DomainError("topology of an empty graph")
    b = binarize(a, threshold)
    b = b | b.T
    deg = b.sum(axis=1)
    n_edges = int(b.sum()) // 2
    _, comp = csgraph.connected_components(csr_matrix(b), directed=False)
    sizes = np.bincount(comp)
    members = np.flatnonzero(comp == np.argmax(sizes))
    if members.size > 1:
        sub = b[np.ix_(members, members)]
        dist = csgraph.shortest_path(csr_matrix(sub), unweighted=True)
        off = dist[~np.eye(members.size, dtype=bool)]
        avg_path = float(off.mean())
        diameter = float(off.max())
    else:
        avg_path = 0.0
        diameter = 0.0
    return {
        "avg_degree": float(deg.mean()),
        "avg_clustering": float(clustering_coefficients(b).mean()),
        "avg_path_length": avg_path,
        "diameter": diameter,
        "density": 2.0 * n_edges / (n * (n - 1)) if n > 1 else 0.0,
    }
