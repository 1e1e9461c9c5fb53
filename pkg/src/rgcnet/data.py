"""Datasets: TU graph-classification files, connectome CSV trees, a longitudinal simulator.

A connectome has no intrinsic node features, so :func:`make_node_features`
derives eight per-node descriptors from the weighted adjacency.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, IngestionError, NumericError, ParameterError
from .graph import Graph, binarize, clustering_coefficients, hop_distances, topology_stats
from .metrics import betweenness_centrality, eigenvector_centrality

log = logging.getLogger("rgcnet.data")

__all__ = [
    "Dataset",
    "SimulatorParams",
    "load_tu_dataset",
    "write_tu_dataset",
    "load_connectome_dataset",
    "write_connectome_dataset",
    "make_node_features",
    "with_node_features",
    "simulate_longitudinal",
    "tanh_noise",
    "transition_pairs",
    "timepoint_classification",
    "describe_dataset",
    "format_description",
    "write_histograms",
]

N_CONNECTOME_FEATURES = 8


@dataclass
class Dataset:
    graphs: list
    kind: str  # "classification" or "longitudinal"
    name: str = ""
    n_classes: int | None = None
    n_timepoints: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("classification", "longitudinal"):
            raise ParameterError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "classification":
            labels = [g.label for g in self.graphs]
            if self.n_classes is None:
                self.n_classes = len(set(labels))
            if any(lbl is None or not 0 <= lbl < self.n_classes for lbl in labels):
                raise DomainError(f"labels must lie in [0, {self.n_classes})")
        else:
            groups = self.by_subject()
            counts = {len(v) for v in groups.values()}
            if self.n_timepoints is None and counts:
                self.n_timepoints = counts.pop() if len(counts) == 1 else None
            for s, gs in groups.items():
                if len(gs) != self.n_timepoints:
                    raise DomainError(f"subject {s} has {len(gs)} timepoints, expected {self.n_timepoints}")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs])

    def subjects(self) -> list:
        seen = {}
        for g in self.graphs:
            seen.setdefault(g.subject, None)
        return list(seen)

    def by_subject(self) -> dict:
        out = {}
        for g in self.graphs:
            out.setdefault(g.subject, []).append(g)
        for gs in out.values():
            gs.sort(key=lambda g: g.timepoint)
        return out


# ---------------------------------------------------------------------------
# TU format


def _read_ints(path: Path, cols: int) -> np.ndarray:
    if not path.is_file():
        raise IngestionError(f"missing required file {path.name} in {path.parent}")
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from None
    if arr.size and arr.shape[1] != cols:
        raise IngestionError(f"{path.name}: expected {cols} column(s), got {arr.shape[1]}")
    return arr.reshape(-1, cols)


def _tu_prefix(root: Path) -> str:
    hits = sorted(root.glob("*_A.txt"))
    if not hits:
        raise IngestionError(f"missing required file {root.name}_A.txt in {root}")
    return hits[0].name[: -len("_A.txt")]


def load_tu_dataset(path) -> Dataset:
    """Read a TU-format dataset directory.

    Edges are merged into an undirected 0/1 adjacency. Node labels, when
    present, become one-hot features over the sorted label alphabet;
    otherwise every node gets the single feature 1. Graph labels are
    remapped to ``0..C-1`` in sorted order of the original values.
    """
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"dataset directory {root} does not exist")
    ds = _tu_prefix(root)
    edges = _read_ints(root / f"{ds}_A.txt", 2)
    indicator = _read_ints(root / f"{ds}_graph_indicator.txt", 1)[:, 0]
    raw_labels = _read_ints(root / f"{ds}_graph_labels.txt", 1)[:, 0]
    node_label_file = root / f"{ds}_node_labels.txt"
    node_labels = _read_ints(node_label_file, 1)[:, 0] if node_label_file.is_file() else None

    n_graphs = len(raw_labels)
    ids = np.unique(indicator)
    if not np.array_equal(ids, np.arange(1, n_graphs + 1)) or np.any(np.diff(indicator) < 0):
        raise IngestionError(f"{ds}_graph_indicator.txt: graph ids are not contiguous 1..{n_graphs}")
    if node_labels is not None and len(node_labels) != len(indicator):
        raise IngestionError(f"{ds}_node_labels.txt has {len(node_labels)} rows for {len(indicator)} nodes")
    if edges.size and (edges.min() < 1 or edges.max() > len(indicator)):
        raise IngestionError(f"{ds}_A.txt references nodes outside 1..{len(indicator)}")

    values = np.unique(raw_labels)
    label_index = {int(v): i for i, v in enumerate(values)}
    alphabet = np.unique(node_labels) if node_labels is not None else None

    starts = np.searchsorted(indicator, np.arange(1, n_graphs + 1))
    stops = np.append(starts[1:], len(indicator))
    rows, cols = edges[:, 0] - 1, edges[:, 1] - 1
    owner = indicator[rows] if edges.size else np.array([], dtype=int)
    if edges.size and np.any(owner != indicator[cols]):
        raise IngestionError(f"{ds}_A.txt has an edge between different graphs")

    order = np.argsort(owner, kind="stable")
    rows, cols, owner = rows[order], cols[order], owner[order]
    bounds = np.searchsorted(owner, np.arange(1, n_graphs + 2))
    graphs = []
    for gi in range(n_graphs):
        lo, hi = starts[gi], stops[gi]
        n = hi - lo
        a = np.zeros((n, n))
        r = rows[bounds[gi]:bounds[gi + 1]] - lo
        c = cols[bounds[gi]:bounds[gi + 1]] - lo
        a[r, c] = 1.0
        a[c, r] = 1.0
        meta = {"raw_label": int(raw_labels[gi])}
        if node_labels is None:
            x = np.ones((n, 1))
        else:
            nl = node_labels[lo:hi]
            x = (nl[:, None] == alphabet[None, :]).astype(np.float64)
            meta["node_labels"] = nl.tolist()
        graphs.append(Graph(a, x, label=label_index[int(raw_labels[gi])], subject=gi, meta=meta))
    d = Dataset(graphs, "classification", name=ds, n_classes=len(values))
    d.meta["label_values"] = values.tolist()
    if alphabet is not None:
        d.meta["node_label_values"] = alphabet.tolist()
    return d


def write_tu_dataset(d: Dataset, path, name: str | None = None) -> Path:
    """Write ``d`` in TU format; each undirected edge is listed in both directions."""
    name = name or d.name or "DS"
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    values = d.meta.get("label_values")
    offset = 0
    a_lines, ind_lines, lbl_lines, nl_lines = [], [], [], []
    for gi, g in enumerate(d.graphs, start=1):
        r, c = np.nonzero(g.adjacency)
        a_lines += [f"{i + 1 + offset}, {j + 1 + offset}" for i, j in zip(r, c)]
        ind_lines += [str(gi)] * g.n_nodes
        raw = g.meta.get("raw_label", values[g.label] if values else g.label)
        lbl_lines.append(str(raw))
        if "node_labels" in g.meta:
            nl_lines += [str(v) for v in g.meta["node_labels"]]
        offset += g.n_nodes
    (root / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (root / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (root / f"{name}_graph_labels.txt").write_text("\n".join(lbl_lines) + "\n")
    if nl_lines:
        (root / f"{name}_node_labels.txt").write_text("\n".join(nl_lines) + "\n")
    return root


# ---------------------------------------------------------------------------
# node features for connectomes


def _znorm(col: np.ndarray) -> np.ndarray:
    sd = col.std()
    if sd < 1e-12:
        return np.zeros_like(col)
    return (col - col.mean()) / sd


def make_node_features(g, dim: int = N_CONNECTOME_FEATURES, normalize: bool = True) -> np.ndarray:
    """Eight structural descriptors per node.

    Columns: weighted strength, binary degree, clustering coefficient,
    normalised betweenness, eigenvector centrality, closeness, mean
    neighbour strength, and a constant 1. Every column except the constant
    is z-normalised across nodes (a constant column becomes 0).
    """
    if dim != N_CONNECTOME_FEATURES:
        raise ParameterError(f"the connectome feature set has {N_CONNECTOME_FEATURES} columns, not {dim}")
    a = g.adjacency if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    n = a.shape[0]
    b = binarize(a)
    b = b | b.T
    strength = a.sum(axis=1)
    degree = b.sum(axis=1).astype(np.float64)
    try:
        eig = eigenvector_centrality(0.5 * (a + a.T))
    except NumericError as exc:
        eig = exc.partial
    dist = hop_distances(b)
    closeness = np.zeros(n)
    for i in range(n):
        reach = np.isfinite(dist[i]) & (np.arange(n) != i)
        if reach.any():
            closeness[i] = reach.sum() / dist[i, reach].sum()
    nbr_strength = np.where(degree > 0, (b @ strength) / np.maximum(degree, 1), 0.0)
    cols = [
        strength,
        degree,
        clustering_coefficients(b),
        betweenness_centrality(b),
        eig,
        closeness,
        nbr_strength,
    ]
    if normalize:
        cols = [_znorm(c) for c in cols]
    return np.column_stack(cols + [np.ones(n)])


def with_node_features(graphs) -> list:
    return [g.with_features(make_node_features(g)) for g in graphs]


# ---------------------------------------------------------------------------
# connectome CSV trees

_CONNECTOME_NAME = re.compile(r"subject_(.+)_t(\d+)\.csv$")


def load_connectome_dataset(path, features: bool = True) -> Dataset:
    """Read ``subject_{s}_t{t}.csv`` matrices into a longitudinal dataset.

    Each matrix is replaced by its symmetric part. A subject with any NaN
    in any of its files is dropped with a warning.
    """
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"dataset directory {root} does not exist")
    found = {}
    for f in sorted(root.iterdir()):
        m = _CONNECTOME_NAME.match(f.name)
        if m:
            found.setdefault(m.group(1), {})[int(m.group(2))] = f
    if not found:
        raise IngestionError(f"no subject_*_t*.csv files in {root}")
    n_nodes = None
    graphs = []
    dropped = []
    for subject in sorted(found, key=_natural_key):
        mats = {}
        for t, f in sorted(found[subject].items()):
            try:
                a = np.loadtxt(f, delimiter=",", ndmin=2)
            except ValueError as exc:
                raise IngestionError(f"cannot parse {f}: {exc}") from None
            if a.shape[0] != a.shape[1]:
                raise IngestionError(f"{f.name} is not square: {a.shape}")
            if n_nodes is None:
                n_nodes = a.shape[0]
            elif a.shape[0] != n_nodes:
                raise IngestionError(f"{f.name} has {a.shape[0]} nodes, other files have {n_nodes}")
            mats[t] = a
        if any(np.isnan(a).any() for a in mats.values()):
            log.warning("excluding subject %s: invalid (NaN) connectivity values", subject)
            dropped.append(subject)
            continue
        for t, a in mats.items():
            a = 0.5 * (a + a.T)
            x = make_node_features(a) if features else None
            graphs.append(Graph(a, x, label=t, timepoint=t, subject=subject))
    d = Dataset(graphs, "longitudinal", name=root.name)
    d.meta["excluded_subjects"] = dropped
    return d


def _natural_key(s: str):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", s)]


def write_connectome_dataset(d: Dataset, path) -> list:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for g in d.graphs:
        f = root / f"subject_{g.subject}_t{g.timepoint}.csv"
        np.savetxt(f, g.adjacency, delimiter=",", fmt="%.17g")
        written.append(f)
    return written


# ---------------------------------------------------------------------------
# simulator


def tanh_noise(t: int, n_timepoints: int) -> float:
    return float(np.tanh(t / n_timepoints))


@dataclass
class SimulatorParams:
    """Profile for :func:`simulate_longitudinal`.

    ``mean`` and ``covariance`` describe the upper-triangle edge weights of
    the baseline graph. ``mean`` may be a scalar or a vector of length
    ``n_nodes * (n_nodes - 1) / 2``; ``covariance`` may be a scalar
    (times identity), a diagonal vector or a full matrix.
    """

    n_subjects: int = 100
    n_nodes: int = 35
    n_timepoints: int = 3
    mean: object = 0.5
    covariance: object = 0.01
    delta_w: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_nodes < 2:
            raise ParameterError("need at least one subject and two nodes")
        if self.n_timepoints < 2:
            raise ParameterError("need at least two timepoints")

    @property
    def n_edges(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    def mean_vector(self) -> np.ndarray:
        m = np.asarray(self.mean, dtype=np.float64)
        if m.ndim == 0:
            return np.full(self.n_edges, float(m))
        m = m.ravel()
        if m.size != self.n_edges:
            raise ParameterError(f"mean has {m.size} entries, need {self.n_edges}")
        return m

    def covariance_factor(self) -> np.ndarray:
        """A matrix ``L`` with ``L L^T`` equal to the covariance."""
        c = np.asarray(self.covariance, dtype=np.float64)
        e = self.n_edges
        if c.ndim == 0:
            if c < 0:
                raise ParameterError("covariance must be positive semi-definite")
            return np.sqrt(c) * np.eye(e)
        if c.ndim == 1:
            if c.size != e:
                raise ParameterError(f"covariance diagonal has {c.size} entries, need {e}")
            if np.any(c < 0):
                raise ParameterError("covariance must be positive semi-definite")
            return np.diag(np.sqrt(c))
        if c.shape != (e, e):
            raise ParameterError(f"covariance must be {e}x{e}, got {c.shape}")
        if not np.allclose(c, c.T):
            raise ParameterError("covariance must be symmetric")
        try:
            return np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(c)
            if w.min() < -1e-10 * max(1.0, abs(w.max())):
                raise ParameterError("covariance is not positive semi-definite (Cholesky failed)") from None
            return v * np.sqrt(np.clip(w, 0.0, None))

    def to_profile(self) -> dict:
        out = {
            "n_subjects": self.n_subjects,
            "n_nodes": self.n_nodes,
            "n_timepoints": self.n_timepoints,
            "mean": np.asarray(self.mean).tolist(),
            "delta_w": self.delta_w,
            "seed": self.seed,
        }
        c = np.asarray(self.covariance)
        if c.ndim <= 1:
            out["cov_diag"] = c.tolist()
        else:
            out["covariance"] = c.tolist()
        return out

    @classmethod
    def from_profile(cls, profile: dict, base: Path | None = None) -> "SimulatorParams":
        known = {"n_subjects", "n_nodes", "n_timepoints", "mean", "cov_diag", "cov_file", "covariance", "delta_w", "seed"}
        unknown = set(profile) - known
        if unknown:
            raise ParameterError(f"unknown profile keys: {sorted(unknown)}")
        kw = {k: profile[k] for k in ("n_subjects", "n_nodes", "n_timepoints", "mean", "delta_w", "seed") if k in profile}
        if "cov_file" in profile:
            f = Path(profile["cov_file"])
            if base is not None and not f.is_absolute():
                f = base / f
            kw["covariance"] = np.loadtxt(f, delimiter=",", ndmin=2)
        elif "covariance" in profile:
            kw["covariance"] = np.asarray(profile["covariance"], dtype=np.float64)
        elif "cov_diag" in profile:
            kw["covariance"] = profile["cov_diag"]
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "SimulatorParams":
        path = Path(path)
        return cls.from_profile(json.loads(path.read_text()), base=path.parent)


def simulate_longitudinal(params: SimulatorParams | None = None, features: bool = True) -> Dataset:
    """Baseline graphs from a multivariate normal, then a uniform drift per step.

    For each subject the upper triangle is drawn once, negative weights are
    clamped to 0 and the matrix is mirrored with a zero diagonal. Step
    ``t -> t+1`` adds ``delta_w * tanh((t+1) / n_timepoints)`` to every
    off-diagonal entry.
    """
    p = params or SimulatorParams()
    rng = np.random.default_rng(p.seed)
    mean = p.mean_vector()
    factor = p.covariance_factor()
    n = p.n_nodes
    iu = np.triu_indices(n, 1)
    off = ~np.eye(n, dtype=bool)
    graphs = []
    for s in range(p.n_subjects):
        w = mean + factor @ rng.standard_normal(factor.shape[1])
        clamped = int(np.sum(w < 0))
        w = np.maximum(w, 0.0)
        a = np.zeros((n, n))
        a[iu] = w
        a = a + a.T
        for t in range(p.n_timepoints):
            if t > 0:
                step = p.delta_w * tanh_noise(t, p.n_timepoints)
                a = a.copy()
                a[off] += step
                a[off] = np.maximum(a[off], 0.0)
            x = make_node_features(a) if features else None
            graphs.append(Graph(a, x, label=t, timepoint=t, subject=s, meta={"clamped": clamped}))
    d = Dataset(graphs, "longitudinal", name="simulated", n_timepoints=p.n_timepoints)
    d.meta["profile"] = p.to_profile()
    return d


def transition_pairs(d: Dataset, subjects=None) -> list:
    """``(graph at t, adjacency at t+1)`` for every consecutive pair."""
    groups = d.by_subject()
    keep = groups if subjects is None else {s: groups[s] for s in subjects}
    pairs = []
    for gs in keep.values():
        for g0, g1 in zip(gs[:-1], gs[1:]):
            pairs.append((g0, g1.adjacency))
    return pairs


def timepoint_classification(d: Dataset) -> Dataset:
    """Relabel a longitudinal dataset so that each graph's class is its timepoint."""
    graphs = [Graph(g.adjacency, g.features, label=g.timepoint, timepoint=g.timepoint, subject=g.subject, meta=g.meta)
              for g in d.graphs]
    return Dataset(graphs, "classification", name=f"{d.name}-timepoints", n_classes=d.n_timepoints)


# ---------------------------------------------------------------------------
# description


def _mean_std(values) -> tuple:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def describe_dataset(d: Dataset) -> dict:
    """Average +- std of counts and topology statistics over all graphs.

    Edge counts are given both as directed pairs (nonzero off-diagonal
    entries, the convention of the raw TU files) and as undirected edges.
    """
    directed = []
    for g in d.graphs:
        b = binarize(g.adjacency)
        directed.append(int((b | b.T).sum()))
    stats = [topology_stats(g) for g in d.graphs]
    out = {
        "name": d.name,
        "kind": d.kind,
        "n_graphs": len(d.graphs),
        "n_features": d.graphs[0].n_features if d.graphs else 0,
    }
    if d.kind == "classification":
        out["n_classes"] = d.n_classes
    else:
        out["n_subjects"] = len(d.subjects())
        out["n_timepoints"] = d.n_timepoints
    out["nodes"] = _mean_std([g.n_nodes for g in d.graphs])
    out["edges_directed"] = _mean_std(directed)
    out["edges_undirected"] = _mean_std([e / 2 for e in directed])
    for key in ("avg_degree", "avg_clustering", "avg_path_length", "diameter", "density"):
        out[key] = _mean_std([s[key] for s in stats])
    return out


def format_description(desc: dict) -> str:
    lines = []
    for k, v in desc.items():
        if isinstance(v, tuple):
            lines.append(f"{k:<18} {v[0]:.4f} +- {v[1]:.4f}")
        else:
            lines.append(f"{k:<18} {v}")
    return "\n".join(lines)


def write_histograms(d: Dataset, path, bins: int = 20) -> list:
    """One CSV per timepoint with the distribution of upper-triangle weights."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    by_t = {}
    for g in d.graphs:
        iu = np.triu_indices(g.n_nodes, 1)
        by_t.setdefault(g.timepoint if g.timepoint is not None else 0, []).append(g.adjacency[iu])
    allw = np.concatenate([np.concatenate(v) for v in by_t.values()])
    edges = np.linspace(allw.min(), allw.max() if allw.max() > allw.min() else allw.min() + 1.0, bins + 1)
    written = []
    for t, ws in sorted(by_t.items()):
        counts, _ = np.histogram(np.concatenate(ws), bins=edges)
        f = root / f"histogram_t{t}.csv"
        rows = ["bin_lo,bin_hi,count"] + [f"{lo!r},{hi!r},{c}" for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        f.write_text("\n".join(rows) + "\n")
        written.append(f)
    return written
