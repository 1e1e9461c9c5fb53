"""Graph classification: conv stack, batch norm, ReLU, mean pool, linear head, softmax.

Mini-batches are stacked block-diagonally so that one forward pass handles
many graphs. Batch-norm statistics are taken over every node in the batch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import block_diag

from .autodiff import Var, clip_min, constant, log, matmul, mean_all, neg, pick, relu, row_softmax
from .errors import ConfigurationError, ContractError
from .graph import Graph, normalize_adjacency
from .layers import GatLayer, GcnLayer, attention_mask, gat_forward, gcn_forward, pool_matrix
from .nn import BatchNorm, Linear, Module
from .reservoir import ReservoirLayer, input_transform, output_transform, reservoir_forward

__all__ = [
    "LAYER_KINDS",
    "ClassifierConfig",
    "GraphBatch",
    "GraphClassifier",
    "collate",
    "classify_forward",
    "nll_loss",
    "predict",
    "accuracy",
]

LAYER_KINDS = ("rgc", "trgc", "gcn", "gat")
PROB_FLOOR = 1e-12


@dataclass
class ClassifierConfig:
    kind: str = "rgc"
    n_features: int = 7
    n_classes: int = 2
    hidden: int = 64
    n_res: int | None = None  # reservoir units per layer; defaults to hidden
    n_layers: int = 1
    k: int = 1
    alpha: float = 0.8
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GraphBatch:
    """Block-diagonal stack of graphs, ready for one forward pass."""

    a_norm: np.ndarray
    mask: np.ndarray | None
    features: np.ndarray
    pool: np.ndarray
    labels: np.ndarray | None
    sizes: tuple

    def __len__(self):
        return len(self.sizes)


def collate(graphs, with_mask: bool = False) -> GraphBatch:
    graphs = list(graphs)
    if not graphs:
        raise ContractError("cannot collate an empty batch")
    a_norm = block_diag(*[normalize_adjacency(g.adjacency) for g in graphs])
    mask = block_diag(*[attention_mask(g.adjacency) for g in graphs]).astype(bool) if with_mask else None
    widths = {g.n_features for g in graphs}
    if len(widths) != 1:
        raise ConfigurationError(f"graphs in a batch have feature widths {sorted(widths)}")
    x = np.vstack([g.features for g in graphs])
    labels = None
    if all(g.label is not None for g in graphs):
        labels = np.array([int(g.label) for g in graphs])
    sizes = tuple(g.n_nodes for g in graphs)
    return GraphBatch(a_norm, mask, x, pool_matrix(sizes), labels, sizes)


class GraphClassifier(Module):
    """Classifier over one layer kind: ``rgc``, ``trgc``, ``gcn`` or ``gat``.

    All hidden widths equal ``hidden``. For reservoir kinds the first layer
    carries the fixed input map and every layer has ``hidden`` reservoir
    units; ``trgc`` trains the input and reservoir weights too.
    """

    def __init__(self, cfg: ClassifierConfig | None = None, **kwargs):
        cfg = cfg or ClassifierConfig(**kwargs)
        if cfg.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {cfg.kind!r}; expected one of {LAYER_KINDS}")
        if not 1 <= cfg.n_layers:
            raise ConfigurationError("need at least one conv layer")
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        h = cfg.hidden
        n_res = cfg.n_res or h
        layers = []
        for i in range(cfg.n_layers):
            d_in = cfg.n_features if i == 0 else h
            sub_seed = int(rng.integers(2**63))
            if cfg.kind in ("rgc", "trgc"):
                # later layers read the previous layer's output directly
                layers.append(ReservoirLayer(
                    n_res if i == 0 else h, h, n_in=d_in if i == 0 else None, alpha=cfg.alpha, k=cfg.k,
                    trainable=cfg.kind == "trgc", seed=sub_seed,
                ))
            elif cfg.kind == "gcn":
                layers.append(GcnLayer(d_in, h, sub_seed))
            else:
                layers.append(GatLayer(d_in, h, sub_seed))
        self.conv = layers
        self.norm = BatchNorm(h)
        self.head = Linear(h, cfg.n_classes, np.random.default_rng(int(rng.integers(2**63))))

    @property
    def kind(self) -> str:
        return self.cfg.kind

    def embed(self, batch: GraphBatch) -> Var:
        """Node embeddings after the conv stack."""
        if batch.features.shape[1] != self.cfg.n_features:
            raise ConfigurationError(
                f"model expects {self.cfg.n_features} node features, got {batch.features.shape[1]}"
            )
        h = constant(batch.features)
        if self.kind in ("rgc", "trgc"):
            h = input_transform(self.conv[0], h)
            for layer in self.conv:
                h = output_transform(layer, reservoir_forward(layer, batch.a_norm, h))
        elif self.kind == "gcn":
            for layer in self.conv:
                h = gcn_forward(layer, batch.a_norm, h)
        else:
            mask = batch.mask if batch.mask is not None else batch.a_norm != 0
            for i, layer in enumerate(self.conv):
                h = gat_forward(layer, mask, h)
                if i < len(self.conv) - 1:
                    h = relu(h)
        return h

    def logits(self, batch: GraphBatch) -> Var:
        h = relu(self.norm(self.embed(batch)))
        return self.head(matmul(batch.pool, h))

    def __call__(self, batch: GraphBatch) -> Var:
        return row_softmax(self.logits(batch))

    def batch(self, graphs) -> GraphBatch:
        return collate(graphs, with_mask=self.kind == "gat")


def _as_batch(model: GraphClassifier, g) -> GraphBatch:
    if isinstance(g, GraphBatch):
        return g
    if isinstance(g, Graph):
        g = [g]
    return model.batch(g)


def classify_forward(model: GraphClassifier, g) -> np.ndarray:
    """Class probabilities; a 1-D vector for one graph, (B, C) otherwise.

    Runs in whatever mode the model is in; use ``model.eval()`` for
    inference with frozen batch-norm statistics.
    """
    probs = model(_as_batch(model, g)).value
    return probs[0] if isinstance(g, Graph) else probs


def nll_loss(probs, labels) -> Var:
    """Mean of ``-log p[label]`` with probabilities floored at 1e-12."""
    probs = constant(probs)
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    b, c = probs.shape
    if labels.shape != (b,):
        raise ContractError(f"{labels.shape[0]} labels for {b} probability rows")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ContractError(f"label out of range for {c} classes: {labels}")
    picked = pick(probs, np.arange(b), labels)
    return neg(mean_all(log(clip_min(picked, PROB_FLOOR))))


def predict(model: GraphClassifier, g) -> int | np.ndarray:
    """Argmax class; ties go to the lowest class index."""
    probs = classify_forward(model, g)
    return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)


def accuracy(model: GraphClassifier, graphs, batch_size: int = 256) -> float:
    graphs = list(graphs)
    hits = 0
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start:start + batch_size]
        pred = np.atleast_1d(predict(model, chunk))
        hits += int(np.sum(pred == np.array([g.label for g in chunk])))
    return hits / len(graphs)
