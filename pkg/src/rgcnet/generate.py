"""Encoder-decoder model predicting the next-timepoint adjacency of a graph.

Encoder: GAT, batch norm, two reservoir layers, mean pool -> latent ``Z``.
Decoder: a linear map expands ``Z`` into an ``n_nodes x d`` feature
matrix, two reservoir layers run on the identity adjacency, and the
symmetric inner-product readout ``sym(H H^T)`` with zero diagonal gives
the predicted matrix. The ``gcn`` variant swaps every reservoir layer for
a GCN layer; ``trgc`` trains the reservoir weights.

With ``residual=True`` (the default) the readout is added to the input
adjacency, so the decoder models the change ``A_{t+1} - A_t``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import block_diag

from .autodiff import (
    Var,
    abs_,
    block_gram,
    constant,
    hadamard,
    matmul,
    mean_all,
    reshape,
    scale,
    sqrt,
    sub,
    sum_cols,
)
from .errors import ConfigurationError, DimensionError
from .graph import Graph, normalize_adjacency
from .layers import GatLayer, GcnLayer, attention_mask, gat_forward, gcn_forward, pool_matrix
from .nn import BatchNorm, Linear, Module
from .reservoir import ReservoirLayer, output_transform, reservoir_forward

__all__ = [
    "VARIANTS",
    "GeneratorConfig",
    "GeneratorModel",
    "encode",
    "decode",
    "predict_next",
    "composite_loss",
    "batched_composite_loss",
    "identity_baseline",
]

VARIANTS = ("rgc", "trgc", "gcn")


@dataclass
class GeneratorConfig:
    variant: str = "rgc"
    n_nodes: int = 35
    n_features: int = 8
    hidden: int = 32
    latent_dim: int | None = None  # defaults to n_nodes
    decoder_dim: int = 16
    k: int = 1
    alpha: float = 0.8
    residual: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim is None:
            self.latent_dim = self.n_nodes

    def to_dict(self) -> dict:
        return asdict(self)


class _Block(Module):
    """Two chained conv layers of the configured variant."""

    def __init__(self, variant, widths, k, alpha, rng):
        self.variant = variant
        self.layers = []
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            seed = int(rng.integers(2**63))
            if variant == "gcn":
                self.layers.append(GcnLayer(d_in, d_out, seed))
            else:
                self.layers.append(ReservoirLayer(
                    d_in, d_out, alpha=alpha, k=k, trainable=variant == "trgc", seed=seed,
                ))

    def __call__(self, a_norm, h):
        for layer in self.layers:
            if self.variant == "gcn":
                h = gcn_forward(layer, a_norm, h)
            else:
                h = output_transform(layer, reservoir_forward(layer, a_norm, h))
        return h


class GeneratorModel(Module):
    def __init__(self, cfg: GeneratorConfig | None = None, **kwargs):
        cfg = cfg or GeneratorConfig(**kwargs)
        if cfg.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {cfg.variant!r}; expected one of {VARIANTS}")
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        h, n, d = cfg.hidden, cfg.n_nodes, cfg.decoder_dim
        self.gat = GatLayer(cfg.n_features, h, int(rng.integers(2**63)))
        self.norm = BatchNorm(h)
        self.encoder = _Block(cfg.variant, (h, h, cfg.latent_dim), cfg.k, cfg.alpha, rng)
        self.expand = Linear(cfg.latent_dim, n * d, np.random.default_rng(int(rng.integers(2**63))))
        self.decoder = _Block(cfg.variant, (d, d, d), cfg.k, cfg.alpha, rng)

    @property
    def variant(self) -> str:
        return self.cfg.variant

    def encode_batch(self, graphs) -> Var:
        """(B, latent_dim) latent codes for a list of graphs."""
        graphs = list(graphs)
        n = self.cfg.n_nodes
        for g in graphs:
            if g.n_nodes != n:
                raise ConfigurationError(f"model is built for {n} nodes, got a graph with {g.n_nodes}")
            if g.n_features != self.cfg.n_features:
                raise ConfigurationError(f"model expects {self.cfg.n_features} node features, got {g.n_features}")
        a = [g.adjacency for g in graphs]
        a_norm = block_diag(*[normalize_adjacency(m) for m in a])
        mask = block_diag(*[attention_mask(m) for m in a]).astype(bool)
        x = np.vstack([g.features for g in graphs])
        h = self.norm(gat_forward(self.gat, mask, x))
        h = self.encoder(a_norm, h)
        return matmul(pool_matrix([n] * len(graphs)), h)

    def decode_batch(self, z) -> Var:
        """(B * n_nodes, n_nodes) stacked readouts for (B, latent_dim) codes."""
        z = constant(z)
        if z.shape[1] != self.cfg.latent_dim:
            raise DimensionError(f"latent width {z.shape[1]}, model expects {self.cfg.latent_dim}")
        n, d = self.cfg.n_nodes, self.cfg.decoder_dim
        b = z.shape[0]
        h = reshape(self.expand(z), b * n, d)
        h = self.decoder(None, h)  # identity adjacency
        return block_gram(h, n)

    def predict_batch(self, graphs) -> Var:
        graphs = list(graphs)
        out = self.decode_batch(self.encode_batch(graphs))
        if self.cfg.residual:
            out = out + np.vstack([g.adjacency for g in graphs])
        return out

    def __call__(self, g: Graph) -> np.ndarray:
        return predict_next(self, g)


def encode(model: GeneratorModel, g: Graph) -> np.ndarray:
    """Latent vector of length ``latent_dim``."""
    return model.encode_batch([g]).value[0]


def decode(model: GeneratorModel, z) -> np.ndarray:
    """Symmetric, zero-diagonal readout of a latent vector."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return model.decode_batch(z).value


def predict_next(model: GeneratorModel, g: Graph) -> np.ndarray:
    """Predicted adjacency at the next timepoint."""
    return model.predict_batch([g]).value


def identity_baseline(g) -> np.ndarray:
    """Predict that nothing changes."""
    a = g.adjacency if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    return np.array(a, dtype=np.float64)


def composite_loss(a_true, a_pred, lambdas=(1.0, 1.0, 1.0)) -> Var:
    """``l1 * MAE + l2 * mean |strength diff| + l3 * Frobenius distance``."""
    a_true = constant(a_true)
    a_pred = constant(a_pred)
    if a_true.shape != a_pred.shape:
        raise DimensionError(f"composite_loss: shapes {a_true.shape} and {a_pred.shape}")
    if a_true.shape[0] != a_true.shape[1]:
        raise DimensionError(f"composite_loss needs square matrices, got {a_true.shape}")
    return batched_composite_loss(a_true, a_pred, a_true.shape[0], lambdas)


def batched_composite_loss(a_true, a_pred, n_nodes: int, lambdas=(1.0, 1.0, 1.0)) -> Var:
    """Composite loss averaged over vertically stacked (n_nodes, n_nodes) blocks."""
    a_true = constant(a_true)
    a_pred = constant(a_pred)
    if a_true.shape != a_pred.shape:
        raise DimensionError(f"composite_loss: shapes {a_true.shape} and {a_pred.shape}")
    rows, cols = a_true.shape
    if cols != n_nodes or rows % n_nodes:
        raise DimensionError(f"{a_true.shape} is not a stack of {n_nodes}x{n_nodes} blocks")
    b = rows // n_nodes
    l1, l2, l3 = (float(v) for v in lambdas)
    diff = sub(a_pred, a_true)
    total = scale(mean_all(abs_(diff)), l1)
    if l2:
        total = total + scale(mean_all(abs_(sum_cols(diff))), l2)
    if l3:
        group = np.kron(np.eye(b), np.ones((1, n_nodes)))
        per_graph = sqrt(matmul(group, sum_cols(hadamard(diff, diff))))
        total = total + scale(mean_all(per_graph), l3)
    return total
