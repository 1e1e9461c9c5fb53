"""Trainable graph layers used as baselines and auxiliary blocks."""
from __future__ import annotations

import numpy as np

from .autodiff import (
    Var,
    constant,
    leaky_relu,
    masked_row_softmax,
    matmul,
    mean_rows,
    parameter,
    relu,
    transpose,
)
from .errors import DimensionError, DomainError
from .nn import Module, glorot_uniform
from .linalg import make_rng

__all__ = [
    "GcnLayer",
    "GatLayer",
    "gcn_forward",
    "gat_forward",
    "attention_mask",
    "mean_pool",
    "pool_matrix",
]


class GcnLayer(Module):
    def __init__(self, d_in: int, d_out: int, rng=0):
        rng = make_rng(rng)
        self.weight = parameter(glorot_uniform(rng, d_in, d_out), "weight")
        self.bias = parameter(np.zeros((1, d_out)), "bias")

    def __call__(self, a_norm, h):
        return gcn_forward(self, a_norm, h)


def gcn_forward(layer: GcnLayer, a_norm, h) -> Var:
    """``ReLU(A_norm H W + b)``; ``a_norm=None`` stands for the identity."""
    h = constant(h)
    if h.shape[1] != layer.weight.shape[0]:
        raise DimensionError(f"GCN expects width {layer.weight.shape[0]}, got {h.shape[1]}")
    if a_norm is not None:
        a_norm = constant(a_norm)
        if a_norm.shape != (h.shape[0], h.shape[0]):
            raise DimensionError(f"adjacency {a_norm.shape} for {h.shape[0]} nodes")
        h = matmul(a_norm, h)
    return relu(matmul(h, layer.weight) + layer.bias)


class GatLayer(Module):
    """Single-head graph attention."""

    def __init__(self, d_in: int, d_out: int, rng=0, negative_slope: float = 0.2):
        rng = make_rng(rng)
        self.weight = parameter(glorot_uniform(rng, d_in, d_out), "weight")
        self.att_src = parameter(glorot_uniform(rng, d_out, 1), "att_src")
        self.att_dst = parameter(glorot_uniform(rng, d_out, 1), "att_dst")
        self.bias = parameter(np.zeros((1, d_out)), "bias")
        self.negative_slope = negative_slope

    def __call__(self, mask, h):
        return gat_forward(self, mask, h)


def attention_mask(adjacency) -> np.ndarray:
    """Nonzero adjacency entries plus every self-loop."""
    a = np.asarray(adjacency)
    return (a != 0) | np.eye(a.shape[0], dtype=bool)


def gat_forward(layer: GatLayer, mask, h, return_attention: bool = False):
    """Attention-weighted aggregation over each node's masked neighbourhood.

    Row ``i`` attends to ``j`` with weight ``softmax_j(LeakyReLU(a_src . Wh_i +
    a_dst . Wh_j))``; the mask always includes self-loops. ``mask`` may be a
    boolean matrix or a raw adjacency.
    """
    h = constant(h)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        mask = attention_mask(mask)
    else:
        mask = mask | np.eye(mask.shape[0], dtype=bool)
    n = h.shape[0]
    if mask.shape != (n, n):
        raise DimensionError(f"mask {mask.shape} for {n} nodes")
    if h.shape[1] != layer.weight.shape[0]:
        raise DimensionError(f"GAT expects width {layer.weight.shape[0]}, got {h.shape[1]}")
    wh = matmul(h, layer.weight)
    scores = leaky_relu(matmul(wh, layer.att_src) + transpose(matmul(wh, layer.att_dst)), layer.negative_slope)
    att = masked_row_softmax(scores, mask)
    out = matmul(att, wh) + layer.bias
    return (out, att) if return_attention else out


def mean_pool(h) -> Var:
    """Column means: (n, d) -> (1, d)."""
    h = constant(h)
    if h.shape[0] == 0:
        raise DomainError("mean_pool of an empty node set")
    return mean_rows(h)


def pool_matrix(sizes) -> np.ndarray:
    """(B, sum(sizes)) averaging matrix for block-stacked graphs."""
    sizes = [int(s) for s in sizes]
    if any(s <= 0 for s in sizes):
        raise DomainError("mean_pool of an empty node set")
    p = np.zeros((len(sizes), sum(sizes)))
    start = 0
    for i, s in enumerate(sizes):
        p[i, start:start + s] = 1.0 / s
        start += s
    return p
