"""Reservoir graph convolution layers (RGC-Net and the trainable TRGC-Net).

One layer holds an optional input map (first layer of a stack only), a
square reservoir matrix rescaled once after initialisation so that its
spectral radius does not exceed ``target_radius``, and a trainable linear
output map. Node embeddings are node-major: ``H`` has one row per node.

The reservoir step is the leaky graph convolution

    H <- ReLU((1 - alpha) H + alpha * A_norm H W_res)

applied ``k`` times.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Var, constant, matmul, parameter, relu, scale
from .errors import ConfigurationError, DimensionError, ParameterError
from .graph import Graph, normalize_adjacency
from .linalg import as_matrix, estimate_spectral_radius, make_rng, row_sum_bound, uniform_matrix
from .nn import Module

__all__ = [
    "ReservoirConfig",
    "ReservoirLayer",
    "adjust_spectral_radius",
    "input_transform",
    "reservoir_forward",
    "output_transform",
    "check_stack",
    "stack_forward",
]


def adjust_spectral_radius(w, target_radius: float = 1.0) -> np.ndarray:
    """Rescale ``w`` to spectral radius ``target_radius`` if it exceeds it.

    Matrices already within the bound are returned unchanged (same object).
    If the power iteration fails to converge the max-row-sum bound is used
    instead, which can only over-shrink.
    """
    w = as_matrix(w, "reservoir")
    if w.shape[0] != w.shape[1]:
        raise DimensionError(f"reservoir must be square, got {w.shape}")
    if target_radius <= 0:
        raise ParameterError("target_radius must be positive")
    est = estimate_spectral_radius(w)
    rho = est.radius if est.converged else row_sum_bound(w)
    if rho > target_radius:
        return w * (target_radius / rho)
    return w


@dataclass
class ReservoirConfig:
    """Serialisable layer hyper-parameters."""

    n_res: int = 64
    n_out: int = 64
    alpha: float = 0.8
    k: int = 1
    trainable: bool = False
    seed: int = 0
    target_radius: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


class ReservoirLayer(Module):
    """A reservoir graph convolution layer.

    ``n_in`` is given only for the first layer of a stack; it creates the
    fixed input map from raw features to ``n_res`` reservoir units.
    """

    def __init__(
        self,
        n_res: int,
        n_out: int,
        n_in: int | None = None,
        alpha: float = 0.8,
        k: int = 1,
        trainable: bool = False,
        seed=0,
        target_radius: float = 1.0,
    ):
        if not 0.0 < alpha <= 1.0:
            raise ParameterError(f"leaky rate must lie in (0, 1], got {alpha}")
        if int(k) < 1:
            raise ParameterError(f"iteration count must be >= 1, got {k}")
        self.alpha = float(alpha)
        self.k = int(k)
        self.trainable = bool(trainable)
        self.seed = seed
        self.target_radius = float(target_radius)
        rng = make_rng(seed)
        self.w_in = None
        if n_in is not None:
            self.w_in = Var(uniform_matrix(rng, n_in, n_res, -1.0, 1.0), trainable, "w_in")
        w_res = adjust_spectral_radius(uniform_matrix(rng, n_res, n_res, -1.0, 1.0), target_radius)
        self.w_res = Var(w_res, trainable, "w_res")
        bound = 1.0 / np.sqrt(n_res)
        self.w_out = parameter(rng.uniform(-bound, bound, size=(n_res, n_out)), "w_out")

    @classmethod
    def from_config(cls, cfg: ReservoirConfig, n_in: int | None = None) -> "ReservoirLayer":
        return cls(cfg.n_res, cfg.n_out, n_in, cfg.alpha, cfg.k, cfg.trainable, cfg.seed, cfg.target_radius)

    @property
    def n_in(self):
        return None if self.w_in is None else self.w_in.shape[0]

    @property
    def n_res(self) -> int:
        return self.w_res.shape[0]

    @property
    def n_out(self) -> int:
        return self.w_out.shape[1]

    def config(self) -> ReservoirConfig:
        return ReservoirConfig(self.n_res, self.n_out, self.alpha, self.k, self.trainable, self.seed, self.target_radius)

    def __call__(self, a_norm, h, with_input: bool = True):
        if with_input and self.w_in is not None:
            h = input_transform(self, h)
        return output_transform(self, reservoir_forward(self, a_norm, h))


def input_transform(layer: ReservoirLayer, x) -> Var:
    if layer.w_in is None:
        raise ConfigurationError("layer has no input map (only the first layer of a stack does)")
    x = constant(x)
    if x.shape[1] != layer.w_in.shape[0]:
        raise DimensionError(f"features of width {x.shape[1]}, input map expects {layer.w_in.shape[0]}")
    return matmul(x, layer.w_in)


def reservoir_forward(layer: ReservoirLayer, a_norm, h0) -> Var:
    """``k`` leaky reservoir steps; ``a_norm=None`` stands for the identity."""
    h = constant(h0)
    n = h.shape[0]
    if a_norm is not None:
        a_norm = constant(a_norm)
        if a_norm.shape != (n, n):
            raise DimensionError(f"normalised adjacency {a_norm.shape} for {n} nodes")
    if h.shape[1] != layer.n_res:
        raise DimensionError(f"embedding width {h.shape[1]}, reservoir has {layer.n_res} units")
    keep = 1.0 - layer.alpha
    for _ in range(layer.k):
        agg = h if a_norm is None else matmul(a_norm, h)
        mixed = scale(matmul(agg, layer.w_res), layer.alpha)
        h = relu(scale(h, keep) + mixed) if keep else relu(mixed)
    return h


def output_transform(layer: ReservoirLayer, h) -> Var:
    h = constant(h)
    if h.shape[1] != layer.n_res:
        raise DimensionError(f"embedding width {h.shape[1]}, output map expects {layer.n_res}")
    return matmul(h, layer.w_out)


def check_stack(layers) -> None:
    """Raise :class:`ConfigurationError` if consecutive layers do not chain."""
    if not layers:
        raise ConfigurationError("empty reservoir stack")
    for i, layer in enumerate(layers[1:], start=1):
        if layer.w_in is not None:
            raise ConfigurationError(f"layer {i} has an input map; only the first layer may")
        if layer.n_res != layers[i - 1].n_out:
            raise ConfigurationError(
                f"layer {i} has {layer.n_res} reservoir units but layer {i - 1} emits {layers[i - 1].n_out}"
            )


def stack_forward(layers, g: Graph, a_norm=None) -> Var:
    """Run a chained reservoir stack on a graph; the input map runs once."""
    check_stack(layers)
    if a_norm is None:
        a_norm = normalize_adjacency(g.adjacency)
    h = constant(g.features)
    first = layers[0]
    if first.w_in is not None:
        h = input_transform(first, h)
    for layer in layers:
        h = output_transform(layer, reservoir_forward(layer, a_norm, h))
    return h
