"""Minimal parameter containers on top of :mod:`rgcnet.autodiff`."""
from __future__ import annotations

import numpy as np

from .autodiff import BatchNormState, Var, batch_norm, matmul, parameter
from .errors import DimensionError
from .linalg import make_rng

__all__ = ["Module", "Linear", "BatchNorm", "glorot_uniform"]


def glorot_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return make_rng(rng).uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    """Holds named :class:`Var` parameters and child modules.

    Subclasses register parameters as attributes; ``buffers`` names extra
    arrays (frozen weights, running statistics) that belong in checkpoints.
    """

    training = True

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Var):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameters(self):
        """Trainable parameters only."""
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def count_trainable(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def extra_state(self, prefix=""):
        """Non-parameter arrays to checkpoint, e.g. running statistics."""
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Module):
                out.update(value.extra_state(f"{prefix}{name}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.extra_state(f"{prefix}{name}.{i}."))
        return out

    def state_dict(self) -> dict:
        state = {name: p.value.copy() for name, p in self.named_parameters()}
        state.update({k: v.copy() for k, v in self.extra_state().items()})
        return state

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        for name, p in params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name}")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise DimensionError(f"{name}: expected {p.value.shape}, got {value.shape}")
            p.value = value.copy()
        self._load_extra(state, "")

    def _load_extra(self, state, prefix):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                value._load_extra(state, f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        item._load_extra(state, f"{prefix}{name}.{i}.")


class Linear(Module):
    """``x W + b`` with Glorot-uniform weights and zero bias."""

    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.weight = parameter(glorot_uniform(rng, d_in, d_out), "weight")
        self.bias = parameter(np.zeros((1, d_out)), "bias") if bias else None

    def __call__(self, x):
        if x.shape[1] != self.weight.shape[0]:
            raise DimensionError(f"Linear expects width {self.weight.shape[0]}, got {x.shape[1]}")
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class BatchNorm(Module):
    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = parameter(np.ones((1, dim)), "gamma")
        self.beta = parameter(np.zeros((1, dim)), "beta")
        self.state = BatchNormState.zeros(dim, momentum, eps)

    def __call__(self, x):
        return batch_norm(x, self.gamma, self.beta, self.state, self.training)

    def extra_state(self, prefix=""):
        return {
            prefix + "running_mean": self.state.running_mean,
            prefix + "running_var": self.state.running_var,
        }

    def _load_extra(self, state, prefix):
        self.state.running_mean = np.array(state[prefix + "running_mean"], dtype=np.float64)
        self.state.running_var = np.array(state[prefix + "running_var"], dtype=np.float64)
