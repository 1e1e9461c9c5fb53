"""Define-by-run reverse-mode differentiation over 2-D float64 arrays.

Every operation returns a :class:`Var`. When at least one input requires a
gradient, the result remembers its inputs and a closure that maps the
upstream gradient to input gradients. :func:`backward` orders those records
topologically (the :class:`Tape`) and walks them once in reverse.

Binary elementwise operations follow numpy broadcasting; gradients are
summed back to each operand's shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Var",
    "Tape",
    "constant",
    "parameter",
    "backward",
    "add",
    "sub",
    "neg",
    "scale",
    "hadamard",
    "matmul",
    "transpose",
    "relu",
    "leaky_relu",
    "clip_min",
    "sigmoid",
    "tanh",
    "log",
    "exp",
    "abs_",
    "sqrt",
    "row_softmax",
    "masked_row_softmax",
    "mean_rows",
    "sum_rows",
    "sum_cols",
    "sum_all",
    "mean_all",
    "reshape",
    "concat_cols",
    "pick",
    "block_gram",
    "BatchNormState",
    "batch_norm",
    "Adam",
    "SGD",
    "numerical_gradient",
    "gradcheck",
]


class Var:
    """A matrix value in a differentiable computation."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.array(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v[None, :]
        elif v.ndim != 2:
            raise DimensionError(f"Var holds 2-D values, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Var, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a 1x1 value, got {self.shape}")
        return float(self.value[0, 0])

    def zero_grad(self):
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.value

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        label = f"{self.name}: " if self.name else ""
        return f"Var({label}shape={self.shape}{flag})"


def constant(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def parameter(x, name: str | None = None) -> Var:
    return Var(x, requires_grad=True, name=name)


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _result(value, parents, backward_fn) -> Var:
    out = Var.__new__(Var)
    out.value = value
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    for axis, (gs, s) in enumerate(zip(g.shape, shape)):
        if s == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Var, b: Var, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values", partial=value)
    return value


# ---------------------------------------------------------------------------
# Tape


@dataclass
class Tape:
    """Differentiable records reachable from an output, inputs first."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Var) -> "Tape":
        order = []
        seen = set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)


def backward(loss: Var, retain: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring it.

    The recorded graph is released afterwards unless ``retain`` is set.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward() needs a scalar (1x1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    tape = Tape.from_output(loss)
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if not retain:
        for node in tape.nodes:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def neg(a) -> Var:
    a = _lift(a)
    return _result(-a.value, (a,), lambda g: (-g,))


def scale(a, alpha: float) -> Var:
    a = _lift(a)
    alpha = float(alpha)
    return _result(alpha * a.value, (a,), lambda g: (alpha * g,))


def hadamard(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "hadamard")
    av, bv = a.value, b.value
    return _result(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def matmul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return _result(av @ bv, (a, b), back)


def transpose(a) -> Var:
    a = _lift(a)
    return _result(a.value.T, (a,), lambda g: (g.T,))


def relu(a) -> Var:
    a = _lift(a)
    mask = a.value > 0
    # np.maximum keeps NaN visible to downstream checks
    return _result(np.maximum(a.value, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.2) -> Var:
    a = _lift(a)
    factor = np.where(a.value > 0, 1.0, slope)
    return _result(a.value * factor, (a,), lambda g: (g * factor,))


def clip_min(a, lo: float) -> Var:
    """``max(a, lo)``; no gradient flows through clipped entries."""
    a = _lift(a)
    keep = a.value > lo
    return _result(np.maximum(a.value, lo), (a,), lambda g: (g * keep,))


def sigmoid(a) -> Var:
    a = _lift(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Var:
    a = _lift(a)
    t = np.tanh(a.value)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


def log(a) -> Var:
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    _finite(out, "log")
    av = a.value
    return _result(out, (a,), lambda g: (g / av,))


def exp(a) -> Var:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    _finite(out, "exp")
    return _result(out, (a,), lambda g: (g * out,))


def abs_(a) -> Var:
    """Absolute value; the subgradient at 0 is 0."""
    a = _lift(a)
    sign = np.sign(a.value)
    return _result(np.abs(a.value), (a,), lambda g: (g * sign,))


def sqrt(a) -> Var:
    """Square root; the subgradient at 0 is taken as 0."""
    a = _lift(a)
    if np.any(a.value < 0):
        raise NumericError("sqrt of a negative value", partial=a.value)
    out = np.sqrt(a.value)
    with np.errstate(divide="ignore"):
        d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
    return _result(out, (a,), lambda g: (g * d,))


def row_softmax(a) -> Var:
    a = _lift(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - np.sum(g * s, axis=1, keepdims=True)),)

    return _result(s, (a,), back)


def masked_row_softmax(a, mask) -> Var:
    """Softmax over the entries of each row where ``mask`` is true.

    Every row must keep at least one entry.
    """
    a = _lift(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError(f"mask shape {mask.shape} differs from input {a.shape}")
    if not np.all(mask.any(axis=1)):
        raise ContractError("masked_row_softmax: a row has no admissible entry")
    z = np.where(mask, a.value, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - np.sum(g * s, axis=1, keepdims=True)),)

    return _result(s, (a,), back)


def mean_rows(a) -> Var:
    """Average of the rows: (n, d) -> (1, d)."""
    a = _lift(a)
    n = a.shape[0]
    if n == 0:
        raise DimensionError("mean_rows of an empty matrix")
    return _result(a.value.mean(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g, n, axis=0) / n,))


def sum_rows(a) -> Var:
    """Sum of the rows: (n, d) -> (1, d)."""
    a = _lift(a)
    n = a.shape[0]
    return _result(a.value.sum(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g, n, axis=0),))


def sum_cols(a) -> Var:
    """Sum along each row: (n, d) -> (n, 1)."""
    a = _lift(a)
    d = a.shape[1]
    return _result(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, d, axis=1),))


def sum_all(a) -> Var:
    a = _lift(a)
    shape = a.shape
    return _result(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a) -> Var:
    a = _lift(a)
    shape = a.shape
    size = a.value.size
    return _result(np.array([[a.value.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] / size),))


def reshape(a, rows: int, cols: int) -> Var:
    """Row-major reshape."""
    a = _lift(a)
    if rows * cols != a.value.size:
        raise DimensionError(f"cannot reshape {a.shape} to ({rows}, {cols})")
    shape = a.shape
    return _result(a.value.reshape(rows, cols), (a,), lambda g: (g.reshape(shape),))


def concat_cols(*parts) -> Var:
    parts = [_lift(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.value for p in parts], axis=1), parts, back)


def pick(a, rows, cols) -> Var:
    """Gather ``a[rows[i], cols[i]]`` into an (m, 1) column."""
    a = _lift(a)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, (rows, cols), g[:, 0])
        return (out,)

    return _result(a.value[rows, cols][:, None], (a,), back)


def block_gram(h, block: int, zero_diagonal: bool = True) -> Var:
    """Per-block symmetric inner-product readout.

    ``h`` stacks ``b`` node-embedding blocks of ``block`` rows each. Block
    ``i`` of the (b*block, block) output is ``H_i H_i^T`` symmetrised as
    ``(M + M^T) / 2``, with its diagonal zeroed when requested.
    """
    h = _lift(h)
    n_rows, d = h.shape
    if block <= 0 or n_rows % block:
        raise DimensionError(f"{n_rows} rows do not split into blocks of {block}")
    b = n_rows // block
    hv = h.value.reshape(b, block, d)
    m = np.einsum("bik,bjk->bij", hv, hv)
    m = 0.5 * (m + m.transpose(0, 2, 1))
    keep = np.ones((block, block))
    if zero_diagonal:
        np.fill_diagonal(keep, 0.0)
        m = m * keep

    def back(g):
        g3 = g.reshape(b, block, block) * keep
        gs = g3 + g3.transpose(0, 2, 1)
        # d/dH of <G, sym(H H^T)> with G symmetrised
        gh = np.einsum("bij,bjk->bik", gs, hv)
        return (gh.reshape(n_rows, d),)

    return _result(m.reshape(n_rows, block), (h,), back)


# ---------------------------------------------------------------------------
# batch normalisation


@dataclass
class BatchNormState:
    """Running statistics of a batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def zeros(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(np.zeros((1, dim)), np.ones((1, dim)), momentum, eps)


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool) -> Var:
    """Normalise each column over the rows of ``x``.

    In training mode the batch statistics are used and the running
    statistics are updated; in eval mode the running statistics are used
    and the layer is a fixed affine map.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    n, d = x.shape
    if gamma.shape != (1, d) or beta.shape != (1, d):
        raise DimensionError(f"batch_norm: affine shapes {gamma.shape}, {beta.shape} for width {d}")
    if not training:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.value - state.running_mean) * inv
        gv = gamma.value

        def back_eval(g):
            return g * gv * inv, np.sum(g * xhat, axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

        return _result(xhat * gv + beta.value, (x, gamma, beta), back_eval)

    if n < 1:
        raise DimensionError("batch_norm on an empty batch")
    mu = x.value.mean(axis=0, keepdims=True)
    var = x.value.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.value - mu) * inv
    m = state.momentum
    unbiased = var * n / (n - 1) if n > 1 else var
    state.running_mean = (1 - m) * state.running_mean + m * mu
    state.running_var = (1 - m) * state.running_var + m * unbiased
    gv = gamma.value

    def back(g):
        dxhat = g * gv
        dx = inv * (dxhat - dxhat.mean(axis=0, keepdims=True) - xhat * np.mean(dxhat * xhat, axis=0, keepdims=True))
        return dx, np.sum(g * xhat, axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

    return _result(xhat * gv + beta.value, (x, gamma, beta), back)


# ---------------------------------------------------------------------------
# optimisers


class Adam:
    """Adam with bias correction; gradients are cleared after each step."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class SGD:
    def __init__(self, params, lr: float = 1e-2):
        self.params = [p for p in params if p.requires_grad]
        self.lr = float(lr)

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.value = p.value - self.lr * p.grad
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# gradient checking


def numerical_gradient(fn, param: Var, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar ``fn()`` w.r.t. ``param``."""
    param.value = np.ascontiguousarray(param.value)
    grad = np.zeros_like(param.value)
    flat = param.value.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def gradcheck(fn, params, h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-6) -> float:
    """Compare analytic and finite-difference gradients of ``fn()``.

    Returns the worst ratio ``|analytic - numeric| / max(atol, rtol * scale)``;
    a value <= 1 means every entry agrees within tolerance.
    """
    for p in params:
        p.grad = None
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.value) if p.grad is None else p.grad.copy()
        numeric = numerical_gradient(fn, p, h)
        allowed = np.maximum(atol, rtol * np.maximum(np.abs(analytic), np.abs(numeric)))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / allowed)))
        p.grad = None
    return worst
