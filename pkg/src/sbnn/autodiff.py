"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is define-by-run: each primitive appends its output node to the
tape implied by parent links, and ``backward`` walks the nodes reachable
from a scalar root in reverse topological order. Tapes are rebuilt on every
forward pass, which is what weight sampling requires.

Shape discipline is strict: no broadcasting except adding a length-n bias
vector to every row of a (batch, n) matrix.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, ShapeError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")
LOSS_KINDS = ("softmax_ce", "binary_ce", "gaussian_nll")


class Tensor:
    """A node in the computation graph holding a float64 ndarray."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, name=None, _parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag})"

    # Operator sugar; the named functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _node(value, parents, backward_fn) -> Tensor:
    out = Tensor(value, _parents=tuple(parents))
    out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


# ----------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out_val = a.value @ b.value

    def backward(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return _node(out_val, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")

    def backward(g):
        _accum(a, g.T)

    return _node(a.value.T, (a,), backward)


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; also accepts a bias vector added to each matrix row."""
    a, b = as_tensor(a), as_tensor(b)
    bias_row = (
        a.value.ndim == 2 and b.value.ndim == 1 and a.shape[1] == b.shape[0]
    )
    if not bias_row and a.shape != b.shape and b.value.ndim != 0 and a.value.ndim != 0:
        raise ShapeError(f"add: incompatible shapes {a.shape} + {b.shape}")

    def backward(g):
        _accum(a, g if a.value.ndim else np.sum(g))
        if bias_row:
            _accum(b, g.sum(axis=0))
        else:
            _accum(b, g if b.value.ndim else np.sum(g))

    return _node(a.value + b.value, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    return add(a, neg(as_tensor(b)))


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _node(-a.value, (a,), backward)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; either side may be a python scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.value.ndim != 0 and b.value.ndim != 0:
        raise ShapeError(f"mul: incompatible shapes {a.shape} * {b.shape}")

    # scalar-by-array products need summed gradients on the scalar side
    def backward(g):
        ga = g * b.value
        gb = g * a.value
        _accum(a, np.sum(ga) if a.value.ndim == 0 and np.ndim(ga) != 0 else ga)
        _accum(b, np.sum(gb) if b.value.ndim == 0 and np.ndim(gb) != 0 else gb)

    return _node(a.value * b.value, (a, b), backward)


def outer(u: Tensor, v: Tensor) -> Tensor:
    """Outer product of two vectors: (m,) x (n,) -> (m, n)."""
    u, v = as_tensor(u), as_tensor(v)
    if u.value.ndim != 1 or v.value.ndim != 1:
        raise ShapeError(f"outer expects vectors, got {u.shape} and {v.shape}")

    def backward(g):
        _accum(u, g @ v.value)
        _accum(v, g.T @ u.value)

    return _node(np.outer(u.value, v.value), (u, v), backward)


def tsum(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, np.full_like(a.value, g))

    return _node(np.sum(a.value), (a,), backward)


def tmean(a: Tensor) -> Tensor:
    a = as_tensor(a)
    n = a.value.size

    def backward(g):
        _accum(a, np.full_like(a.value, g / n))

    return _node(np.mean(a.value), (a,), backward)


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, 2.0 * a.value * g)

    return _node(a.value * a.value, (a,), backward)


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_val = np.exp(a.value)

    def backward(g):
        _accum(a, g * out_val)

    return _node(out_val, (a,), backward)


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, g / a.value)

    return _node(np.log(a.value), (a,), backward)


def absolute(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, g * np.sign(a.value))

    return _node(np.abs(a.value), (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe form max(x, 0) + log1p(exp(-|x|))."""
    a = as_tensor(a)
    out_val = np.maximum(a.value, 0.0) + np.log1p(np.exp(-np.abs(a.value)))
    sig = _sigmoid(np.atleast_1d(a.value)).reshape(a.value.shape)

    def backward(g):
        _accum(a, g * sig)

    return _node(out_val, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_val = _sigmoid(np.atleast_1d(a.value)).reshape(a.value.shape)

    def backward(g):
        _accum(a, g * out_val * (1.0 - out_val))

    return _node(out_val, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_val = np.tanh(a.value)

    def backward(g):
        _accum(a, g * (1.0 - out_val * out_val))

    return _node(out_val, (a,), backward)


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0

    def backward(g):
        _accum(a, g * mask)

    return _node(np.where(mask, a.value, 0.0), (a,), backward)


def activation(a: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "tanh":
        return tanh(a)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "linear":
        return as_tensor(a)
    raise ConfigError(f"unknown activation kind: {kind!r}")


def logaddexp(a: Tensor, b: Tensor) -> Tensor:
    """Stable log(exp(a) + exp(b)), elementwise."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"logaddexp: incompatible shapes {a.shape} vs {b.shape}")
    out_val = np.logaddexp(a.value, b.value)

    def backward(g):
        _accum(a, g * np.exp(a.value - out_val))
        _accum(b, g * np.exp(b.value - out_val))

    return _node(out_val, (a, b), backward)


def split_cols(a: Tensor, n_chunks: int) -> list[Tensor]:
    """Split a (batch, k*n_chunks) matrix into n_chunks equal column blocks."""
    a = as_tensor(a)
    if a.value.ndim != 2 or a.shape[1] % n_chunks != 0:
        raise ShapeError(f"split_cols: cannot split shape {a.shape} into {n_chunks}")
    width = a.shape[1] // n_chunks
    chunks = []
    for i in range(n_chunks):
        lo, hi = i * width, (i + 1) * width

        def backward(g, lo=lo, hi=hi):
            full = np.zeros_like(a.value)
            full[:, lo:hi] = g
            _accum(a, full)

        chunks.append(_node(a.value[:, lo:hi].copy(), (a,), backward))
    return chunks


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------

def softmax_ce(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer class targets."""
    logits = as_tensor(logits)
    t = np.asarray(targets)
    if t.ndim == 2:  # one-hot
        t = np.argmax(t, axis=1)
    t = t.astype(np.int64)
    n, n_classes = logits.shape
    if t.shape != (n,):
        raise ShapeError(f"softmax_ce: {logits.shape} logits vs targets {t.shape}")
    if np.any(t < 0) or np.any(t >= n_classes):
        raise DataError(f"softmax_ce: target index out of range [0, {n_classes})")
    z = logits.value
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), t]))
    probs = np.exp(z - lse[:, None])

    def backward(g):
        grad = probs.copy()
        grad[np.arange(n), t] -= 1.0
        _accum(logits, g * grad / n)

    return _node(loss, (logits,), backward)


def binary_ce(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy; probs are post-sigmoid values in (0, 1)."""
    probs = as_tensor(probs)
    y = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
    if np.any((y != 0.0) & (y != 1.0)):
        raise DataError("binary_ce: targets must be 0 or 1")
    p = np.clip(probs.value, 1e-12, 1.0 - 1e-12)
    loss = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    n = p.size

    def backward(g):
        _accum(probs, g * (p - y) / (p * (1.0 - p)) / n)

    return _node(loss, (probs,), backward)


def gaussian_nll(mean: Tensor, targets, sigma_y: float) -> Tensor:
    """Mean Gaussian NLL with fixed observation noise sigma_y."""
    if sigma_y <= 0:
        raise ConfigError(f"gaussian_nll: sigma_y must be > 0, got {sigma_y}")
    mean = as_tensor(mean)
    y = np.asarray(targets, dtype=np.float64).reshape(mean.shape)
    resid = mean.value - y
    n = resid.size
    const = np.log(sigma_y) + 0.5 * np.log(2.0 * np.pi)
    loss = float(np.mean(resid * resid) / (2.0 * sigma_y**2) + const)

    def backward(g):
        _accum(mean, g * resid / (sigma_y**2 * n))

    return _node(loss, (mean,), backward)


def loss_primitives(pred: Tensor, target, kind: str, sigma_y: float = 0.02) -> Tensor:
    if kind == "softmax_ce":
        return softmax_ce(pred, target)
    if kind == "binary_ce":
        return binary_ce(pred, target)
    if kind == "gaussian_nll":
        return gaussian_nll(pred, target, sigma_y)
    raise ConfigError(f"unknown loss kind: {kind!r}")


# ----------------------------------------------------------------------
# reverse pass
# ----------------------------------------------------------------------

def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from a scalar root.

    Returns the gradient map {leaf tensor: d root / d leaf} for every
    reachable leaf with requires_grad set. Each node is visited exactly once;
    fan-out accumulates.
    """
    if root.value.ndim != 0:
        raise ShapeError(f"backward root must be scalar, got shape {root.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))

    for node in order:
        node.grad = None
    root.grad = np.float64(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    grads: dict[Tensor, np.ndarray] = {}
    for node in order:
        if node.requires_grad and not node._parents:
            grads[node] = (
                np.zeros_like(node.value) if node.grad is None else np.asarray(node.grad)
            )
    return grads
