"""Small reverse-mode autodiff engine on top of numpy.

Every op records its parents and a backward closure mapping the output
gradient to one gradient per parent. ``backprop`` walks the recorded graph
in reverse topological order and accumulates into ``Parameter.grad``.

All arrays are float64. Batched inputs carry a leading batch axis; conv2d
works on ``(W, H, C)`` or ``(N, W, H, C)``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64
CHECKPOINT_FORMAT = "metamario-params/1"


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class UsageError(RuntimeError):
    """The engine was driven in an unsupported order."""


class Tensor:
    """Dense float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward_fn=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = any(p.requires_grad for p in self.parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A named leaf tensor with a gradient slot of identical shape."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=DTYPE, copy=True))
        self.requires_grad = True
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> Tensor:
        return self

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents, backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced during forward pass")
    out = Tensor(data, parents, backward_fn)
    if not out.requires_grad:
        out.parents = ()
        out.backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _result(out, (x,), lambda g: (g / x.data,))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.data > 0
    return _result(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _result(
        np.where(pick_a, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return _result(np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------- reductions / shape

def tsum(x: Tensor, axis=None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _result(np.sum(x.data, axis=axis), (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor, batched: bool = False) -> Tensor:
    if batched:
        return reshape(x, (x.shape[0], -1))
    return reshape(x, (-1,))


def index(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(x.data[idx], (x,), backward)


def pick(x: Tensor, actions) -> Tensor:
    """Select ``x[..., actions]`` row-wise: one entry per row of a (N, A) tensor."""
    actions = np.asarray(actions, dtype=np.int64)
    if x.data.ndim == 1:
        return index(x, (int(actions),))
    rows = np.arange(x.shape[0])
    return index(x, (rows, actions))


# ---------------------------------------------------------------- layers

def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """``x @ weights + bias`` for ``x`` of shape (n,) or (N, n)."""
    if weights.data.ndim != 2 or bias.shape != (weights.shape[1],):
        raise DimensionError(f"dense: weights {weights.shape} / bias {bias.shape} mismatch")
    if x.shape[-1] != weights.shape[0]:
        raise DimensionError(
            f"dense: input length {x.shape[-1]} != weight rows {weights.shape[0]}"
        )
    out = x.data @ weights.data + bias.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        return (g @ weights.data.T, x2.T @ g2, g2.sum(axis=0))

    return _result(out, (x, weights, bias), backward)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 convolution (cross-correlation) over the W and H axes."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernels.data.ndim != 4:
        raise DimensionError(f"conv2d: expected (W,H,C) input, got {x.shape}")
    n, w, h, c = xd.shape
    k, k2, cin, f = kernels.shape
    if k != k2:
        raise DimensionError(f"conv2d: kernel must be square, got {kernels.shape}")
    if cin != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel expects {cin}")
    if k > w or k > h:
        raise DimensionError(f"conv2d: kernel {k} larger than input {w}x{h}")
    if bias.shape != (f,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({f},)")
    wo, ho = w - k + 1, h - k + 1
    # (n, wo, ho, c, k, k) -> (n, wo, ho, k, k, c)
    win = sliding_window_view(xd, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = win.reshape(n * wo * ho, k * k * c)
    kmat = kernels.data.reshape(k * k * c, f)
    out = (cols @ kmat).reshape(n, wo, ho, f) + bias.data
    if squeeze:
        out = out[0]

    def backward(g):
        g4 = g[None] if squeeze else g
        gflat = g4.reshape(n * wo * ho, f)
        dk = (cols.T @ gflat).reshape(kernels.shape)
        db = gflat.sum(axis=0)
        if not x.requires_grad:
            return (None, dk, db)
        dcols = (gflat @ kmat.T).reshape(n, wo, ho, k, k, c)
        dx = np.zeros_like(xd)
        for i in range(k):
            for j in range(k):
                dx[:, i : i + wo, j : j + ho, :] += dcols[:, :, :, i, j, :]
        return (dx[0] if squeeze else dx, dk, db)

    return _result(out, (x, kernels, bias), backward)


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, via max-subtraction."""
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (logits,), backward)


def log_softmax(logits: Tensor) -> Tensor:
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _result(out, (logits,), backward)


# ---------------------------------------------------------------- backprop

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backprop(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``grad`` of every Parameter reached.

    Gradients add onto whatever is already in the slots; zero them between
    steps with :func:`zero_grads`.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backprop needs the Tensor produced by a forward pass")
    if loss.size != 1:
        raise UsageError(f"backprop needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_gradient(
    params: Sequence[Parameter], loss_fn: Callable[[], object], h: float = 1e-5
) -> list[np.ndarray]:
    """Central differences (L(θ+h) − L(θ−h)) / 2h for every component."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _as_float(loss_fn())
            flat[i] = orig - h
            down = _as_float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def _as_float(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


# ---------------------------------------------------------------- checkpoints

def params_to_json(params: Sequence[Parameter], meta: dict | None = None) -> dict:
    """Flat list of (name, shape, row-major values) records."""
    return {
        "format": CHECKPOINT_FORMAT,
        "meta": meta or {},
        "params": [
            {"name": p.name, "shape": list(p.shape), "values": p.data.reshape(-1).tolist()}
            for p in params
        ],
    }


def params_from_json(doc: dict) -> dict[str, np.ndarray]:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unknown checkpoint format {doc.get('format')!r}")
    out = {}
    for rec in doc["params"]:
        arr = np.asarray(rec["values"], dtype=DTYPE)
        shape = tuple(rec["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionError(f"checkpoint entry {rec['name']!r}: {arr.size} values for shape {shape}")
        out[rec["name"]] = arr.reshape(shape)
    return out


def save_params(path: str | Path, params: Sequence[Parameter], meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_json(params, meta)))


def load_params(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    return params_from_json(doc), doc.get("meta", {})
