"""Dense-tensor math with reverse-mode differentiation on a numpy backend.

A :class:`Tensor` wraps a numpy array; every operation that touches a tensor
requiring gradients records a backward closure and its parents, forming an
implicit compute graph. ``backward()`` on a scalar loss replays the closures
in reverse topological order. Inference wraps calls in :func:`no_grad` so no
tape is recorded.

Float32 is the working precision; :func:`precision` switches new tensors to
float64 for gradient checking.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import GraphStateError, ShapeError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def precision(dtype):
    """Temporarily change the dtype used for newly created tensors."""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A numpy-backed array with an optional gradient tape entry."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, np.ndarray) and dtype is None:
            if data.dtype not in (np.float32, np.float64):
                data = data.astype(_DEFAULT_DTYPE)
            self.data = data
        else:
            self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor with requires_grad."""
        if self.data.size != 1:
            raise GraphStateError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad or self._backward is None and not self._parents:
            raise GraphStateError("backward on a detached graph (nothing requires grad)")
        if self._consumed:
            raise GraphStateError("backward called twice on the same graph; rebuild the forward pass")
        self._consumed = True

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Arithmetic conveniences used by tests; model code calls the functions below.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return multiply(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad, b.shape))
        return run

    return _result(data, (a, b), backward)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad * a.data, b.shape))
        return run

    return _result(data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    data = a.data * factor

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad * factor)
        return run

    return _result(data, (a,), backward)


def add_const(a: Tensor, value: float) -> Tensor:
    data = a.data + value

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad)
        return run

    return _result(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ grad)
        return run

    return _result(data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")
    data = a.data.T

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad.T)
        return run

    return _result(data, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad.reshape(a.shape))
        return run

    return _result(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(out):
        def run(grad):
            offsets = np.cumsum([0] + sizes)
            for t, start, end in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    index = [slice(None)] * grad.ndim
                    index[axis] = slice(start, end)
                    t._accumulate(grad[tuple(index)])
        return run

    return _result(data, tuple(tensors), backward)


def slice_last(a: Tensor, start: int, end: int) -> Tensor:
    data = a.data[..., start:end]

    def backward(out):
        def run(grad):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                full[..., start:end] = grad
                a._accumulate(full)
        return run

    return _result(data, (a,), backward)


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    data = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.shape[axis]

    def backward(out):
        def run(grad):
            if a.requires_grad:
                if axis is None:
                    a._accumulate(np.full_like(a.data, grad / count))
                else:
                    a._accumulate(np.expand_dims(grad, axis) / count * np.ones_like(a.data))
        return run

    return _result(data, (a,), backward)


def sum_axis(a: Tensor, axis: Optional[int] = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(out):
        def run(grad):
            if a.requires_grad:
                if axis is None:
                    a._accumulate(np.full_like(a.data, grad))
                else:
                    a._accumulate(np.expand_dims(grad, axis) * np.ones_like(a.data))
        return run

    return _result(data, (a,), backward)


def gather(table: Tensor, indexes: np.ndarray) -> Tensor:
    """Row lookup: result[k...] = table[indexes[k...]]; the embedding gather."""
    if table.data.ndim != 2:
        raise ShapeError(f"gather expects a 2-D table, got {table.shape}")
    idx = np.asarray(indexes, dtype=np.int64)
    data = table.data[idx]

    def backward(out):
        def run(grad):
            if table.requires_grad:
                # Scatter straight into .grad; a dense intermediate per call
                # would dominate the backward pass for large tables.
                if table.grad is None:
                    table.grad = np.zeros_like(table.data)
                np.add.at(table.grad, idx, grad)
        return run

    return _result(data, (table,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad * (a.data > 0))
        return run

    return _result(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60, 60)))

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad * data * (1.0 - data))
        return run

    return _result(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(out):
        def run(grad):
            if a.requires_grad:
                a._accumulate(grad * (1.0 - data * data))
        return run

    return _result(data, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis, guarded by max subtraction."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    data = exp / exp.sum(axis=-1, keepdims=True)

    def backward(out):
        def run(grad):
            if a.requires_grad:
                dot = (grad * data).sum(axis=-1, keepdims=True)
                a._accumulate((grad - dot) * data)
        return run

    return _result(data, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then gain+bias."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    data = normed * gain.data + bias.data

    def backward(out):
        def run(grad):
            d = x.shape[-1]
            if gain.requires_grad:
                axes = tuple(range(grad.ndim - 1))
                gain._accumulate((grad * normed).sum(axis=axes))
            if bias.requires_grad:
                axes = tuple(range(grad.ndim - 1))
                bias._accumulate(grad.sum(axis=axes))
            if x.requires_grad:
                dy = grad * gain.data
                mean_dy = dy.mean(axis=-1, keepdims=True)
                mean_dy_y = (dy * normed).mean(axis=-1, keepdims=True)
                x._accumulate(inv * (dy - mean_dy - normed * mean_dy_y))
        return run

    return _result(data, (x, gain, bias), backward)


def dropout(x: Tensor, p: float, train: bool, rng: Optional["Rng"] = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when p == 0."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise GraphStateError("dropout in train mode requires an Rng")
    keep = (rng.uniform(x.shape) >= p).astype(x.data.dtype)
    factor = 1.0 / (1.0 - p)
    data = x.data * keep * factor

    def backward(out):
        def run(grad):
            if x.requires_grad:
                x._accumulate(grad * keep * factor)
        return run

    return _result(data, (x,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Log-sum-exp cross-entropy of a 1-D logit vector against one index."""
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects 1-D logits, got {logits.shape}")
    if not 0 <= target < logits.shape[0]:
        raise ShapeError(f"target {target} out of range for {logits.shape[0]} logits")
    m = logits.data.max()
    exp = np.exp(logits.data - m)
    lse = m + math.log(exp.sum())
    data = np.asarray(lse - logits.data[target], dtype=logits.data.dtype)

    def backward(out):
        def run(grad):
            if logits.requires_grad:
                probs = exp / exp.sum()
                probs[target] -= 1.0
                logits._accumulate(probs * grad)
        return run

    return _result(data, (logits,), backward)


def edge_score(q: Tensor, edge_keys: Tensor) -> Tensor:
    """Pairwise query-edge dot products: out[i, j] = q[i] . edge_keys[i, j]."""
    if q.data.ndim != 2 or edge_keys.data.ndim != 3:
        raise ShapeError(f"edge_score shapes invalid: {q.shape}, {edge_keys.shape}")
    data = np.einsum("id,ijd->ij", q.data, edge_keys.data)

    def backward(out):
        def run(grad):
            if q.requires_grad:
                q._accumulate(np.einsum("ij,ijd->id", grad, edge_keys.data))
            if edge_keys.requires_grad:
                edge_keys._accumulate(np.einsum("ij,id->ijd", grad, q.data))
        return run

    return _result(data, (q, edge_keys), backward)


def edge_mix(attn: Tensor, edge_values: Tensor) -> Tensor:
    """Attention-weighted edge values: out[i] = sum_j attn[i, j] * edge_values[i, j]."""
    if attn.data.ndim != 2 or edge_values.data.ndim != 3:
        raise ShapeError(f"edge_mix shapes invalid: {attn.shape}, {edge_values.shape}")
    data = np.einsum("ij,ijd->id", attn.data, edge_values.data)

    def backward(out):
        def run(grad):
            if attn.requires_grad:
                attn._accumulate(np.einsum("id,ijd->ij", grad, edge_values.data))
            if edge_values.requires_grad:
                edge_values._accumulate(np.einsum("ij,id->ijd", attn.data, grad))
        return run

    return _result(data, (attn, edge_values), backward)


_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SPLITMIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_M2 = np.uint64(0x94D049BB133111EB)


class Rng:
    """Deterministic SplitMix64 stream; reproducible across platforms."""

    def __init__(self, seed: int):
        self.state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def _block(self, count: int) -> np.ndarray:
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            s = self.state + steps * _SPLITMIX_GAMMA
            z = s
            z = (z ^ (z >> np.uint64(30))) * _SPLITMIX_M1
            z = (z ^ (z >> np.uint64(27))) * _SPLITMIX_M2
            z = z ^ (z >> np.uint64(31))
            self.state = self.state + np.uint64(count) * _SPLITMIX_GAMMA
        return z

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self._block(count) >> np.uint64(11)
        u = raw.astype(np.float64) * (1.0 / (1 << 53))
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u1 = (self._block(pairs).astype(np.float64) + 1.0) * (1.0 / (1 << 64))
        u2 = self._block(pairs).astype(np.float64) * (1.0 / (1 << 64))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        samples = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return (samples * std).reshape(shape)

    def integers(self, upper: int, count: int) -> np.ndarray:
        """Uniform ints in [0, upper); fine for batch sampling."""
        return (self._block(count) % np.uint64(upper)).astype(np.int64)

    def fork(self, offset: int) -> "Rng":
        """Independent stream for a sub-task (e.g. per-run seed offsets)."""
        child = Rng(0)
        child.state = self._block(offset + 1)[-1]
        return child


def xavier_uniform(rng: Rng, fan_in: int, fan_out: int, dtype=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform((fan_in, fan_out), -bound, bound).astype(dtype or _DEFAULT_DTYPE)


def embedding_init(rng: Rng, rows: int, dim: int, dtype=None) -> np.ndarray:
    return rng.normal((rows, dim), std=dim ** -0.5).astype(dtype or _DEFAULT_DTYPE)


def check_gradients(
    f: Callable[[list[Tensor]], Tensor],
    inputs: list[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between backward() and central differences.

    Runs in float64 regardless of the ambient default. ``f`` must be a pure
    scalar-valued function of its tensor inputs.
    """
    with precision(np.float64):
        tensors = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
        loss = f(tensors)
        loss.backward()
        analytic = [
            t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors
        ]

        def evaluate(k: int, i: int, value: float) -> float:
            arrays = []
            for j, x in enumerate(inputs):
                arr = np.array(x, dtype=np.float64, copy=True)
                if j == k:
                    arr.reshape(-1)[i] = value
                arrays.append(Tensor(arr))
            return f(arrays).item()

        worst = 0.0
        for k, base in enumerate(inputs):
            base = np.asarray(base, dtype=np.float64)
            numeric = np.zeros_like(base)
            flat = base.reshape(-1)
            for i in range(flat.size):
                plus = evaluate(k, i, flat[i] + h)
                minus = evaluate(k, i, flat[i] - h)
                numeric.reshape(-1)[i] = (plus - minus) / (2.0 * h)
            diff = np.abs(analytic[k] - numeric)
            denom = np.maximum(np.maximum(np.abs(analytic[k]), np.abs(numeric)), 1e-6)
            worst = max(worst, float((diff / denom).max()))
        return worst


def global_grad_norm(tensors: Iterable[Tensor]) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    return math.sqrt(total)
