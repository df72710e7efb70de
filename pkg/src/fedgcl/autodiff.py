"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Everything is a (rows, cols) float64 matrix; scalars are 1x1. Primitives
record onto the innermost active Tape (a thread-local stack, so concurrent
clients each trace their own graph). With no active tape they are plain
numpy evaluations, which is how inference and negative-sample encoding run.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NumericError, ShapeError

_NORM_FLOOR = 1e-12

_tape_stack = threading.local()


def _stack() -> list:
    if not hasattr(_tape_stack, "tapes"):
        _tape_stack.tapes = []
    return _tape_stack.tapes


def _active_tape():
    tapes = _stack()
    return tapes[-1] if tapes else None


class Tensor:
    """2-D float64 matrix; scalar and 1-D inputs are promoted to row form."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise NumericError("tensor holds non-finite values")
        self.data = arr
        self.grad = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Tape:
    """Append-only record of primitive applications, in execution order.

    Appending order is already topological (inputs exist before outputs), so
    one reverse sweep visits every node exactly once.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp) -> None:
        self.records.append((out, inputs, vjp))


def _emit(name: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if not np.isfinite(out_data).all():
        raise NumericError(f"{name} produced non-finite values")
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, inputs, vjp)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd.T, ad.T @ g

    return _emit("matmul", ad @ bd, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1xN second operand broadcasts down the rows of a."""
    broadcast = b.shape == (1, a.shape[1]) and a.shape[0] != 1
    if not broadcast and a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} + {b.shape}")

    def vjp(g):
        gb = g.sum(axis=0, keepdims=True) if broadcast else g
        return g, gb

    return _emit("add", a.data + b.data, (a, b), vjp)


def scalar_scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        return (c * g,)

    return _emit("scalar_scale", c * a.data, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at 0 is taken as 0

    def vjp(g):
        return (g * mask,)

    return _emit("relu", np.where(mask, a.data, 0.0), (a,), vjp)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _emit("sigmoid", s, (a,), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean: (p, n) -> (1, n)."""
    p = a.shape[0]

    def vjp(g):
        return (np.broadcast_to(g / p, (p, g.shape[1])).copy(),)

    return _emit("mean_rows", a.data.mean(axis=0, keepdims=True), (a,), vjp)


def concat_rows(tensors) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat_rows: need at least one tensor")
    cols = tensors[0].shape[1]
    if any(t.shape[1] != cols for t in tensors):
        raise ShapeError(f"concat_rows: column counts differ {[t.shape for t in tensors]}")
    offsets = np.cumsum([0] + [t.shape[0] for t in tensors])

    def vjp(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(tensors)))

    return _emit("concat_rows", np.concatenate([t.data for t in tensors], axis=0), tensors, vjp)


def transpose(a: Tensor) -> Tensor:
    def vjp(g):
        return (g.T.copy(),)

    return _emit("transpose", a.data.T.copy(), (a,), vjp)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Cosine of two row vectors, norms floored at 1e-12; returns 1x1."""
    if a.shape != b.shape or a.shape[0] != 1:
        raise ShapeError(f"cosine_similarity: need matching 1xh rows, got {a.shape}, {b.shape}")
    ad, bd = a.data, b.data
    na = max(float(np.linalg.norm(ad)), _NORM_FLOOR)
    nb = max(float(np.linalg.norm(bd)), _NORM_FLOOR)
    s = (ad @ bd.T).item() / (na * nb)

    def vjp(g):
        gs = float(g[0, 0])
        ga = gs * (bd / (na * nb) - s * ad / (na * na))
        gb = gs * (ad / (na * nb) - s * bd / (nb * nb))
        return ga, gb

    return _emit("cosine_similarity", np.array([[s]]), (a, b), vjp)


def logsumexp_row(a: Tensor) -> Tensor:
    """Row-wise log-sum-exp: (m, n) -> (m, 1), computed stably."""
    m = a.data.max(axis=1, keepdims=True)
    out = m + np.log(np.exp(a.data - m).sum(axis=1, keepdims=True))
    soft = np.exp(a.data - out)

    def vjp(g):
        return (g * soft,)

    return _emit("logsumexp_row", out, (a,), vjp)


def bce_with_logits(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean sigmoid cross-entropy of a 1xT logit row over observed tasks.

    labels and mask are constants (no gradient); mask=None means all observed.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(1, -1)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: logits {logits.shape} vs labels {y.shape}")
    if mask is None:
        obs = np.ones_like(y)
    else:
        obs = np.asarray(mask, dtype=np.float64).reshape(1, -1)
        if obs.shape != y.shape:
            raise ShapeError(f"bce_with_logits: labels {y.shape} vs mask {obs.shape}")
    denom = obs.sum()
    if denom == 0:
        raise ValueError("bce_with_logits: no observed tasks")
    z = logits.data
    elem = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = (obs * elem).sum() / denom

    def vjp(g):
        return (float(g[0, 0]) * obs * (_sigmoid(z) - y) / denom,)

    return _emit("bce_with_logits", np.array([[out]]), (logits,), vjp)


def backward(tape: Tape, loss: Tensor, params) -> dict[str, np.ndarray]:
    """Reverse sweep of the tape from a scalar loss.

    Returns one gradient array per parameter in `params` (a ParamStore);
    parameters the loss does not depend on get zeros.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"loss must be a 1x1 tensor, got {loss.shape}")
    for out, inputs, _ in tape.records:
        out.grad = None
        for t in inputs:
            t.grad = None
    for _, t in params.items():
        t.grad = None
    loss.grad = np.ones((1, 1))
    for out, inputs, vjp in reversed(tape.records):
        if out.grad is None:
            continue
        for t, g in zip(inputs, vjp(out.grad)):
            if g is None:
                continue
            t.grad = g if t.grad is None else t.grad + g
    grads = {}
    for name, t in params.items():
        grads[name] = np.zeros(t.shape) if t.grad is None else t.grad
    return grads
