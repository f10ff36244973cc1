"""Minimal reverse-mode differentiation over dense 2-D float64 tensors.

Operations record backward closures onto the innermost active Tape; the
tape replays them in exact reverse order and accumulates gradients
additively into leaf tensors. With no tape active, ops run forward-only
(the inference path). Everything is float64 and single-threaded per tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


_TAPE_STACK: list["Tape"] = []


def _as_2d(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D; got array of shape {arr.shape}")
    return arr


class Tensor:
    """Dense (rows, cols) float64 value with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_2d(data)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = np.zeros_like(data) if requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs shape (1, 1), got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy(), False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of backward closures; replay is strictly LIFO."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []
        self._replayed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def record(self, fn: Callable[[], None]) -> None:
        self._ops.append(fn)

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, out: Tensor) -> None:
        if self._replayed:
            raise RuntimeError("tape already replayed; reset() before reusing it")
        if out.shape != (1, 1):
            raise ShapeError(f"backward seeds a scalar (1, 1) output, got {out.shape}")
        if out.grad is None:
            raise ValueError("output does not require grad (no recorded path to it)")
        out.grad[...] = 1.0
        for fn in reversed(self._ops):
            fn()
        self._replayed = True

    def reset(self) -> None:
        self._ops.clear()
        self._replayed = False


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _result(data: np.ndarray, *parents: Tensor) -> tuple[Tensor, Tape | None]:
    tape = _active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(np.ascontiguousarray(data, dtype=np.float64), needs)
    return out, (tape if needs else None)


def _check_same_or_rowvec(a: Tensor, b: Tensor, op: str) -> bool:
    """Returns True when b is a (1, m) row vector broadcast over a's rows."""
    if a.shape == b.shape:
        return False
    if b.shape == (1, a.shape[1]):
        return True
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out, tape = _result(a.data @ b.data, a, b)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bw():
            if a.requires_grad:
                a.grad += out.grad @ b_data.T
            if b.requires_grad:
                b.grad += a_data.T @ out.grad

        tape.record(bw)
    return out


def transpose(a: Tensor) -> Tensor:
    out, tape = _result(a.data.T, a)
    if tape is not None:

        def bw():
            a.grad += out.grad.T

        tape.record(bw)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    rowvec = _check_same_or_rowvec(a, b, "add")
    out, tape = _result(a.data + b.data, a, b)
    if tape is not None:

        def bw():
            if a.requires_grad:
                a.grad += out.grad
            if b.requires_grad:
                b.grad += out.grad.sum(axis=0, keepdims=True) if rowvec else out.grad

        tape.record(bw)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    rowvec = _check_same_or_rowvec(a, b, "sub")
    out, tape = _result(a.data - b.data, a, b)
    if tape is not None:

        def bw():
            if a.requires_grad:
                a.grad += out.grad
            if b.requires_grad:
                b.grad -= out.grad.sum(axis=0, keepdims=True) if rowvec else out.grad

        tape.record(bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product; b may be a broadcast row vector."""
    rowvec = _check_same_or_rowvec(a, b, "mul")
    out, tape = _result(a.data * b.data, a, b)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bw():
            if a.requires_grad:
                a.grad += out.grad * b_data
            if b.requires_grad:
                g = out.grad * a_data
                b.grad += g.sum(axis=0, keepdims=True) if rowvec else g

        tape.record(bw)
    return out


def scalar_mul(a: Tensor, c: float) -> Tensor:
    out, tape = _result(a.data * c, a)
    if tape is not None:

        def bw():
            a.grad += out.grad * c

        tape.record(bw)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out, tape = _result(a.data + c, a)
    if tape is not None:

        def bw():
            a.grad += out.grad

        tape.record(bw)
    return out


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows: column counts differ, {a.shape} vs {b.shape}")
    na = a.shape[0]
    out, tape = _result(np.concatenate([a.data, b.data], axis=0), a, b)
    if tape is not None:

        def bw():
            if a.requires_grad:
                a.grad += out.grad[:na]
            if b.requires_grad:
                b.grad += out.grad[na:]

        tape.record(bw)
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    na = a.shape[1]
    out, tape = _result(np.concatenate([a.data, b.data], axis=1), a, b)
    if tape is not None:

        def bw():
            if a.requires_grad:
                a.grad += out.grad[:, :na]
            if b.requires_grad:
                b.grad += out.grad[:, na:]

        tape.record(bw)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for {a.shape}")
    out, tape = _result(a.data[:, start:stop].copy(), a)
    if tape is not None:

        def bw():
            a.grad[:, start:stop] += out.grad

        tape.record(bw)
    return out


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: indices must be 1-D")
    out, tape = _result(a.data[idx], a)
    if tape is not None:

        def bw():
            np.add.at(a.grad, idx, out.grad)

        tape.record(bw)
    return out


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != (a.shape[0],):
        raise ShapeError(
            f"segment_sum: need one segment id per row, got {seg.shape} for {a.shape}"
        )
    acc = np.zeros((num_segments, a.shape[1]))
    np.add.at(acc, seg, a.data)
    out, tape = _result(acc, a)
    if tape is not None:

        def bw():
            a.grad += out.grad[seg]

        tape.record(bw)
    return out


def segment_mean(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    seg = np.asarray(segment_ids, dtype=np.intp)
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    counts[counts == 0] = 1.0
    acc = np.zeros((num_segments, a.shape[1]))
    np.add.at(acc, seg, a.data)
    acc /= counts[:, None]
    out, tape = _result(acc, a)
    if tape is not None:

        def bw():
            a.grad += out.grad[seg] / counts[seg, None]

        tape.record(bw)
    return out


def row_sum(a: Tensor) -> Tensor:
    """(n, m) -> (n, 1), sum of each row."""
    out, tape = _result(a.data.sum(axis=1, keepdims=True), a)
    if tape is not None:

        def bw():
            a.grad += out.grad

        tape.record(bw)
    return out


def sum_over_rows(a: Tensor) -> Tensor:
    """(n, m) -> (1, m), column totals."""
    out, tape = _result(a.data.sum(axis=0, keepdims=True), a)
    if tape is not None:

        def bw():
            a.grad += out.grad

        tape.record(bw)
    return out


def mean_over_rows(a: Tensor) -> Tensor:
    """(n, m) -> (1, m), column means."""
    n = a.shape[0]
    out, tape = _result(a.data.mean(axis=0, keepdims=True), a)
    if tape is not None:

        def bw():
            a.grad += out.grad / n

        tape.record(bw)
    return out


def _elementwise(a: Tensor, value: np.ndarray, dvalue: np.ndarray) -> Tensor:
    out, tape = _result(value, a)
    if tape is not None:

        def bw():
            a.grad += out.grad * dvalue

        tape.record(bw)
    return out


def relu(a: Tensor) -> Tensor:
    return _elementwise(a, np.maximum(a.data, 0.0), (a.data > 0.0).astype(np.float64))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    value = np.empty_like(x)
    pos = x >= 0
    value[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    value[~pos] = ex / (1.0 + ex)
    return _elementwise(a, value, value * (1.0 - value))


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    return _elementwise(a, value, 1.0 - value * value)


def exp(a: Tensor) -> Tensor:
    value = np.exp(a.data)
    return _elementwise(a, value, value)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log requires strictly positive entries")
    return _elementwise(a, np.log(a.data), 1.0 / a.data)


def square(a: Tensor) -> Tensor:
    return _elementwise(a, a.data * a.data, 2.0 * a.data)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise ValueError("sqrt requires non-negative entries")
    value = np.sqrt(a.data)
    return _elementwise(a, value, 0.5 / np.maximum(value, 1e-300))


def sqdist(a: Tensor, b: Tensor) -> Tensor:
    """(n, d) x (m, d) -> (n, m) pairwise squared Euclidean distances."""
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"sqdist: feature dims differ, {a.shape} vs {b.shape}")
    diff = a.data[:, None, :] - b.data[None, :, :]
    out, tape = _result(np.einsum("uvk,uvk->uv", diff, diff), a, b)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bw():
            g = out.grad
            if a.requires_grad:
                a.grad += 2.0 * (g.sum(axis=1, keepdims=True) * a_data - g @ b_data)
            if b.requires_grad:
                b.grad += 2.0 * (g.sum(axis=0)[:, None] * b_data - g.T @ a_data)

        tape.record(bw)
    return out


def frobenius_dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"frobenius_dot: shapes differ, {a.shape} vs {b.shape}")
    out, tape = _result(np.array([[np.einsum("ij,ij->", a.data, b.data)]]), a, b)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def bw():
            g = out.grad[0, 0]
            if a.requires_grad:
                a.grad += g * b_data
            if b.requires_grad:
                b.grad += g * a_data

        tape.record(bw)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)
    out, tape = _result(value, a)
    if tape is not None:

        def bw():
            g = out.grad
            a.grad += (g - (g * value).sum(axis=1, keepdims=True)) * value

        tape.record(bw)
    return out


def layernorm_rows(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization (no affine; apply gain/bias with mul/add)."""
    mu = a.data.mean(axis=1, keepdims=True)
    var = a.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * inv
    out, tape = _result(y, a)
    if tape is not None:

        def bw():
            g = out.grad
            gm = g.mean(axis=1, keepdims=True)
            gy = (g * y).mean(axis=1, keepdims=True)
            a.grad += (g - gm - y * gy) * inv

        tape.record(bw)
    return out


@dataclass
class BatchNormState:
    """Running statistics for column-wise batch normalization."""

    running_mean: np.ndarray
    running_var: np.ndarray
    num_batches: int = 0

    @classmethod
    def create(cls, dim: int) -> "BatchNormState":
        return cls(np.zeros(dim), np.ones(dim), 0)

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy(), self.num_batches)


def batchnorm_cols(
    a: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Column-wise batch normalization with learned affine.

    Training mode normalizes by batch statistics (over rows) and updates the
    running estimates in `state`; eval mode is a pure affine map using the
    running statistics. Running variance is the biased batch variance.
    """
    m = a.shape[1]
    if gamma.shape != (1, m) or beta.shape != (1, m):
        raise ShapeError(
            f"batchnorm_cols: gamma/beta must be (1, {m}), got {gamma.shape}/{beta.shape}"
        )
    if training:
        mu = a.data.mean(axis=0)
        var = a.data.var(axis=0)
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var
        state.num_batches += 1
    else:
        mu = state.running_mean
        var = state.running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out, tape = _result(xhat * gamma.data + beta.data, a, gamma, beta)
    if tape is not None:
        gamma_data = gamma.data.copy()

        def bw():
            g = out.grad
            if beta.requires_grad:
                beta.grad += g.sum(axis=0, keepdims=True)
            if gamma.requires_grad:
                gamma.grad += (g * xhat).sum(axis=0, keepdims=True)
            if a.requires_grad:
                gx = g * gamma_data
                if training:
                    a.grad += (
                        gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0)
                    ) * inv
                else:
                    a.grad += gx * inv

        tape.record(bw)
    return out


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    `f(*inputs)` must return a scalar (1, 1) tensor. Inputs with
    requires_grad=False are skipped. Error is |g_ad - g_fd| normalized by
    max(1, |g_ad|, |g_fd|), maximized over all checked entries.
    """
    checked = [t for t in inputs if t.requires_grad]
    for t in checked:
        t.zero_grad()
    with Tape() as tape:
        out = f(*inputs)
        if out.shape != (1, 1):
            raise ValueError(f"grad_check requires a scalar output, got {out.shape}")
    if not checked:
        return 0.0
    tape.backward(out)
    analytic = [t.grad.copy() for t in checked]

    def value() -> float:
        return f(*inputs).data[0, 0]

    worst = 0.0
    for t, g_ad in zip(checked, analytic):
        flat = t.data.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            fp = value()
            flat[k] = orig - h
            fm = value()
            flat[k] = orig
            g_fd = (fp - fm) / (2.0 * h)
            ga = g_ad.ravel()[k]
            err = abs(ga - g_fd) / max(1.0, abs(ga), abs(g_fd))
            if err > worst:
                worst = err
    return worst
