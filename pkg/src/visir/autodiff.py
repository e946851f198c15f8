"""Dense float64 tensors with tape-based reverse-mode differentiation.

The tape is define-by-run: every primitive that touches a tensor with
``requires_grad`` appends one entry, ``backward`` replays the tape once in
reverse and then discards it.  Tensors are immutable after construction
(the ``grad`` slot is the only mutable field), so a model can be shared
read-only across threads while a single trainer owns the tape.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "no_grad",
    "clear_tape",
    "tape_length",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "narrow",
    "concat",
    "tensor_sum",
    "mean",
    "sine_activation",
    "gelu",
    "sigmoid",
    "softmax",
    "layer_norm",
    "affine",
    "OptimizerState",
    "init_adam",
    "adam_step",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared where only finite values are legal."""


class Tensor:
    """Immutable dense array of float64 values, optionally tracked for grads."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal fast path: arr is a fresh array owned by the caller.
        _check_finite(arr)
        out = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        out.data = arr
        out.requires_grad = requires_grad
        out.grad = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError("non-finite value in tensor")


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

@dataclass
class _TapeEntry:
    out: Tensor
    parents: tuple[Tensor, ...]
    # Maps the gradient at `out` to gradients at each parent (None = no flow).
    pull: Callable[[np.ndarray], tuple]


_tape: list[_TapeEntry] = []
_grad_enabled: bool = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation / init paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def clear_tape() -> None:
    _tape.clear()


def tape_length() -> int:
    return len(_tape)


def _make(arr: np.ndarray, parents: Sequence[Tensor], pull) -> Tensor:
    tracked = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor._wrap(arr, requires_grad=tracked)
    if tracked:
        _tape.append(_TapeEntry(out, tuple(parents), pull))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor feeding ``loss``.

    The tape is consumed: it is cleared whether or not the sweep succeeds,
    matching the rebuild-per-forward-pass contract.
    """
    try:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        tensors: dict[int, Tensor] = {id(loss): loss}
        for entry in reversed(_tape):
            g = grads.get(id(entry.out))
            if g is None:
                continue
            for parent, pg in zip(entry.parents, entry.pull(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                tensors[key] = parent
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for key, t in tensors.items():
            if t.requires_grad:
                t.grad = grads[key]
    finally:
        clear_tape()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc

    def pull(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), pull)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from exc

    def pull(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), pull)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc

    def pull(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), pull)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents disagree, {a.shape} x {b.shape}")
    out = a.data @ b.data

    def pull(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), pull)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    out = np.transpose(a.data, axes).copy()
    inv = None if axes is None else tuple(np.argsort(axes))

    def pull(g):
        return (np.transpose(g, inv).copy(),)

    return _make(out, (a,), pull)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape).copy()

    def pull(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), pull)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of extent `length` along `axis`."""
    if not 0 <= start <= start + length <= a.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) outside axis of extent {a.shape[axis]}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index].copy()

    def pull(g):
        full = np.zeros(a.shape)
        full[index] = g
        return (full,)

    return _make(out, (a,), pull)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ShapeError("concat of an empty sequence")
    out = np.concatenate([p.data for p in parts], axis=axis)
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def pull(g):
        return tuple(piece for piece in np.split(g, splits, axis=axis))

    return _make(out, tuple(parts), pull)


def tensor_sum(a: Tensor) -> Tensor:
    out = np.array(a.data.sum())

    def pull(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), pull)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def pull(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _make(np.asarray(out), (a,), pull)


def sine_activation(a: Tensor, omega0: float) -> Tensor:
    """Elementwise sin(omega0 * x); omega0 tunes the represented frequency band."""
    omega0 = float(omega0)
    inner = omega0 * a.data
    out = np.sin(inner)

    def pull(g):
        return (g * omega0 * np.cos(inner),)

    return _make(out, (a,), pull)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out = x * cdf

    def pull(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return (g * (cdf + x * pdf),)

    return _make(out, (a,), pull)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def pull(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), pull)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def pull(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), pull)


def layer_norm(a: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gain.data * xhat + shift.data

    def pull(g):
        dgain = _unbroadcast(g * xhat, gain.shape)
        dshift = _unbroadcast(g, shift.shape)
        dxhat = g * gain.data
        # mu and var are both functions of x; their terms fold into the means.
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        return term * inv, dgain, dshift

    return _make(out, (a, gain, shift), pull)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Rows of x through weight (out x in) plus bias: x @ W^T + b."""
    return add(matmul(x, transpose(weight)), bias)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Bias-corrected first/second moment accumulators, one pair per parameter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params: dict[str, Tensor], lr: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros(p.shape)
        state.v[name] = np.zeros(p.shape)
    return state


def adam_step(params: dict[str, Tensor], state: OptimizerState,
              grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
    """One Adam update; returns fresh parameter tensors, mutates `state`."""
    state.step += 1
    t = state.step
    out: dict[str, Tensor] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for '{name}'")
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1 ** t)
        vhat = v / (1.0 - state.beta2 ** t)
        stepped = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        out[name] = Tensor._wrap(stepped, requires_grad=True)
    return out
