"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the momentum model needs are provided. Every op that
touches a ``requires_grad`` input is appended to the thread's current
:class:`Tape`; :func:`backward` replays the tape in reverse and clears it.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

# exp arguments of segment sums are clamped here to avoid overflow
SEGSUM_EXP_CLAMP = 80.0


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class DegenerateRowError(ValueError):
    pass


class Tape:
    """Ordered record of differentiable operations for one thread."""

    def __init__(self) -> None:
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], backward_fn: Callable) -> None:
        self.nodes.append((out, parents, backward_fn))

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


_local = threading.local()


def current_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


def grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_leaf")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _leaf: bool = True):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._leaf = _leaf
        self.grad = np.zeros_like(arr) if (requires_grad and _leaf) else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._leaf

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)


def _raise_not_scalar(t: Tensor):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == DTYPE else data.astype(DTYPE)
    out.requires_grad = needs
    out._leaf = False
    out.grad = None
    if needs:
        current_tape().record(out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every requires_grad leaf reachable from ``loss``."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = current_tape()
    if not loss.requires_grad:
        tape.clear()
        return
    loss.grad = np.ones_like(loss.data)
    try:
        for out, parents, fn in reversed(tape.nodes):
            g = out.grad
            if g is None:
                continue
            pgrads = fn(g)
            for p, pg in zip(parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=DTYPE), p.data.shape)
                if p.grad is None:
                    p.grad = pg.copy()
                else:
                    p.grad = p.grad + pg
            if not out._leaf:
                out.grad = None
    finally:
        tape.clear()


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(out, (a, b), lambda g: (g / bd, -g * out / bd))


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)
    xd = x.data
    return _make(xd**p, (x,), lambda g: (g * p * xd ** (p - 1),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,))


def matmul(a, b) -> Tensor:
    """Matrix product of rank-2 (or batched rank>2) tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul extent mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(
        ad @ bd,
        (a, b),
        lambda g: (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g),
    )


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with weight stored (in_features, out_features)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# -------------------------------------------------------------- elementwise


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    bad = np.argwhere(~(xd > 0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise DomainError(f"log of non-positive entry {xd[idx]!r} at index {idx}")
    return _make(np.log(xd), (x,), lambda g: (g / xd,))


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid_np(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out = np.logaddexp(0.0, xd)
    return _make(out, (x,), lambda g: (g * _sigmoid_np(xd),))


def silu(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    s = _sigmoid_np(xd)
    return _make(xd * s, (x,), lambda g: (g * (s + xd * s * (1.0 - s)),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    mask = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


ELEMENTWISE: dict[str, Callable] = {
    "exp": exp,
    "log": log,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "silu": silu,
    "negate": neg,
}


def apply_elementwise(x, fn: str, constant: float | None = None) -> Tensor:
    """Map ``x`` entrywise through one of the supported scalar functions.

    ``fn="scale"`` multiplies by ``constant``.
    """
    if fn == "scale":
        if constant is None:
            raise ValueError("scale-by-constant needs a constant")
        return scale(x, constant)
    try:
        return ELEMENTWISE[fn](x)
    except KeyError:
        raise ValueError(f"unknown elementwise function {fn!r}") from None


# ------------------------------------------------------------ shape & index


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} invalid for rank-{ndim} tensor")
    return axis % ndim


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(out), (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(tsum(x, axis, keepdims), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = x.data[index]
    advanced = isinstance(index, np.ndarray) or (
        isinstance(index, tuple) and any(isinstance(i, (np.ndarray, list)) for i in index)
    ) or isinstance(index, list)

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(np.array(out, dtype=DTYPE), (x,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    axis = _check_axis(axis, ts[0].ndim)
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(ts))
        )

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(np.stack([t.data for t in ts], axis=axis), ts, bw)


def pad_front(x, axis: int = -1) -> Tensor:
    """Prepend a single zero along ``axis``."""
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    zshape = list(x.shape)
    zshape[axis] = 1
    return concat([Tensor(np.zeros(zshape)), x], axis=axis)


# ------------------------------------------------------------- contractions

_EINSUM_PATHS: dict = {}


def _einsum_np(spec: str, *arrays: np.ndarray) -> np.ndarray:
    if len(arrays) <= 2:
        return np.einsum(spec, *arrays)
    key = (spec, tuple(a.shape for a in arrays))
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path = _EINSUM_PATHS[key] = np.einsum_path(spec, *arrays, optimize="optimal")[0]
    return np.einsum(spec, *arrays, optimize=path)


def einsum(spec: str, *operands) -> Tensor:
    """Differentiable einsum. Subscripts may not repeat within one operand."""
    ts = tuple(as_tensor(o) for o in operands)
    lhs, out_spec = spec.replace(" ", "").split("->")
    in_specs = lhs.split(",")
    if len(in_specs) != len(ts):
        raise ShapeError(f"einsum spec {spec!r} expects {len(in_specs)} operands, got {len(ts)}")
    for s in in_specs:
        if len(set(s)) != len(s):
            raise ShapeError(f"repeated subscript in operand {s!r}")
    data = _einsum_np(spec, *[t.data for t in ts])

    def bw(g):
        grads = []
        for i, t in enumerate(ts):
            if not t.requires_grad:
                grads.append(None)
                continue
            other_specs = [s for j, s in enumerate(in_specs) if j != i]
            others = [ts[j].data for j in range(len(ts)) if j != i]
            target = in_specs[i]
            avail = set(out_spec).union(*[set(s) for s in other_specs])
            present = "".join(c for c in target if c in avail)
            sub_spec = ",".join([out_spec] + other_specs) + "->" + present
            gi = _einsum_np(sub_spec, g, *others)
            if present != target:
                expand = [k for k, c in enumerate(target) if c not in avail]
                gi = np.broadcast_to(np.expand_dims(gi, expand), t.shape)
            grads.append(gi)
        return tuple(grads)

    return _make(np.asarray(data, dtype=DTYPE), ts, bw)


def cumsum(x, axis: int = -1) -> Tensor:
    """Inclusive prefix sums along ``axis``."""
    x = as_tensor(x)
    axis = _check_axis(axis, x.ndim)

    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _make(np.cumsum(x.data, axis=axis), (x,), bw)


def segsum_exp(a) -> Tensor:
    """Causal decay matrix of the last axis: ``L[i, j] = exp(a[j+1] + ... + a[i])``.

    Entries above the diagonal are exactly zero; the diagonal is one. Leading
    axes are batched, so input ``(..., n)`` yields ``(..., n, n)``.
    """
    a = as_tensor(a)
    ad = a.data
    n = ad.shape[-1]
    strict = np.tril(np.ones((n, n), dtype=bool), -1)
    causal = np.tril(np.ones((n, n), dtype=bool))
    rep = np.where(strict, ad[..., :, None], 0.0)  # rep[..., k, j] = a[k] if k > j
    seg = np.cumsum(rep, axis=-2)
    clamped = seg > SEGSUM_EXP_CLAMP
    out = np.where(causal, np.exp(np.minimum(seg, SEGSUM_EXP_CLAMP)), 0.0)

    def bw(g):
        gs = np.where(causal & ~clamped, g * out, 0.0)
        # d seg[i, j] / d a[k] = 1 iff j < k <= i
        rev = np.flip(np.cumsum(np.flip(gs, -2), axis=-2), -2)  # rev[k, j] = sum_{i>=k} gs[i, j]
        return (np.where(strict, rev, 0.0).sum(axis=-1),)

    return _make(out, (a,), bw)


def softmax_masked(logits, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get weight exactly 0."""
    x = as_tensor(logits)
    axis = _check_axis(axis, x.ndim)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise DegenerateRowError("softmax row has every entry masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw)


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p <= 0.0:
        return as_tensor(x)
    if rng is None:
        raise ContractError("dropout in training mode needs a seeded generator")
    keep = rng.random(as_tensor(x).shape) >= p
    return mul(x, keep / (1.0 - p))


# ---------------------------------------------------------------- checking


def grad_check(
    f: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between backward-pass and central-difference gradients.

    ``f`` maps the input tensor(s) to a scalar Tensor. The denominator of each
    entry is ``max(|analytic|, |numeric|, 1e-8)``. ``max_entries`` limits the
    number of (randomly chosen) entries probed per input.
    """
    xs = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    for x in xs:
        x.data = np.ascontiguousarray(x.data)
        x.requires_grad = True
        x.grad = np.zeros_like(x.data)
    loss = f(*xs)
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("non-finite loss in grad_check")
    backward(loss)
    analytic = [x.grad.copy() for x in xs]
    worst = 0.0
    with no_grad():
        for x, ga in zip(xs, analytic):
            flat = x.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
            for k in idx:
                orig = flat[k]
                flat[k] = orig + h
                fp = float(f(*xs).data.sum())
                flat[k] = orig - h
                fm = float(f(*xs).data.sum())
                flat[k] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise FloatingPointError("non-finite value during finite differences")
                num = (fp - fm) / (2 * h)
                an = ga.reshape(-1)[k]
                denom = max(abs(an), abs(num), 1e-8)
                worst = max(worst, abs(an - num) / denom)
    for x in xs:
        x.grad = np.zeros_like(x.data)
    return worst
