"""Reverse-mode gradient tape over dense float64 matrices.

A `Tape` records primitive operations as they execute (define-by-run) and
replays their adjoints in exact reverse order.  Values are always 2-D numpy
arrays; scalars are 1x1.  Constants may be passed as raw arrays and are
lifted to non-differentiable leaves.  ReLU uses the subgradient 0 at 0, so
gradient checks must avoid coordinates with exactly-zero preactivations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NumericError, ShapeError, SimError


class Var:
    """One node of the recorded computation."""

    __slots__ = ("tape", "value", "needs_grad", "grad", "name")

    def __init__(self, tape: "Tape", value: np.ndarray, needs_grad: bool, name: str | None = None):
        self.tape = tape
        self.value = value
        self.needs_grad = needs_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 value, got {self.value.shape}")
        return float(self.value[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(other, self)


class Tape:
    """Ordered record of operations plus the named-parameter registry."""

    def __init__(self):
        self._ops: list[tuple[Var, Callable[[np.ndarray], None]]] = []
        self._params: dict[str, Var] = {}

    def param(self, name: str, value, *, allow_existing: bool = False) -> Var:
        if name in self._params:
            if allow_existing:
                return self._params[name]
            raise SimError(f"parameter {name!r} registered twice")
        v = Var(self, _coerce(value), needs_grad=True, name=name)
        self._params[name] = v
        return v

    def const(self, value) -> Var:
        return Var(self, _coerce(value), needs_grad=False)

    def record(self, out: Var, backward_fn: Callable[[np.ndarray], None]) -> Var:
        if out.needs_grad:
            self._ops.append((out, backward_fn))
        return out

    @property
    def parameters(self) -> Mapping[str, Var]:
        return self._params


def _coerce(value) -> np.ndarray:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"values must be at most 2-D, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def _lift(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise SimError("operands recorded on different tapes")
        return x
    return tape.const(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise SimError("at least one operand must be a Var")


def _accum(v: Var, g: np.ndarray) -> None:
    if not v.needs_grad:
        return
    if v.grad is None:
        v.grad = g.copy()
    else:
        v.grad += g


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------


def add(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Var(t, a.value + b.value, a.needs_grad or b.needs_grad)

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return t.record(out, backward)


def sub(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    out = Var(t, a.value - b.value, a.needs_grad or b.needs_grad)

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return t.record(out, backward)


def mul(a, b) -> Var:
    """Elementwise product of same-shape matrices."""
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    out = Var(t, a.value * b.value, a.needs_grad or b.needs_grad)

    def backward(g):
        _accum(a, g * b.value)
        _accum(b, g * a.value)

    return t.record(out, backward)


def scale(a, s: float) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    out = Var(t, a.value * s, a.needs_grad)

    def backward(g):
        _accum(a, g * s)

    return t.record(out, backward)


def matmul(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = Var(t, a.value @ b.value, a.needs_grad or b.needs_grad)

    def backward(g):
        if a.needs_grad:
            _accum(a, g @ b.value.T)
        if b.needs_grad:
            _accum(b, a.value.T @ g)

    return t.record(out, backward)


def relu(a) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    mask = a.value > 0.0
    out = Var(t, np.where(mask, a.value, 0.0), a.needs_grad)

    def backward(g):
        _accum(a, g * mask)

    return t.record(out, backward)


def leaky_relu(a, slope: float) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    mask = a.value > 0.0
    out = Var(t, np.where(mask, a.value, slope * a.value), a.needs_grad)

    def backward(g):
        _accum(a, g * np.where(mask, 1.0, slope))

    return t.record(out, backward)


def concat_cols(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols row counts differ: {a.shape} vs {b.shape}")
    na = a.shape[1]
    out = Var(t, np.concatenate([a.value, b.value], axis=1), a.needs_grad or b.needs_grad)

    def backward(g):
        _accum(a, g[:, :na])
        _accum(b, g[:, na:])

    return t.record(out, backward)


def mean_rows(a) -> Var:
    """Column-wise mean over rows; returns a 1 x cols row."""
    t = _tape_of(a)
    a = _lift(t, a)
    n = a.shape[0]
    out = Var(t, a.value.mean(axis=0, keepdims=True), a.needs_grad)

    def backward(g):
        _accum(a, np.repeat(g / n, n, axis=0))

    return t.record(out, backward)


def sum_all(a) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    out = Var(t, np.array([[a.value.sum()]]), a.needs_grad)

    def backward(g):
        _accum(a, np.full(a.shape, g[0, 0]))

    return t.record(out, backward)


def frobenius_sq(a) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    out = Var(t, np.array([[float(np.sum(a.value * a.value))]]), a.needs_grad)

    def backward(g):
        _accum(a, 2.0 * g[0, 0] * a.value)

    return t.record(out, backward)


def gather_rows(a, idx: np.ndarray) -> Var:
    t = _tape_of(a)
    a = _lift(t, a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Var(t, a.value[idx], a.needs_grad)

    def backward(g):
        if a.needs_grad:
            buf = np.zeros(a.shape)
            np.add.at(buf, idx, g)
            _accum(a, buf)

    return t.record(out, backward)


def segment_sum(a, segments: np.ndarray, n_segments: int) -> Var:
    """Sum rows of a into n_segments buckets given per-row segment ids."""
    t = _tape_of(a)
    a = _lift(t, a)
    seg = np.asarray(segments, dtype=np.intp)
    if seg.shape[0] != a.shape[0]:
        raise ShapeError("segment ids must match row count")
    val = np.zeros((n_segments, a.shape[1]))
    np.add.at(val, seg, a.value)
    out = Var(t, val, a.needs_grad)

    def backward(g):
        _accum(a, g[seg])

    return t.record(out, backward)


def segment_softmax(scores, segments: np.ndarray, n_segments: int) -> Var:
    """Softmax of an E x 1 score column within each segment."""
    t = _tape_of(scores)
    s = _lift(t, scores)
    if s.shape[1] != 1:
        raise ShapeError("segment_softmax expects an E x 1 column")
    seg = np.asarray(segments, dtype=np.intp)
    col = s.value[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, seg, col)
    shifted = np.exp(col - seg_max[seg])
    denom = np.zeros(n_segments)
    np.add.at(denom, seg, shifted)
    alpha = shifted / denom[seg]
    out = Var(t, alpha.reshape(-1, 1), s.needs_grad)

    def backward(g):
        if s.needs_grad:
            gcol = g[:, 0]
            dot = np.zeros(n_segments)
            np.add.at(dot, seg, alpha * gcol)
            _accum(s, (alpha * (gcol - dot[seg])).reshape(-1, 1))

    return t.record(out, backward)


def scale_rows(a, w) -> Var:
    """Multiply each row of a (n x d) by the matching entry of w (n x 1)."""
    t = _tape_of(a, w)
    a, w = _lift(t, a), _lift(t, w)
    if w.shape != (a.shape[0], 1):
        raise ShapeError(f"row weights must be {a.shape[0]} x 1, got {w.shape}")
    out = Var(t, a.value * w.value, a.needs_grad or w.needs_grad)

    def backward(g):
        _accum(a, g * w.value)
        if w.needs_grad:
            _accum(w, np.sum(g * a.value, axis=1, keepdims=True))

    return t.record(out, backward)


def quad_trace(phi, coupling: np.ndarray) -> Var:
    """Tr(phi @ coupling @ phi.T) for a constant symmetric coupling matrix."""
    t = _tape_of(phi)
    phi = _lift(t, phi)
    A = 0.5 * (coupling + coupling.T)
    if A.shape != (phi.shape[1], phi.shape[1]):
        raise ShapeError(f"coupling {A.shape} does not match phi {phi.shape}")
    prod = phi.value @ A
    out = Var(t, np.array([[float(np.sum(prod * phi.value))]]), phi.needs_grad)

    def backward(g):
        _accum(phi, 2.0 * g[0, 0] * prod)

    return t.record(out, backward)


def bce_with_logits_masked(logits, targets: np.ndarray, mask: np.ndarray) -> Var:
    """Mean binary cross-entropy over unmasked tasks, from raw logits.

    Uses the overflow-safe form max(z, 0) - z * y + log(1 + exp(-|z|)).
    A fully masked row contributes 0 with zero gradient.
    """
    t = _tape_of(logits)
    z = _lift(t, logits)
    y = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    m = np.asarray(mask, dtype=bool).reshape(z.shape)
    n = int(m.sum())
    if n == 0:
        return t.const(np.zeros((1, 1)))
    zv = z.value
    per = np.maximum(zv, 0.0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    out = Var(t, np.array([[float(per[m].sum() / n)]]), z.needs_grad)

    def backward(g):
        pos = zv >= 0
        enz = np.exp(np.where(pos, -zv, zv))  # exp of a non-positive number
        sig = np.where(pos, 1.0 / (1.0 + enz), enz / (1.0 + enz))
        _accum(z, g[0, 0] * m * (sig - y) / n)

    return t.record(out, backward)


def squared_error_masked(preds, targets: np.ndarray, mask: np.ndarray) -> Var:
    """Mean squared error over unmasked tasks; fully masked rows give 0."""
    t = _tape_of(preds)
    p = _lift(t, preds)
    y = np.asarray(targets, dtype=np.float64).reshape(p.shape)
    m = np.asarray(mask, dtype=bool).reshape(p.shape)
    n = int(m.sum())
    if n == 0:
        return t.const(np.zeros((1, 1)))
    diff = p.value - y
    out = Var(t, np.array([[float((diff[m] ** 2).sum() / n)]]), p.needs_grad)

    def backward(g):
        _accum(p, g[0, 0] * 2.0 * m * diff / n)

    return t.record(out, backward)


# ---------------------------------------------------------------------------
# backward pass and the finite-difference oracle
# ---------------------------------------------------------------------------


def backward(tape: Tape, out: Var) -> dict[str, np.ndarray]:
    """Reverse sweep from a recorded scalar; returns gradients per parameter.

    Parameters never touched by the computation get zero gradients of the
    parameter's own shape.
    """
    if out.value.shape != (1, 1):
        raise ShapeError("backward requires a scalar (1x1) output")
    if out.tape is not tape:
        raise SimError("output was recorded on a different tape")
    for v, _ in tape._ops:
        v.grad = None
    for p in tape._params.values():
        p.grad = None
    out.grad = np.ones((1, 1))
    for v, backward_fn in reversed(tape._ops):
        if v.grad is not None:
            backward_fn(v.grad)
    grads = {}
    for name, p in tape._params.items():
        grads[name] = np.zeros(p.shape) if p.grad is None else p.grad.copy()
    return grads


def grad_of(grads: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    if name not in grads:
        raise KeyError(f"no gradient recorded for parameter {name!r}")
    return grads[name]


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str | None = None
    worst_index: tuple[int, int] | None = None
    flagged: list[tuple[str, tuple[int, int], float]] = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error


def finite_diff_gradcheck(
    build: Callable[[Mapping[str, np.ndarray]], Var],
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    *,
    flag_tol: float = 1e-4,
) -> GradCheckResult:
    """Compare tape gradients of build(params) against central differences.

    `build` must construct a fresh tape and return its scalar output; the
    finite-difference side only ever reads values, so it stays independent
    of the adjoint code.  The relative error per coordinate is
    |analytic - cd| / (|analytic| + |cd| + 1e-12); coordinates exceeding
    flag_tol are collected in `flagged` (non-smooth points show up there).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    out = build(base)
    if not np.isfinite(out.value[0, 0]):
        raise NumericError("objective is non-finite at the base point")
    analytic = backward(out.tape, out)

    def value_at(p):
        v = build(p).item()
        if not np.isfinite(v):
            raise NumericError("objective is non-finite at a perturbed point")
        return v

    result = GradCheckResult(max_rel_error=0.0)
    for name, a in base.items():
        g = analytic[name]
        it = np.nditer(a, flags=["multi_index"])
        while not it.finished:
            ij = it.multi_index
            perturbed = {k: (v.copy() if k == name else v) for k, v in base.items()}
            perturbed[name][ij] = a[ij] + step
            f_plus = value_at(perturbed)
            perturbed[name][ij] = a[ij] - step
            f_minus = value_at(perturbed)
            cd = (f_plus - f_minus) / (2.0 * step)
            ga = float(g[ij]) if g.ndim == 2 else float(g.reshape(a.shape)[ij])
            err = abs(ga - cd) / (abs(ga) + abs(cd) + 1e-12)
            if err > result.max_rel_error:
                result.max_rel_error = err
                result.worst_param = name
                result.worst_index = ij
            if err > flag_tol:
                result.flagged.append((name, ij, err))
            it.iternext()
    return result
