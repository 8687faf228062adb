"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records primitive operations in forward order; ``backward`` walks
it once in reverse.  Values are immutable after the forward pass and
gradients are accumulated into ``Value.grad``.  Only the operations the
temporal encoder and the detection heads actually need are provided: affine
maps, a fused GRU cell, elementwise nonlinearities, concatenation, squared
distances and reductions.  Everything is float64; desk-scale problem sizes
make precision cheaper than debugging drift.

Recording happens only inside a ``with Tape() as tape:`` block.  Outside of
one, the same functions run forward-only, which is the evaluation path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class TapeError(RuntimeError):
    """Raised on tape misuse (non-scalar root, repeated backward, ...)."""


class Value:
    """A float64 array (scalar, vector or matrix) in the computation graph."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


@dataclass
class _Node:
    out: Value
    parents: Tuple[Value, ...]
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of primitive operations; parents always precede children."""

    _stack: List["Tape"] = []

    def __init__(self):
        self.nodes: List[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.pop()

    @staticmethod
    def current() -> Optional["Tape"]:
        return Tape._stack[-1] if Tape._stack else None


def _record(out: Value, parents: Tuple[Value, ...], backward_fn) -> Value:
    tape = Tape.current()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.nodes.append(_Node(out, parents, backward_fn))
    return out


def _accumulate(v: Value, g: np.ndarray) -> None:
    if g.shape != v.data.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match value shape {v.data.shape}")
    if v.grad is None:
        v.grad = np.zeros_like(v.data)
    v.grad += g


def backward(tape: Tape, root: Value) -> None:
    """Reverse-mode sweep from a scalar root; each node is visited once.

    Gradients accumulate into ``Value.grad`` of every ``requires_grad``
    leaf reachable from the root.  A tape can be walked only once; rerun
    the forward pass to differentiate again.
    """
    if root.ndim != 0:
        raise TapeError(f"backward root must be scalar, got shape {root.shape}")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward call")
    tape.consumed = True
    if not root.requires_grad:
        return
    _accumulate(root, np.ones(()))
    for node in reversed(tape.nodes):
        gout = node.out.grad
        if gout is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(gout)):
            if g is not None and parent.requires_grad:
                _accumulate(parent, g)


def _as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def constant(data) -> Value:
    return Value(data, requires_grad=False)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # reduce a broadcast [B,n] gradient back to [n] (or scalar) operands
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Value:
    a, b = _as_value(a), _as_value(b)
    out = Value(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Value:
    a, b = _as_value(a), _as_value(b)
    out = Value(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Value:
    a, b = _as_value(a), _as_value(b)
    out = Value(a.data * b.data)
    return _record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Value:
    a, b = _as_value(a), _as_value(b)
    out = Value(a.data / b.data)
    return _record(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def scale(a: Value, s: float) -> Value:
    out = Value(a.data * s)
    return _record(out, (a,), lambda g: (g * s,))


def log(a: Value) -> Value:
    out = Value(np.log(a.data))
    return _record(out, (a,), lambda g: (g / a.data,))


def square(a: Value) -> Value:
    out = Value(a.data * a.data)
    return _record(out, (a,), lambda g: (2.0 * g * a.data,))


def maximum(a: Value, floor: float) -> Value:
    """Elementwise max(a, floor); ties route the gradient to ``a``."""
    out = Value(np.maximum(a.data, floor))
    mask = a.data >= floor
    return _record(out, (a,), lambda g: (g * mask,))


def tanh(a: Value) -> Value:
    y = K.tanh_fwd(a.data)
    out = Value(y)
    return _record(out, (a,), lambda g: (K.tanh_bwd(g, y),))


def softplus(a) -> Value:
    """log(1 + exp(a)), overflow-safe (identity beyond a > 30); output > 0."""
    a = _as_value(a)
    out = Value(K.softplus_fwd(a.data))
    return _record(out, (a,), lambda g: (K.softplus_bwd(g, a.data),))


# ---------------------------------------------------------------------------
# linear algebra

def linear(x, weight, bias) -> Value:
    """weight @ x + bias for a vector x; rows of x are mapped independently
    when x is a batch matrix [B, n]."""
    x, weight, bias = _as_value(x), _as_value(weight), _as_value(bias)
    if weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(f"weight must be 2-D and bias 1-D, got {weight.shape} and {bias.shape}")
    if x.shape[-1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ShapeError(
            f"linear shapes do not conform: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out = Value(K.affine_fwd(x.data, weight.data, bias.data))

    def bwd(g):
        gx, gw, gb = K.affine_bwd(g, x.data, weight.data)
        return gx, gw, gb

    return _record(out, (x, weight, bias), bwd)


def matmul(a, b) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    out = Value(a.data @ b.data)
    return _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def concat(a, b) -> Value:
    """Vector concatenation a ⊕ b; the gradient splits back."""
    a, b = _as_value(a), _as_value(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"concat expects vectors, got {a.shape} and {b.shape}")
    out = Value(np.concatenate([a.data, b.data]))
    n = a.shape[0]
    return _record(out, (a, b), lambda g: (g[:n], g[n:]))


def rowcat(parts: Sequence[Value]) -> Value:
    """Concatenate [B, n_i] blocks along the feature axis."""
    parts = [_as_value(p) for p in parts]
    if any(p.ndim != 2 for p in parts):
        raise ShapeError("rowcat expects 2-D blocks")
    out = Value(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _record(out, tuple(parts), bwd)


def sq_dist(a, b) -> Value:
    """Squared Euclidean distance Σ_m (a_m - b_m)² between two vectors."""
    a, b = _as_value(a), _as_value(b)
    if a.shape != b.shape:
        raise ShapeError(f"sq_dist shapes differ: {a.shape} vs {b.shape}")
    d = a.data - b.data
    out = Value(np.asarray(np.dot(d, d)))
    return _record(out, (a, b), lambda g: (2.0 * g * d, -2.0 * g * d))


def row_sq_dist(a, c) -> Value:
    """Per-row squared distance ‖a_k − c‖² of batch rows to a single vector."""
    a, c = _as_value(a), _as_value(c)
    if a.ndim != 2 or c.ndim != 1 or a.shape[1] != c.shape[0]:
        raise ShapeError(f"row_sq_dist shapes do not conform: {a.shape} vs {c.shape}")
    d = a.data - c.data
    out = Value((d * d).sum(axis=1))
    return _record(out, (a, c), lambda g: (2.0 * g[:, None] * d, -2.0 * (g[:, None] * d).sum(axis=0)))


def vsum(a: Value) -> Value:
    out = Value(np.asarray(a.data.sum()))
    return _record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Value) -> Value:
    n = a.data.size
    out = Value(np.asarray(a.data.mean()))
    return _record(out, (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def mean_last(a: Value) -> Value:
    """Mean over the last axis: [B, n] -> [B]."""
    if a.ndim != 2:
        raise ShapeError(f"mean_last expects a matrix, got shape {a.shape}")
    n = a.shape[1]
    out = Value(a.data.mean(axis=1))
    return _record(out, (a,), lambda g: (np.repeat(g[:, None], n, axis=1) / n,))


# ---------------------------------------------------------------------------
# fused GRU cell

@dataclass
class GruParams:
    """The nine parameter arrays of a GRU cell (update, reset, candidate)."""

    wz: Value
    uz: Value
    bz: Value
    wr: Value
    ur: Value
    br: Value
    wh: Value
    uh: Value
    bh: Value

    @classmethod
    def init(cls, d: int, m: int, rng: np.random.Generator) -> "GruParams":
        def mat(rows, cols):
            a = np.sqrt(6.0 / (rows + cols))
            return Value(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)

        return cls(
            wz=mat(d, m), uz=mat(d, d), bz=Value(np.zeros(d), requires_grad=True),
            wr=mat(d, m), ur=mat(d, d), br=Value(np.zeros(d), requires_grad=True),
            wh=mat(d, m), uh=mat(d, d), bh=Value(np.zeros(d), requires_grad=True),
        )

    def values(self) -> List[Value]:
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wh, self.uh, self.bh]


def gru_cell(h_prev, msg, params: GruParams) -> Value:
    """Standard GRU update: reset gate, update gate, candidate, convex blend.

    h_prev may be [d] or a batch [B, d] (msg shaped to match).  The whole
    cell is one tape node with an analytic backward.
    """
    h_prev, msg = _as_value(h_prev), _as_value(msg)
    d = params.uz.shape[0]
    if h_prev.shape[-1] != d or msg.shape[-1] != params.wz.shape[1]:
        raise ShapeError(
            f"gru_cell shapes do not conform: h {h_prev.shape}, msg {msg.shape}, "
            f"wz {params.wz.shape}, uz {params.uz.shape}"
        )
    p = params
    hn, z, r, hbar = K.gru_fwd(
        h_prev.data, msg.data,
        p.wz.data, p.uz.data, p.bz.data,
        p.wr.data, p.ur.data, p.br.data,
        p.wh.data, p.uh.data, p.bh.data,
    )
    out = Value(hn)

    def bwd(g):
        return K.gru_bwd(
            g, h_prev.data, msg.data, z, r, hbar,
            p.wz.data, p.uz.data, p.wr.data, p.ur.data, p.wh.data, p.uh.data,
        )

    parents = (h_prev, msg, p.wz, p.uz, p.bz, p.wr, p.ur, p.br, p.wh, p.uh, p.bh)
    return _record(out, parents, bwd)


def time_encode_values(dt: np.ndarray, omega: Value, phi: Value) -> Value:
    """Harmonic time encoding cos(ω·Δt + φ); dt is data, ω and φ trainable.

    dt scalar -> vector [d_t]; dt [B] -> matrix [B, d_t].
    """
    dt = np.asarray(dt, dtype=np.float64)
    out = Value(K.time_encode_fwd(dt, omega.data, phi.data))

    def bwd(g):
        gom, gph = K.time_encode_bwd(g, dt, omega.data, phi.data)
        return gom, gph

    return _record(out, (omega, phi), bwd)


# ---------------------------------------------------------------------------
# optimizer

class OptimizerState:
    """Adam with decoupled weight decay and bias correction.

    Decay is applied only to parameters whose ``decay`` flag is set (encoder
    weights), never to the hypersphere center.  The decay realizes the
    quadratic penalty on the encoder parameters without entering the
    reported loss value.
    """

    def __init__(self, params: Sequence[Value], lr: float, weight_decay: float = 0.0,
                 decay_mask: Optional[Sequence[bool]] = None,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.decay_mask = list(decay_mask) if decay_mask is not None else [True] * len(self.params)
        if len(self.decay_mask) != len(self.params):
            raise ValueError("decay_mask length does not match params")
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self, [p.data for p in self.params], grads)


def adam_step(state: OptimizerState, params: Sequence[np.ndarray],
              grads: Sequence[np.ndarray]) -> Sequence[np.ndarray]:
    """One adaptive-moment update, in place; returns the updated arrays."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param shape {p.shape} vs grad shape {g.shape}")
        if state.weight_decay and state.decay_mask[i]:
            p -= state.lr * state.weight_decay * p
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / (1.0 - b1 ** t)
        vhat = state.v[i] / (1.0 - b2 ** t)
        p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params


def clip_global_norm(params: Sequence[Value], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return float(norm)


# ---------------------------------------------------------------------------
# finite-difference checking

def grad_check(f: Callable[[np.ndarray], Tuple[float, np.ndarray]],
               x: np.ndarray, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` maps a flat parameter vector to (scalar value, analytic gradient).
    The relative error uses the safe denominator max(|analytic|, |numeric|,
    1e-8) per coordinate.
    """
    x = np.asarray(x, dtype=np.float64)
    _, analytic = f(x)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ShapeError(f"analytic gradient shape {analytic.shape} vs input {x.shape}")
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        fp, _ = f(xp)
        xm = x.copy()
        xm[i] -= eps
        fm, _ = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite evaluation near coordinate {i}")
        numeric = (fp - fm) / (2.0 * eps)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def value_fn_to_checked(fn: Callable[[Value], Value]):
    """Adapt a Value -> scalar Value function to the grad_check interface."""

    def f(x: np.ndarray):
        with Tape() as tape:
            v = Value(x.copy(), requires_grad=True)
            out = fn(v)
            backward(tape, out)
        grad = v.grad if v.grad is not None else np.zeros_like(x)
        return float(out.data), grad.copy()

    return f
