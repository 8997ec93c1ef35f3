"""Reverse-mode differentiation over numpy arrays.

A :class:`Var` wraps an array. While a :class:`Tape` is active every
primitive applied to a Var that depends on a taped parameter appends a node
holding its backward rule; :func:`grad` replays the tape in reverse.
Outside a tape the same code runs as plain numpy with no bookkeeping.

Input derivatives of a network (value, gradient, second and third partials)
are propagated forward through the layers with taped primitives
(:func:`net_fields`), so parameter gradients of PDE residual losses come
from one reverse sweep over that forward-mode computation.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericOverflowError
from .network import Mlp

_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    @contextlib.contextmanager
    def recording(self):
        prev = _active_tape()
        _state.tape = self
        try:
            yield self
        finally:
            _state.tape = prev


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "requires_grad")
    __array_ufunc__ = None  # make numpy defer to the reflected Var operators

    def __init__(self, value, parents=(), backward_fn=None, op="leaf", requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = requires_grad

    def __repr__(self):
        return f"Var(op={self.op}, shape={np.shape(self.value)})"

    def __float__(self):
        return float(self.value)

    @property
    def shape(self):
        return np.shape(self.value)

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, o):
        if isinstance(o, Var):
            raise TypeError("division by a Var is not a supported primitive")
        return mul(self, 1.0 / o)


def value_of(a):
    return a.value if isinstance(a, Var) else a


def _needs(*args) -> bool:
    return _active_tape() is not None and any(isinstance(a, Var) and a.requires_grad for a in args)


def _make(op, out, parents, backward_fn):
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(op)
    if _needs(*parents):
        v = Var(out, parents, backward_fn, op, requires_grad=True)
        _active_tape().nodes.append(v)
        return v
    return Var(out, op=op)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _accum(parent, g):
    if not (isinstance(parent, Var) and parent.requires_grad):
        return
    g = _unbroadcast(g, np.shape(parent.value))
    parent.grad = g if parent.grad is None else parent.grad + g


# -- primitives ----------------------------------------------------------------

def add(a, b):
    def back(g):
        _accum(a, g)
        _accum(b, g)

    return _make("add", value_of(a) + value_of(b), (a, b), back)


def sub(a, b):
    def back(g):
        _accum(a, g)
        _accum(b, -g)

    return _make("sub", value_of(a) - value_of(b), (a, b), back)


def mul(a, b):
    av, bv = value_of(a), value_of(b)

    def back(g):
        _accum(a, g * bv)
        _accum(b, g * av)

    return _make("mul", av * bv, (a, b), back)


def square(a):
    av = value_of(a)

    def back(g):
        _accum(a, 2.0 * g * av)

    return _make("square", av * av, (a,), back)


def sin(a):
    av = value_of(a)

    def back(g):
        _accum(a, g * np.cos(av))

    return _make("sin", np.sin(av), (a,), back)


def cos(a):
    av = value_of(a)

    def back(g):
        _accum(a, -g * np.sin(av))

    return _make("cos", np.cos(av), (a,), back)


def tanh(a):
    out = np.tanh(value_of(a))

    def back(g):
        _accum(a, g * (1.0 - out * out))

    return _make("tanh", out, (a,), back)


def matmul_t(h, w):
    """``h @ w.T`` for a batch ``h`` of shape (n, k) and weight ``w`` (m, k)."""
    hv, wv = value_of(h), value_of(w)

    def back(g):
        _accum(h, g @ wv)
        _accum(w, g.T @ hv)

    return _make("matmul", hv @ wv.T, (h, w), back)


def column(w, i):
    """Column ``i`` of a matrix as a (1, m) row, ready to broadcast over a batch."""
    wv = value_of(w)

    def back(g):
        if isinstance(w, Var) and w.requires_grad:
            full = np.zeros_like(wv)
            full[:, i] = np.sum(g, axis=0)
            _accum(w, full)

    return _make("column", wv[:, i][None, :], (w,), back)


def first_col(a):
    """Column 0 of an (n, m) array as an (n,) vector."""
    av = value_of(a)

    def back(g):
        full = np.zeros_like(av)
        full[:, 0] = g
        _accum(a, full)

    return _make("first_col", av[:, 0], (a,), back)


def mean(a):
    av = value_of(a)
    n = av.size

    def back(g):
        _accum(a, np.full_like(av, g / n))

    return _make("mean", np.asarray(np.mean(av)), (a,), back)


def total(a):
    av = value_of(a)

    def back(g):
        _accum(a, np.full_like(av, g))

    return _make("sum", np.asarray(np.sum(av)), (a,), back)


def const(x) -> Var:
    return Var(np.asarray(x, dtype=np.float64), op="const")


# -- activations with all input derivatives ------------------------------------

def activation_stack(kind: str, z, order: int):
    """``[s(z), s'(z), ..., s^(order)(z)]`` built from taped primitives."""
    if kind == "sine":
        s = sin(z)
        if order == 0:
            return [s]
        c = cos(z)
        return [s, c, -s, -c][: order + 1]
    t = tanh(z)
    if order == 0:
        return [t]
    sech2 = 1.0 - square(t)
    out = [t, sech2]
    if order >= 2:
        out.append(-2.0 * t * sech2)
    if order >= 3:
        out.append(-2.0 * sech2 * (1.0 - 3.0 * square(t)))
    return out


# -- networks ------------------------------------------------------------------

@dataclass
class TapedMlp:
    """An :class:`Mlp` whose parameters are :class:`Var` leaves."""

    activation: str
    weights: list
    biases: list
    source: Mlp | None = None

    @property
    def input_dim(self) -> int:
        return value_of(self.weights[0]).shape[1]


def taped(net: Mlp, requires_grad: bool = True) -> TapedMlp:
    ws = [Var(w, requires_grad=requires_grad, op="param") for w in net.weights]
    bs = [Var(b, requires_grad=requires_grad, op="param") for b in net.biases]
    return TapedMlp(net.activation, ws, bs, net)


def as_taped(net) -> TapedMlp:
    return net if isinstance(net, TapedMlp) else taped(net, requires_grad=False)


@dataclass
class Fields:
    """Network value and input partials over a batch of points.

    ``grad[i]`` is du/dx_i, ``hess[(i, j)]`` (i <= j) the mixed second partial,
    ``third[i]`` the pure third partial along axis i. Entries may be Vars or
    plain arrays; only the requested ones are present.
    """

    u: object
    grad: dict = field(default_factory=dict)
    hess: dict = field(default_factory=dict)
    third: dict = field(default_factory=dict)

    def h(self, i, j):
        return self.hess[(min(i, j), max(i, j))]


def _madd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _mmul(a, b):
    if a is None or b is None:
        return None
    return a * b


def net_fields(net, x: np.ndarray, grad_axes=(), hess_pairs=(), third_axes=()) -> Fields:
    """Forward-propagate the requested input partials through ``net``.

    Works on a :class:`TapedMlp` (differentiable w.r.t. its parameters) or a
    plain :class:`Mlp`. ``x`` has shape (n, d).
    """
    tn = as_taped(net)
    hess_pairs = sorted({(min(i, j), max(i, j)) for i, j in hess_pairs})
    grad_axes = sorted(set(grad_axes) | {i for p in hess_pairs for i in p} | set(third_axes))
    order = 3 if third_axes else 2 if hess_pairs else 1 if grad_axes else 0

    w1 = tn.weights[0]
    z = add(matmul_t(const(x), w1), tn.biases[0])
    dz = {i: column(w1, i) for i in grad_axes}
    d2z = {p: None for p in hess_pairs}
    d3z = {i: None for i in third_axes}
    n_layers = len(tn.weights)
    for layer in range(1, n_layers):
        s = activation_stack(tn.activation, z, order)
        h = s[0]
        dh = {i: s[1] * dz[i] for i in grad_axes}
        d2h = {}
        for (i, j) in hess_pairs:
            d2h[(i, j)] = _madd(s[2] * dz[i] * dz[j], _mmul(s[1], d2z[(i, j)]))
        d3h = {}
        for i in third_axes:
            zi = dz[i]
            term = s[3] * zi * zi * zi
            zii = d2z.get((i, i))
            if zii is not None:
                term = term + 3.0 * s[2] * zi * zii
            d3h[i] = _madd(term, _mmul(s[1], d3z[i]))
        w, b = tn.weights[layer], tn.biases[layer]
        z = add(matmul_t(h, w), b)
        dz = {i: matmul_t(v, w) for i, v in dh.items()}
        d2z = {p: matmul_t(v, w) for p, v in d2h.items()}
        d3z = {i: matmul_t(v, w) for i, v in d3h.items()}
    n = x.shape[0]

    def out(v):
        if v is None:
            return Var(np.zeros(n), op="const")
        if value_of(v).shape[0] != n:
            # first-layer direction that never met an activation: a (1, m) row
            v = mul(v, np.ones((n, 1)))
        return first_col(v)

    return Fields(
        u=first_col(z),
        grad={i: out(dz[i]) for i in grad_axes},
        hess={p: out(d2z[p]) for p in hess_pairs},
        third={i: out(d3z[i]) for i in third_axes},
    )


# -- gradients -------------------------------------------------------------------

@dataclass
class ParamGradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)


def grad(loss_builder, *nets: Mlp):
    """Loss value and per-network parameter gradients.

    ``loss_builder`` receives one :class:`TapedMlp` per input network and must
    return a scalar :class:`Var` (or a float when the loss ignores them).
    """
    tape = Tape()
    tnets = [taped(n) for n in nets]
    with tape.recording():
        loss = loss_builder(*tnets)
    if not isinstance(loss, Var):
        value = float(loss)
        zeros = [ParamGradient([np.zeros_like(w) for w in n.weights], [np.zeros_like(b) for b in n.biases]) for n in nets]
        return value, zeros
    if not np.isfinite(loss.value):
        raise NumericOverflowError(loss.op)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is not None and node.backward_fn is not None:
            node.backward_fn(node.grad)
    out = []
    for tn in tnets:
        gw = [w.grad if w.grad is not None else np.zeros_like(w.value) for w in tn.weights]
        gb = [b.grad if b.grad is not None else np.zeros_like(b.value) for b in tn.biases]
        out.append(ParamGradient(gw, gb))
    return float(loss.value), out


def evaluate(loss_builder, *nets: Mlp) -> float:
    """Run ``loss_builder`` without recording."""
    return float(value_of(loss_builder(*[as_taped(n) for n in nets])))


def check_gradient(loss_builder, net: Mlp, step: float = 1e-6, floor: float = 1e-4) -> float:
    """Worst per-coordinate relative error of :func:`grad` against central differences.

    The relative error of coordinate k is ``|g_k - fd_k| / max(|g_k|, |fd_k|, floor)``.
    """
    if not 0.0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    _, (g,) = grad(loss_builder, net)
    ga = g.flat()
    theta = net.flat()
    worst = 0.0
    for k in range(theta.size):
        tp = theta.copy()
        tp[k] += step
        tm = theta.copy()
        tm[k] -= step
        fd = (evaluate(loss_builder, net.with_flat(tp)) - evaluate(loss_builder, net.with_flat(tm))) / (2 * step)
        err = abs(ga[k] - fd) / max(abs(ga[k]), abs(fd), floor)
        worst = max(worst, err)
    return worst
