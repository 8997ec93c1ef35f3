"""Dense MLPs with smooth activations and their input derivatives.

``u(x) = W^L s(W^{L-1} s(... s(W^1 x + b^1) ...) + b^{L-1}) + b^L`` with
``W^l`` of shape ``m_l x m_{l-1}``, ``m_0 = d`` and ``m_L = 1``.

Input derivatives come two ways: closed-form matrix products for the
gradient and Hessian, and truncated Taylor jets along one input axis (up to
third order). The two are independent and cross-check each other.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, ShapeError, UnsupportedOrderError

ACTIVATIONS = ("sine", "tanh")
MAX_JET_ORDER = 3


def activation_derivs(kind: str, z: np.ndarray, order: int = 3) -> list[np.ndarray]:
    """``[s(z), s'(z), ..., s^(order)(z)]`` for the named activation."""
    if kind == "sine":
        s, c = np.sin(z), np.cos(z)
        out = [s, c, -s, -c]
    elif kind == "tanh":
        t = np.tanh(z)
        sech2 = 1.0 - t * t
        out = [t, sech2, -2.0 * t * sech2, -2.0 * sech2 * (1.0 - 3.0 * t * t)]
    else:
        raise InvalidInputError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return out[: order + 1]


@dataclass
class Mlp:
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        self.weights = [np.asarray(w, dtype=np.float64).reshape(np.shape(w)) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias vector per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            if w.ndim != 2:
                raise ShapeError(f"layer {l}: weight must be 2-D, got {w.shape}")
            if b.shape[0] != w.shape[0]:
                raise ShapeError(f"layer {l}: bias length {b.shape[0]} != rows {w.shape[0]}")
            if l > 1 and w.shape[1] != self.weights[l - 2].shape[0]:
                raise ShapeError(f"layer {l}: {w.shape[1]} inputs but previous layer has {self.weights[l - 2].shape[0]} outputs")
        if self.weights[-1].shape[0] != 1:
            raise ShapeError("output layer must have a single unit")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def max_width(self) -> int:
        return max(self.dims)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "Mlp":
        ws, bs, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[k : k + w.size].reshape(w.shape).copy())
            k += w.size
            bs.append(theta[k : k + b.size].copy())
            k += b.size
        if k != theta.size:
            raise ShapeError(f"parameter vector has {theta.size} entries, network needs {k}")
        return Mlp(self.activation, ws, bs)

    def augmented_weights(self) -> list[np.ndarray]:
        """Per-layer ``[W | b]`` matrices (the bias folded in as an extra input column)."""
        return [np.hstack([w, b[:, None]]) for w, b in zip(self.weights, self.biases)]


def init_mlp(dims: list[int], activation: str, rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    if len(dims) < 2 or dims[-1] != 1:
        raise ShapeError(f"dims must run from input width to 1, got {dims}")
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Mlp(activation, ws, bs)


def mlp_dims(input_dim: int, depth: int, width: int) -> list[int]:
    """Widths for a depth-``depth`` net with ``depth - 1`` hidden layers."""
    return [input_dim] + [width] * (depth - 1) + [1]


def _as_points(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    if pts.ndim != 2 or pts.shape[1] != net.input_dim:
        raise ShapeError(f"expected points of dimension {net.input_dim}, got shape {x.shape}")
    return pts, single


def _preactivations(net: Mlp, pts: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    zs = []
    h = pts
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w.T + b
        zs.append(z)
        h = activation_derivs(net.activation, z, 0)[0]
    out = h @ net.weights[-1].T + net.biases[-1]
    return zs, out[:, 0]


def forward(net: Mlp, x):
    pts, single = _as_points(net, x)
    _, u = _preactivations(net, pts)
    return float(u[0]) if single else u


def input_gradient(net: Mlp, x):
    """``W^L Phi^{L-1} W^{L-1} ... Phi^1 W^1`` with ``Phi^l = diag(s'(z^l))``."""
    pts, single = _as_points(net, x)
    zs, _ = _preactivations(net, pts)
    jac = np.broadcast_to(net.weights[0], (pts.shape[0],) + net.weights[0].shape)
    for l, z in enumerate(zs):
        phi = activation_derivs(net.activation, z, 1)[1]
        jac = np.einsum("ok,nki->noi", net.weights[l + 1], phi[:, :, None] * jac)
    g = jac[:, 0, :]
    return g[0] if single else g


def input_hessian(net: Mlp, x):
    """Sum over hidden layers of ``a^l diag(s''(z^l) * J^l e_j) J^l``.

    ``J^l = W^l Phi^{l-1} ... Phi^1 W^1`` is the Jacobian of the layer-``l``
    pre-activation and ``a^l = W^L Phi^{L-1} ... W^{l+1}`` the output's
    sensitivity to the layer-``l`` activation.
    """
    pts, single = _as_points(net, x)
    zs, _ = _preactivations(net, pts)
    n = pts.shape[0]
    derivs = [activation_derivs(net.activation, z, 2) for z in zs]
    jacs = []
    jac = np.broadcast_to(net.weights[0], (n,) + net.weights[0].shape)
    for l in range(len(zs)):
        jacs.append(jac)
        jac = np.einsum("ok,nki->noi", net.weights[l + 1], derivs[l][1][:, :, None] * jac)
    hess = np.zeros((n, net.input_dim, net.input_dim))
    sens = np.broadcast_to(net.weights[-1][0], (n, net.weights[-1].shape[1]))
    for l in range(len(zs) - 1, -1, -1):
        coef = sens * derivs[l][2]
        hess += np.einsum("nk,nki,nkj->nij", coef, jacs[l], jacs[l])
        if l > 0:
            sens = (sens * derivs[l][1]) @ net.weights[l]
    hess = 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
    return hess[0] if single else hess


@dataclass
class Jet3:
    """Derivatives (not scaled Taylor coefficients) of ``t -> f(x + t e)`` at 0."""

    value: float | np.ndarray
    d1: float | np.ndarray = 0.0
    d2: float | np.ndarray = 0.0
    d3: float | np.ndarray = 0.0

    @classmethod
    def variable(cls, value):
        return cls(value, 1.0, 0.0, 0.0)

    def __add__(self, other):
        if not isinstance(other, Jet3):
            return Jet3(self.value + other, self.d1, self.d2, self.d3)
        return Jet3(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2, self.d3 + other.d3)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.value, -self.d1, -self.d2, -self.d3)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            return Jet3(self.value * other, self.d1 * other, self.d2 * other, self.d3 * other)
        a, b = self, other
        return Jet3(
            a.value * b.value,
            a.d1 * b.value + a.value * b.d1,
            a.d2 * b.value + 2 * a.d1 * b.d1 + a.value * b.d2,
            a.d3 * b.value + 3 * a.d2 * b.d1 + 3 * a.d1 * b.d2 + a.value * b.d3,
        )

    __rmul__ = __mul__

    def compose(self, kind: str) -> "Jet3":
        """Jet of ``s(f)`` by Faa di Bruno to third order."""
        s0, s1, s2, s3 = activation_derivs(kind, np.asarray(self.value), 3)
        f1, f2, f3 = self.d1, self.d2, self.d3
        return Jet3(
            s0,
            s1 * f1,
            s2 * f1 * f1 + s1 * f2,
            s3 * f1 * f1 * f1 + 3 * s2 * f1 * f2 + s1 * f3,
        )


def directional_jet(net: Mlp, x, axis: int, order: int = 3) -> Jet3:
    """Derivatives of ``t -> u(x + t e_axis)`` at ``t = 0`` up to ``order``."""
    if not 1 <= order <= MAX_JET_ORDER:
        raise UnsupportedOrderError(f"jet order must be in 1..{MAX_JET_ORDER}, got {order}")
    pts, single = _as_points(net, x)
    if not 0 <= axis < net.input_dim:
        raise ShapeError(f"axis {axis} out of range for input dimension {net.input_dim}")
    n = pts.shape[0]
    w1 = net.weights[0]
    z = Jet3(pts @ w1.T + net.biases[0], np.broadcast_to(w1[:, axis], (n, w1.shape[0])), 0.0, 0.0)
    for w, b in zip(net.weights[1:], net.biases[1:]):
        h = z.compose(net.activation)
        z = Jet3(h.value @ w.T + b, _lin(h.d1, w), _lin(h.d2, w), _lin(h.d3, w))
    comps = [z.value[:, 0], _col(z.d1, n), _col(z.d2, n), _col(z.d3, n)]
    for k in range(order + 1, 4):
        comps[k] = np.zeros(n)
    if single:
        comps = [float(c[0]) for c in comps]
    return Jet3(*comps)


def _lin(a, w):
    if np.isscalar(a):
        return 0.0
    return a @ w.T


def _col(a, n):
    if np.isscalar(a):
        return np.full(n, float(a))
    return a[:, 0]


# -- serialization -----------------------------------------------------------

def to_dict(net: Mlp) -> dict:
    return {
        "activation": net.activation,
        "dims": net.dims,
        "layers": [{"w": w.ravel().tolist(), "b": b.tolist()} for w, b in zip(net.weights, net.biases)],
    }


def from_dict(doc: dict) -> Mlp:
    try:
        dims = [int(v) for v in doc["dims"]]
        layers = doc["layers"]
        if len(layers) != len(dims) - 1:
            raise ShapeError(f"{len(layers)} layers but dims describe {len(dims) - 1}")
        ws, bs = [], []
        for l, layer in enumerate(layers):
            w = np.asarray(layer["w"], dtype=np.float64)
            if w.size != dims[l + 1] * dims[l]:
                raise ShapeError(f"layer {l + 1}: {w.size} weights, expected {dims[l + 1] * dims[l]}")
            ws.append(w.reshape(dims[l + 1], dims[l]))
            bs.append(np.asarray(layer["b"], dtype=np.float64))
        net = Mlp(doc["activation"], ws, bs)
    except ShapeError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed network document: {exc}") from exc
    if not all(np.all(np.isfinite(w)) for w in net.weights + net.biases):
        raise ParseError("network document holds non-finite parameters")
    return net


def save_mlp(net: Mlp, path) -> None:
    Path(path).write_text(json.dumps(to_dict(net)) + "\n")


def load_mlp(path) -> Mlp:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from exc
    return from_dict(doc)
