"""Benchmark PDE problems, the linear second-order operator form, and reference grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .autodiff import Fields
from .domain import Box, heat_domain, kdv_domain, poisson_domain
from .errors import CoverageError, DomainError, InvalidInputError, NumericError, ParseError

PI = math.pi


def _coef(value, x: np.ndarray, shape):
    v = value(x) if callable(value) else value
    return np.broadcast_to(np.asarray(v, dtype=np.float64), (x.shape[0],) + shape)


@dataclass(frozen=True)
class SecondOrderOperator:
    """``Lu = sum A_ab u_ab + sum b_a u_a + c u`` with coefficients bounded by ``K``.

    Each coefficient is a constant or a callable of the (n, d) point batch.
    """

    A: object
    b: object
    c: object
    K: float
    dim: int

    def coefficients(self, x: np.ndarray):
        d = self.dim
        return _coef(self.A, x, (d, d)), _coef(self.b, x, (d,)), _coef(self.c, x, ())

    def pattern(self, x: np.ndarray):
        A, b, c = self.coefficients(x)
        pairs = [(i, j) for i in range(self.dim) for j in range(i, self.dim)
                 if np.any(A[:, i, j] != 0) or np.any(A[:, j, i] != 0)]
        axes = [i for i in range(self.dim) if np.any(b[:, i] != 0)]
        return pairs, axes, bool(np.any(c != 0))

    def validate(self, x: np.ndarray, tol: float = 1e-12) -> None:
        A, b, c = self.coefficients(x)
        if np.max(np.abs(A - np.transpose(A, (0, 2, 1)))) > tol:
            raise InvalidInputError("second-order coefficient matrix A is not symmetric")
        worst = max(float(np.max(np.abs(A))), float(np.max(np.abs(b))), float(np.max(np.abs(c))))
        if worst > self.K + tol:
            raise InvalidInputError(f"coefficient magnitude {worst} exceeds declared K={self.K}")

    def apply_fields(self, x: np.ndarray, f: Fields):
        A, b, c = self.coefficients(x)
        out = None
        for i in range(self.dim):
            for j in range(i, self.dim):
                a = A[:, i, j] + (A[:, j, i] if i != j else 0.0)
                if np.any(a != 0):
                    term = a * f.h(i, j)
                    out = term if out is None else out + term
        for i in range(self.dim):
            if np.any(b[:, i] != 0):
                term = b[:, i] * f.grad[i]
                out = term if out is None else out + term
        if np.any(c != 0):
            out = c * f.u if out is None else out + c * f.u
        return out if out is not None else 0.0 * f.u


def apply_operator(op: SecondOrderOperator, u: float, grad, hess, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    A, b, c = op.coefficients(x)
    return float(np.sum(A[0] * np.asarray(hess)) + np.dot(b[0], np.asarray(grad)) + c[0] * u)


# -- reference grids -----------------------------------------------------------

@dataclass
class ReferenceGrid:
    """Values on a tensor grid ``axes[0] x axes[1]`` (first axis major), bilinear in between."""

    axes: tuple[np.ndarray, np.ndarray]
    values: np.ndarray
    names: tuple[str, str] = ("x", "t")

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=np.float64) for a in self.axes)
        self.values = np.asarray(self.values, dtype=np.float64)
        for a in self.axes:
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise InvalidInputError("grid axes must be strictly increasing with at least two nodes")
        if self.values.shape != (self.axes[0].size, self.axes[1].size):
            raise InvalidInputError(f"values shape {self.values.shape} does not match axes")

    def covers(self, domain: Box) -> bool:
        return all(a[0] <= lo and a[-1] >= hi for a, lo, hi in zip(self.axes, domain.lower, domain.upper))

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        ax, ay = self.axes
        px, py = pts[:, 0], pts[:, 1]
        outside = (px < ax[0]) | (px > ax[-1]) | (py < ay[0]) | (py > ay[-1])
        if np.any(outside):
            raise DomainError(f"{int(outside.sum())} query point(s) outside the grid hull")
        i = np.clip(np.searchsorted(ax, px, side="right") - 1, 0, ax.size - 2)
        j = np.clip(np.searchsorted(ay, py, side="right") - 1, 0, ay.size - 2)
        tx = (px - ax[i]) / (ax[i + 1] - ax[i])
        ty = (py - ay[j]) / (ay[j + 1] - ay[j])
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])


def save_reference_grid(grid: ReferenceGrid, path) -> None:
    lines = ["refgrid v1"]
    for name, axis in zip(grid.names, grid.axes):
        lines.append(f"axis {name} {axis.size} " + " ".join(format(v, ".17g") for v in axis))
    lines += [format(v, ".17g") for v in grid.values.ravel()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_reference_grid(path) -> ReferenceGrid:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != "refgrid v1":
        raise ParseError("missing 'refgrid v1' header", 1)
    axes, names = [], []
    for lineno in (2, 3):
        if len(text) < lineno:
            raise ParseError("missing axis line", lineno)
        parts = text[lineno - 1].split()
        if len(parts) < 3 or parts[0] != "axis":
            raise ParseError("expected 'axis <name> <n> <values...>'", lineno)
        try:
            n = int(parts[2])
            vals = [float(v) for v in parts[3:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        if len(vals) != n:
            raise ParseError(f"axis declares {n} nodes but lists {len(vals)}", lineno)
        names.append(parts[1])
        axes.append(np.array(vals))
    need = axes[0].size * axes[1].size
    body = text[3:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != need:
        raise ParseError(f"expected {need} value lines, found {len(body)}", 4 + min(len(body), need))
    values = np.empty(need)
    for k, line in enumerate(body):
        try:
            values[k] = float(line)
        except ValueError as exc:
            raise ParseError(f"bad value {line!r}", 4 + k) from exc
    try:
        return ReferenceGrid((axes[0], axes[1]), values.reshape(axes[0].size, axes[1].size), tuple(names))
    except InvalidInputError as exc:
        raise ParseError(str(exc), 2) from exc


# -- problems ------------------------------------------------------------------

@dataclass(frozen=True)
class PdeProblem:
    """``L u = f`` in the domain, ``u = g`` on its labelled faces.

    ``operator_fn(x, fields)`` evaluates ``L u`` from network fields (Vars or
    arrays); ``grad_axes`` / ``hess_pairs`` / ``third_axes`` list the input
    partials it reads.
    """

    name: str
    domain: Box
    operator_fn: Callable
    source: Callable[[np.ndarray], np.ndarray]
    boundary_data: Callable[[np.ndarray], np.ndarray]
    order: int
    K: float
    grad_axes: tuple[int, ...] = ()
    hess_pairs: tuple[tuple[int, int], ...] = ()
    third_axes: tuple[int, ...] = ()
    exact: Callable | None = None
    exact_fields: Callable | None = None
    operator: SecondOrderOperator | None = None
    reference: ReferenceGrid | None = None
    flags: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.domain.dim

    def residual(self, x: np.ndarray, fields: Fields, source=None):
        f = self.source(x) if source is None else source
        return self.operator_fn(x, fields) - f

    def solution(self, x: np.ndarray) -> np.ndarray:
        if self.exact is not None:
            return self.exact(x)
        if self.reference is not None:
            return self.reference(x)
        raise InvalidInputError(f"problem {self.name!r} has no exact or reference solution")


def _linear(name, domain, op: SecondOrderOperator, **kw) -> PdeProblem:
    probe = np.random.default_rng(0).uniform(domain.lower, domain.upper, size=(64, domain.dim))
    op.validate(probe)
    pairs, axes, _ = op.pattern(probe)
    order = 2 if pairs else 1
    return PdeProblem(
        name=name, domain=domain, operator_fn=op.apply_fields, order=order, K=op.K,
        grad_axes=tuple(axes), hess_pairs=tuple(pairs), operator=op, **kw,
    )


def _heat_exact(x):
    s, t = x[:, 0], x[:, 1]
    return (np.exp(-PI**2 * t) * np.cos(PI * s) + 0.6 * np.exp(-4 * PI**2 * t) * np.cos(2 * PI * s)
            + 0.3 * np.exp(4 * t - 4) * np.cosh(2 * s) + 0.1 * np.exp(t - 1) * np.sinh(s))


def _heat_exact_fields(x) -> Fields:
    s, t = x[:, 0], x[:, 1]
    e1, e2 = np.exp(-PI**2 * t), 0.6 * np.exp(-4 * PI**2 * t)
    e3, e4 = 0.3 * np.exp(4 * t - 4), 0.1 * np.exp(t - 1)
    u = e1 * np.cos(PI * s) + e2 * np.cos(2 * PI * s) + e3 * np.cosh(2 * s) + e4 * np.sinh(s)
    u_x = -PI * e1 * np.sin(PI * s) - 2 * PI * e2 * np.sin(2 * PI * s) + 2 * e3 * np.sinh(2 * s) + e4 * np.cosh(s)
    u_t = (-PI**2 * e1 * np.cos(PI * s) - 4 * PI**2 * e2 * np.cos(2 * PI * s)
           + 4 * e3 * np.cosh(2 * s) + e4 * np.sinh(s))
    u_xx = -PI**2 * e1 * np.cos(PI * s) - 4 * PI**2 * e2 * np.cos(2 * PI * s) + 4 * e3 * np.cosh(2 * s) + e4 * np.sinh(s)
    u_xt = (PI**3 * e1 * np.sin(PI * s) + 8 * PI**3 * e2 * np.sin(2 * PI * s)
            + 8 * e3 * np.sinh(2 * s) + e4 * np.cosh(s))
    u_tt = PI**4 * e1 * np.cos(PI * s) + 16 * PI**4 * e2 * np.cos(2 * PI * s) + 16 * e3 * np.cosh(2 * s) + e4 * np.sinh(s)
    return Fields(u, {0: u_x, 1: u_t}, {(0, 0): u_xx, (0, 1): u_xt, (1, 1): u_tt})


def make_heat() -> PdeProblem:
    """``u_t - u_xx = 0`` on [-1, 1] x [0, 1] with the closed-form solution as data."""
    op = SecondOrderOperator(A=np.diag([-1.0, 0.0]), b=np.array([0.0, 1.0]), c=0.0, K=1.0, dim=2)
    return _linear(
        "heat", heat_domain(), op,
        source=lambda x: np.zeros(x.shape[0]), boundary_data=_heat_exact,
        exact=_heat_exact, exact_fields=_heat_exact_fields,
    )


def _advection_exact(x):
    s = x[:, 0] - 0.5 * x[:, 1]
    return ((s >= -0.2) & (s <= 0.2)).astype(np.float64)


def make_advection() -> PdeProblem:
    """``u_t + 0.5 u_x = 0`` with a box pulse at t = 0."""
    op = SecondOrderOperator(A=np.zeros((2, 2)), b=np.array([0.5, 1.0]), c=0.0, K=1.0, dim=2)
    return _linear(
        "advection", heat_domain(), op,
        source=lambda x: np.zeros(x.shape[0]), boundary_data=_advection_exact, exact=_advection_exact,
    )


def poisson_source(x):
    inside = np.all((x >= 0.25) & (x <= 0.75), axis=1)
    return inside.astype(np.float64)


def make_poisson(reference: ReferenceGrid | None = None) -> PdeProblem:
    """``u_xx + u_yy = f`` on the unit square, f the indicator of the middle box, u = 0 on the edge."""
    op = SecondOrderOperator(A=np.eye(2), b=np.zeros(2), c=0.0, K=1.0, dim=2)
    return _linear(
        "poisson", poisson_domain(), op,
        source=poisson_source, boundary_data=lambda x: np.zeros(x.shape[0]), reference=reference,
    )


KDV_DISPERSION = 0.0025


def _kdv_operator(x, f: Fields):
    return f.grad[1] + f.u * f.grad[0] - KDV_DISPERSION * f.third[0]


def make_kdv(reference: ReferenceGrid) -> PdeProblem:
    """``u_t + u u_x - 0.0025 u_xxx = 0`` with ``u(x, 0) = cos(pi x)``, periodic in x.

    Nonlinear and third order, so outside the bound's operator assumption;
    bounds are still emitted but flagged.
    """
    dom = kdv_domain()
    if not reference.covers(dom):
        raise CoverageError("KdV reference grid does not cover [-1, 1] x [0, 1]")
    return PdeProblem(
        name="kdv", domain=dom, operator_fn=_kdv_operator,
        source=lambda x: np.zeros(x.shape[0]),
        boundary_data=lambda x: np.cos(PI * x[:, 0]),
        order=3, K=1.0, grad_axes=(0, 1), third_axes=(0,), reference=reference,
        flags=("formula-out-of-assumption",),
    )


def make_problem(name: str, reference: ReferenceGrid | None = None) -> PdeProblem:
    if name == "heat":
        return make_heat()
    if name == "advection":
        return make_advection()
    if name == "poisson":
        return make_poisson(reference)
    if name == "kdv":
        if reference is None:
            raise InvalidInputError("the kdv benchmark needs a reference grid file")
        return make_kdv(reference)
    raise KeyError(f"unknown benchmark {name!r}")


# -- finite-difference Poisson reference ------------------------------------------

def fd_poisson_reference(n: int = 401, tol: float = 1e-10) -> ReferenceGrid:
    """Five-point Laplacian solve of the Poisson benchmark on an n x n node grid.

    Sparse direct factorization; the discrete residual is checked afterwards.
    """
    if n < 33:
        raise InvalidInputError("grid size must be at least 33")
    nodes = np.linspace(0.0, 1.0, n)
    h = nodes[1] - nodes[0]
    m = n - 2
    inner = nodes[1:-1]
    # source averaged over each node's dual cell; point sampling of the jump in f
    # would cost an order of accuracy
    share = np.clip((np.minimum(inner + h / 2, 0.75) - np.maximum(inner - h / 2, 0.25)) / h, 0.0, 1.0)
    rhs = np.outer(share, share).ravel()
    lap1 = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
    eye = sp.identity(m)
    lap = ((sp.kron(lap1, eye) + sp.kron(eye, lap1)) / h**2).tocsc()
    u = spla.spsolve(lap, rhs)
    resid = np.max(np.abs(lap @ u - rhs)) / max(1.0, np.max(np.abs(rhs)))
    if not np.isfinite(resid) or resid > tol:
        raise NumericError(f"FD Poisson solve residual {resid:.3e} above {tol:.0e}")
    full = np.zeros((n, n))
    full[1:-1, 1:-1] = u.reshape(m, m)
    return ReferenceGrid((nodes, nodes), full, ("x", "y"))
