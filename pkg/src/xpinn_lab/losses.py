"""PINN and XPINN empirical losses.

Every function accepts plain :class:`~xpinn_lab.network.Mlp` networks (and
returns floats) or :class:`~xpinn_lab.autodiff.TapedMlp` networks (and
returns :class:`~xpinn_lab.autodiff.Var` scalars for differentiation).
Anything exposing ``fields(x, grad_axes, hess_pairs, third_axes)`` can also
stand in for a network, e.g. :class:`ExactModel`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Fields, TapedMlp, Var
from .domain import TrainingSet
from .errors import ConfigError, InvalidInputError, UnsupportedOrderError
from .network import MAX_JET_ORDER, Mlp
from .pde import PdeProblem

# offset used to evaluate a discontinuous source on each side of an interface
SIDE_EPS = 1e-9


@dataclass(frozen=True)
class LossWeights:
    w_res: float = 1.0
    w_bnd: float = 1.0
    w_iface_u: float = 1.0
    w_iface_res: float = 1.0
    w_iface_grad: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            v = float(v)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"loss weight {k} must be finite and nonnegative, got {v}")
            object.__setattr__(self, k, v)


BENCHMARK_WEIGHTS = {
    "kdv": LossWeights(w_res=1, w_iface_res=0, w_bnd=1, w_iface_u=1),
    "heat": LossWeights(w_res=1, w_iface_res=1, w_bnd=20, w_iface_u=20),
    "advection": LossWeights(w_res=1, w_iface_res=0, w_bnd=1, w_iface_u=1),
}

# rows of the Poisson weighting table: residual, interface R, additional I, boundary, interface B
POISSON_WEIGHTS = {
    "PINN": LossWeights(w_res=1, w_iface_res=0, w_iface_grad=0, w_bnd=20, w_iface_u=0),
    "XPINN1": LossWeights(w_res=1, w_iface_res=20, w_iface_grad=0, w_bnd=20, w_iface_u=20),
    "XPINN2": LossWeights(w_res=1, w_iface_res=20, w_iface_grad=30, w_bnd=20, w_iface_u=20),
    "XPINN3": LossWeights(w_res=1, w_iface_res=20, w_iface_grad=30, w_bnd=80, w_iface_u=20),
}


def default_weights(benchmark: str, variant: str | None = None) -> LossWeights:
    if benchmark == "poisson":
        key = (variant or "PINN").upper()
        if key not in POISSON_WEIGHTS:
            raise ConfigError(f"unknown Poisson weighting {variant!r}; choose from {sorted(POISSON_WEIGHTS)}")
        return POISSON_WEIGHTS[key]
    if benchmark not in BENCHMARK_WEIGHTS:
        raise ConfigError(f"no default weights for benchmark {benchmark!r}")
    if variant is not None and variant.upper() != "DEFAULT":
        raise ConfigError(f"benchmark {benchmark!r} has no weighting named {variant!r}")
    return BENCHMARK_WEIGHTS[benchmark]


PARTS = ("boundary", "residual", "iface_u", "iface_res", "iface_grad")


@dataclass(frozen=True)
class LossBreakdown:
    boundary: object = 0.0
    residual: object = 0.0
    iface_u: object = 0.0
    iface_res: object = 0.0
    iface_grad: object = 0.0
    total: object = 0.0

    def as_floats(self) -> "LossBreakdown":
        return LossBreakdown(**{k: float(ad.value_of(getattr(self, k))) for k in PARTS + ("total",)})

    def as_dict(self) -> dict:
        return {k: float(ad.value_of(getattr(self, k))) for k in PARTS + ("total",)}

    @property
    def train_loss(self) -> float:
        """Unweighted boundary plus residual loss."""
        return float(ad.value_of(self.boundary)) + float(ad.value_of(self.residual))


class ExactModel:
    """Wraps a problem's closed-form solution so it can be fed to the loss functions."""

    def __init__(self, problem: PdeProblem):
        if problem.exact_fields is None:
            raise InvalidInputError(f"problem {problem.name!r} has no exact derivatives")
        self.problem = problem

    def fields(self, x, grad_axes=(), hess_pairs=(), third_axes=()) -> Fields:
        if third_axes:
            raise UnsupportedOrderError("exact third derivatives are not available")
        return self.problem.exact_fields(x)


def fields_of(model, x: np.ndarray, grad_axes=(), hess_pairs=(), third_axes=()) -> Fields:
    if isinstance(model, (Mlp, TapedMlp)):
        return ad.net_fields(model, x, grad_axes, hess_pairs, third_axes)
    return model.fields(x, grad_axes, hess_pairs, third_axes)


def _plain(*models) -> bool:
    return not any(isinstance(m, TapedMlp) for m in models)


def _out(v, *models):
    return float(ad.value_of(v)) if _plain(*models) else v


def _sq_sum(r):
    return ad.total(ad.square(r) if isinstance(r, Var) else np.asarray(r) ** 2)


def _require(points: np.ndarray, what: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidInputError(f"{what} point set is empty")
    return points


def _check_order(problem: PdeProblem) -> None:
    if problem.order > MAX_JET_ORDER:
        raise UnsupportedOrderError(f"operator order {problem.order} exceeds {MAX_JET_ORDER}")


def _residual_fields(model, problem: PdeProblem, x: np.ndarray, extra_grad=()) -> Fields:
    return fields_of(model, x, tuple(problem.grad_axes) + tuple(extra_grad), problem.hess_pairs, problem.third_axes)


# -- single terms --------------------------------------------------------------

def boundary_loss(net, points, targets):
    """Mean squared misfit ``u(x) - g(x)`` over the boundary points."""
    points = _require(points, "boundary")
    u = fields_of(net, points).u
    return _out(ad.total(ad.square(u - np.asarray(targets, dtype=np.float64))) / points.shape[0], net)


def residual_loss(net, problem: PdeProblem, points, source=None):
    """Mean squared PDE residual ``L u - f`` over the residual points."""
    _check_order(problem)
    points = _require(points, "residual")
    r = problem.residual(points, _residual_fields(net, problem, points), source)
    return _out(_sq_sum(r) / points.shape[0], net)


def _side_sources(problem: PdeProblem, points, normals):
    if normals is None:
        f = problem.source(points)
        return f, f
    normals = np.asarray(normals, dtype=np.float64)
    return problem.source(points - SIDE_EPS * normals), problem.source(points + SIDE_EPS * normals)


def interface_losses(net_i, net_j, problem: PdeProblem, points, normals=None):
    """Average-continuity and residual-continuity losses on an interface.

    ``normals`` (unit, pointing from i into j) select the branch of a
    discontinuous source seen by each sub-net; without them f is evaluated
    at the interface point for both.
    """
    _check_order(problem)
    points = _require(points, "interface")
    n = points.shape[0]
    fi = _residual_fields(net_i, problem, points)
    fj = _residual_fields(net_j, problem, points)
    src_i, src_j = _side_sources(problem, points, normals)
    iface_u = ad.total(ad.square(fi.u - 0.5 * (fi.u + fj.u))) / n
    diff = problem.residual(points, fi, src_i) - problem.residual(points, fj, src_j)
    iface_res = _sq_sum(diff) / n
    return _out(iface_u, net_i, net_j), _out(iface_res, net_i, net_j)


def interface_grad_loss(net_i, net_j, points, d: int | None = None):
    """Mean over interface points of the squared gradient jump summed over all d axes."""
    points = _require(points, "interface")
    d = points.shape[1] if d is None else d
    axes = tuple(range(d))
    gi = fields_of(net_i, points, axes).grad
    gj = fields_of(net_j, points, axes).grad
    acc = None
    for m in axes:
        term = _sq_sum(gi[m] - gj[m])
        acc = term if acc is None else acc + term
    return _out(acc / points.shape[0], net_i, net_j)


# -- assembled losses ------------------------------------------------------------

def _weighted(parts: dict, w: LossWeights) -> LossBreakdown:
    total = (w.w_bnd * parts["boundary"] + w.w_res * parts["residual"] + w.w_iface_u * parts["iface_u"]
             + w.w_iface_res * parts["iface_res"] + w.w_iface_grad * parts["iface_grad"])
    return LossBreakdown(**parts, total=total)


def _boundary_term(nets, k: int, ts: TrainingSet):
    """Boundary misfit of sub-net ``k`` over the boundary items it owns.

    Periodic items compare u_k at the point with the owning sub-net of the
    partner point on the opposite face.
    """
    own = ts.boundary_owner == k
    n = int(own.sum())
    if n == 0:
        return 0.0
    net = nets[k]
    per = ts.periodic
    acc = 0.0
    dir_mask = own & ~per
    if np.any(dir_mask):
        u = fields_of(net, ts.boundary[dir_mask]).u
        acc = acc + ad.total(ad.square(u - ts.boundary_values[dir_mask]))
    for j in range(ts.n_sub):
        m = own & per & (ts.partner_owner == j)
        if np.any(m):
            u = fields_of(net, ts.boundary[m]).u
            v = fields_of(nets[j], ts.boundary_partner[m]).u
            acc = acc + ad.total(ad.square(u - v))
    return acc / n


def subdomain_loss(nets, k: int, problem: PdeProblem, ts: TrainingSet, weights: LossWeights) -> LossBreakdown:
    """Loss of sub-net ``k``: its own boundary and residual terms plus every interface it touches.

    Sub-nets other than ``k`` appear only as fixed partners; pass them as
    plain networks so their parameters are not taped.
    """
    _check_order(problem)
    parts = dict.fromkeys(PARTS, 0.0)
    parts["boundary"] = _boundary_term(nets, k, ts)
    own = ts.residual_owner == k
    if np.any(own):
        x = ts.residual[own]
        r = problem.residual(x, _residual_fields(nets[k], problem, x))
        parts["residual"] = _sq_sum(r) / x.shape[0]
    for (i, j), (pts, normals) in sorted(ts.interfaces.items()):
        if k not in (i, j):
            continue
        me, other = (i, j) if k == i else (j, i)
        nrm = normals if k == i else -normals
        need_res = weights.w_iface_res > 0
        fm = _residual_fields(nets[me], problem, pts) if need_res else fields_of(nets[me], pts)
        fo = _residual_fields(nets[other], problem, pts) if need_res else fields_of(nets[other], pts)
        n = pts.shape[0]
        parts["iface_u"] = parts["iface_u"] + ad.total(ad.square(fm.u - 0.5 * (fm.u + fo.u))) / n
        if need_res:
            src_me, src_other = _side_sources(problem, pts, nrm)
            diff = problem.residual(pts, fm, src_me) - problem.residual(pts, fo, src_other)
            parts["iface_res"] = parts["iface_res"] + _sq_sum(diff) / n
        if weights.w_iface_grad > 0:
            parts["iface_grad"] = parts["iface_grad"] + interface_grad_loss(nets[me], nets[other], pts)
    return _weighted(parts, weights)


def pinn_total(net, problem: PdeProblem, ts: TrainingSet, weights: LossWeights) -> LossBreakdown:
    """Weighted boundary plus residual loss of a single network; interface parts are zero."""
    if ts.n_sub != 1:
        ts = TrainingSet(ts.boundary, ts.boundary_values, np.zeros(ts.n_b, dtype=int), ts.residual,
                         np.zeros(ts.n_r, dtype=int), ts.boundary_partner, np.zeros(ts.n_b, dtype=int), {}, 1, ts.seed)
    bd = subdomain_loss([net], 0, problem, ts, replace(weights, w_iface_u=0, w_iface_res=0, w_iface_grad=0))
    return bd.as_floats() if _plain(net) else bd


@dataclass(frozen=True)
class XpinnLosses:
    per_subnet: list[LossBreakdown]
    total: float
    boundary: float  # boundary misfit pooled over all boundary items
    residual: float  # residual misfit pooled over all residual points

    @property
    def train_loss(self) -> float:
        return self.boundary + self.residual


def xpinn_total(nets, problem: PdeProblem, ts: TrainingSet, weights: LossWeights) -> XpinnLosses:
    """Per-subdomain breakdowns and their global sum."""
    if len(nets) != ts.n_sub:
        raise ConfigError(f"{len(nets)} networks for {ts.n_sub} subdomains")
    parts = [subdomain_loss(nets, k, problem, ts, weights).as_floats() for k in range(ts.n_sub)]
    nb, nr = ts.n_b_sub(), ts.n_r_sub()
    pooled_b = sum(p.boundary * m for p, m in zip(parts, nb)) / max(ts.n_b, 1)
    pooled_r = sum(p.residual * m for p, m in zip(parts, nr)) / max(ts.n_r, 1)
    return XpinnLosses(parts, float(sum(p.total for p in parts)), float(pooled_b), float(pooled_r))
