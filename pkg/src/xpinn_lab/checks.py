"""Quick oracle suites: library results against independent reference computations.

Each check returns a :class:`CheckResult`; ``run_checks`` drives them all and is
what ``xpinn-lab check`` prints.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracles
from .autodiff import check_gradient
from .bounds import BoundInputs, LayerCaps, boundary_bound, delta_split, example, prior_compare, residual_bound, tradeoff_threshold
from .domain import SampleCounts, builtin_decompositions, sample
from .linalg import frobenius_norm, norm_2_1, norm_ratio, spectral_norm
from .losses import LossWeights, subdomain_loss
from .network import directional_jet, forward, init_mlp, input_gradient, input_hessian
from .pde import fd_poisson_reference, make_heat


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    @property
    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        ok, detail = fn(*a, **kw)
        return CheckResult(fn.__name__.removeprefix("check_").replace("_", "-"), bool(ok), detail,
                           time.perf_counter() - t0)
    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def check_examples():
    e1 = prior_compare(*example("4.1"), asymptotic=True)
    e2 = prior_compare(*example("4.2"), asymptotic=True)
    q = tradeoff_threshold()
    q_exact = (8 / (math.sqrt(2) - 1)) ** (1 / 3) - 2
    errs = [abs(e1.pinn - 27), abs(e1.xpinn - 9 / math.sqrt(2)), abs(e2.pinn - 15.625),
            abs(e2.xpinn - 23.625 / math.sqrt(2))]
    ok = max(errs) <= 1e-9 and abs(q - q_exact) <= 1e-3 and e1.verdict == "XPINN" and e2.verdict == "PINN"
    return ok, f"4.1 {e1.pinn:g} vs {e1.xpinn:.6f}, 4.2 {e2.pinn:g} vs {e2.xpinn:.6f}, q*={q:.6f}"


def derivative_errors(activation: str, pairs: int, seed: int = 0) -> dict:
    """Worst errors of input derivatives against finite differences and jets over random (net, point) pairs."""
    rng = np.random.default_rng([seed, 7])
    worst = {"grad_fd": 0.0, "hess_fd": 0.0, "jet": 0.0, "hess_sym": 0.0}
    for _ in range(pairs):
        d = int(rng.integers(1, 4))
        dims = [d] + [int(rng.integers(2, 9)) for _ in range(int(rng.integers(1, 4)))] + [1]
        net = init_mlp(dims, activation, rng)
        x = rng.uniform(-1, 1, d)
        f = lambda p: forward(net, p)  # noqa: E731
        g = input_gradient(net, x)
        hm = input_hessian(net, x)
        worst["grad_fd"] = max(worst["grad_fd"], oracles.relative_error(g, oracles.fd_gradient(f, x), 1e-6))
        worst["hess_fd"] = max(worst["hess_fd"], oracles.relative_error(hm, oracles.fd_hessian(f, x), 1e-4))
        worst["hess_sym"] = max(worst["hess_sym"], float(np.max(np.abs(hm - hm.T))))
        for axis in range(d):
            j = directional_jet(net, x, axis, 2)
            worst["jet"] = max(worst["jet"], oracles.relative_error([j.d1, j.d2], [g[axis], hm[axis, axis]], 1e-8))
    return worst


@_timed
def check_derivatives(pairs: int = 25):
    rows = []
    ok = True
    for act in ("tanh", "sine"):
        w = derivative_errors(act, pairs)
        ok &= w["grad_fd"] <= 1e-5 and w["hess_fd"] <= 1e-4 and w["jet"] <= 1e-10 and w["hess_sym"] <= 1e-12
        rows.append(f"{act} grad {w['grad_fd']:.1e} hess {w['hess_fd']:.1e} jet {w['jet']:.1e}")
    return ok, "; ".join(rows)


def loss_gradient_error(activation: str, seed: int = 0) -> float:
    """Worst relative parameter-gradient error of a full two-subdomain loss on a 3-layer x 8 net."""
    problem = make_heat()
    dec = builtin_decompositions("heat")
    ts = sample(problem.domain, SampleCounts(12, 16, 8), seed, dec, problem.boundary_data)
    rng = np.random.default_rng([seed, 11])
    nets = [init_mlp([2, 8, 8, 1], activation, rng) for _ in range(2)]
    weights = LossWeights(1.0, 1.0, 1.0, 1.0, 1.0)

    def builder(t):
        return subdomain_loss([t, nets[1]], 0, problem, ts, weights).total

    return check_gradient(builder, nets[0], step=1e-6)


@_timed
def check_loss_gradient():
    errs = {act: loss_gradient_error(act) for act in ("sine", "tanh")}
    return max(errs.values()) <= 1e-5, ", ".join(f"{k} {v:.1e}" for k, v in errs.items())


@_timed
def check_norms(count: int = 200, seed: int = 0):
    rng = np.random.default_rng([seed, 3])
    worst, order_ok = 0.0, True
    for _ in range(count):
        m = rng.normal(size=(int(rng.integers(1, 33)), int(rng.integers(1, 33))))
        s = spectral_norm(m)
        worst = max(worst, abs(s - oracles.spectral_norm_jacobi(m)) / max(s, 1e-300))
        order_ok &= s <= frobenius_norm(m) * (1 + 1e-12) and frobenius_norm(m) <= norm_2_1(m) * (1 + 1e-12)
        order_ok &= norm_ratio(m) >= 1 - 1e-12
    return worst <= 1e-8 and order_ok, f"spectral vs Jacobi {worst:.1e}, norm ordering {'ok' if order_ok else 'violated'}"


@_timed
def check_bounds():
    caps = LayerCaps.ones(2)
    inp = BoundInputs(caps, 100, 1, 2, 1.0, 0.1)
    r, b = residual_bound(inp), boundary_bound(inp)
    r0 = oracles.residual_bound_formula(2, 1, 2, 1.0, 100, 0.1, [1, 1], [1, 1])
    b0 = oracles.boundary_bound_formula(2, 1, 2, 100, 0.1, [1, 1], [1, 1])
    err = max(abs(r - r0) / r0, abs(b - b0) / b0)
    split_ok = delta_split(0.1, caps) == 0.1 / 4**2
    return err <= 1e-9 and split_ok, f"residual {r:.10g}, boundary {b:.10g}, rel err {err:.1e}"


@_timed
def check_fd_poisson():
    sols = [fd_poisson_reference(n) for n in (65, 129, 257)]
    centre = [float(np.ravel(g(np.array([0.5, 0.5])))[0]) for g in sols]
    ratio = (centre[0] - centre[1]) / (centre[1] - centre[2])
    sign_ok = all(float(np.max(g.values)) <= 1e-14 for g in sols)
    return 3.5 <= ratio <= 4.5 and sign_ok, f"Richardson ratio {ratio:.4f}, solution sign {'<= 0' if sign_ok else 'mixed'}"


SUITES = (check_examples, check_derivatives, check_loss_gradient, check_norms, check_bounds, check_fd_poisson)


def run_checks() -> list[CheckResult]:
    return [fn() for fn in SUITES]
