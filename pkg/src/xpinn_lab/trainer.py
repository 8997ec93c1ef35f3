"""Adam and L-BFGS optimizers and the full-batch PINN / XPINN training loop."""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .domain import Decomposition, SampleCounts, TrainingSet, sample
from .errors import ConfigError, InvalidInputError, NumericError, NumericOverflowError, TrainingDiverged
from .losses import LossBreakdown, LossWeights, subdomain_loss
from .network import Mlp, init_mlp, save_mlp
from .pde import PdeProblem

DIVERGENCE_LIMIT = 1e8

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

ARMIJO_C = 1e-4
MAX_LINE_TRIALS = 30
CURVATURE_MIN = 1e-10


# -- optimizers ------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))

    def to_dict(self) -> dict:
        return {"kind": "adam", "t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise InvalidInputError("Adam parameter, gradient and state shapes differ")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericError(f"non-finite gradient at coordinate {bad}")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grads * grads
    m_hat = m / (1 - ADAM_BETA1**t)
    v_hat = v / (1 - ADAM_BETA2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), AdamState(m, v, t)


@dataclass
class LbfgsState:
    memory: int = 10
    s: list = field(default_factory=list)
    y: list = field(default_factory=list)
    fallbacks: int = 0

    def to_dict(self) -> dict:
        return {"kind": "lbfgs", "memory": self.memory, "fallbacks": self.fallbacks,
                "s": [v.tolist() for v in self.s], "y": [v.tolist() for v in self.y]}


def lbfgs_direction(state: LbfgsState, g: np.ndarray) -> np.ndarray:
    """Two-loop recursion: ``-H g`` with the stored curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(state.s), reversed(state.y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if state.s:
        s, y = state.s[-1], state.y[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(state.s, state.y), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def lbfgs_step(state: LbfgsState, params: np.ndarray, value_and_grad, lr: float, memory: int | None = None,
               f0: float | None = None, g0: np.ndarray | None = None, value=None):
    """One L-BFGS iteration with backtracking Armijo line search.

    ``value_and_grad(theta) -> (f, g)``; ``value(theta) -> f`` is used for
    line-search trials when given. The trial step starts at ``lr`` (scaled by
    ``min(1, 1/|g|_1)`` while the history is empty) and halves up to 30 times.
    Returns ``(new_params, new_state, f_new, g_new)``.
    """
    if memory is not None:
        state.memory = memory
    if f0 is None or g0 is None:
        f0, g0 = value_and_grad(params)
    if not np.all(np.isfinite(g0)):
        raise NumericError("non-finite gradient entering L-BFGS step")
    value = value or (lambda th: value_and_grad(th)[0])
    d = lbfgs_direction(state, g0)
    slope = float(g0 @ d)
    if slope >= 0:
        state.s.clear()
        state.y.clear()
        d = -g0
        slope = float(g0 @ d)
    step = lr if state.s else lr * min(1.0, 1.0 / max(float(np.abs(g0).sum()), 1e-300))
    accepted = False
    for _ in range(MAX_LINE_TRIALS):
        trial = params + step * d
        try:
            ft = value(trial)
        except NumericOverflowError:
            ft = math.inf
        if math.isfinite(ft) and ft <= f0 + ARMIJO_C * step * slope:
            accepted = True
            break
        step *= 0.5
    if not accepted:
        warnings.warn("L-BFGS line search failed; taking a scaled gradient step", RuntimeWarning, stacklevel=2)
        state.fallbacks += 1
        state.s.clear()
        state.y.clear()
        gn = float(np.linalg.norm(g0))
        trial = params - (min(lr, 1e-3) / max(gn, 1.0)) * g0
    f1, g1 = value_and_grad(trial)
    s_vec, y_vec = trial - params, g1 - g0
    if float(s_vec @ y_vec) > CURVATURE_MIN:
        state.s.append(s_vec)
        state.y.append(y_vec)
        if len(state.s) > state.memory:
            state.s.pop(0)
            state.y.pop(0)
    return trial, state, f1, g1


# -- models and configs ------------------------------------------------------------

@dataclass
class Model:
    """A PINN (one net, no decomposition) or an XPINN (one net per subdomain)."""

    nets: list[Mlp]
    decomposition: Decomposition | None = None

    @property
    def kind(self) -> str:
        return "pinn" if self.decomposition is None else "xpinn"

    def __post_init__(self):
        n_sub = 1 if self.decomposition is None else self.decomposition.n_sub
        if len(self.nets) != n_sub:
            raise ConfigError(f"{len(self.nets)} networks for {n_sub} subdomains")


def build_model(dims: list[int], activation: str, seed: int, decomposition: Decomposition | None = None) -> Model:
    n = 1 if decomposition is None else decomposition.n_sub
    nets = [init_mlp(dims, activation, np.random.default_rng([seed, 0, k])) for k in range(n)]
    return Model(nets, decomposition)


@dataclass
class TrainConfig:
    epochs: int
    optimizer: str = "adam"
    lr: float = 1e-3
    memory: int = 10
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    counts: SampleCounts | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        # lr = 0 is allowed as a frozen-parameter diagnostic
        if not (math.isfinite(self.lr) and self.lr >= 0):
            raise ConfigError("learning rate must be finite and nonnegative")
        if self.record_every < 1 or self.memory < 1:
            raise ConfigError("record_every and memory must be positive")


@dataclass
class HistoryEntry:
    epoch: int
    total: float
    train_loss: float
    subnets: list[dict]


@dataclass
class TrainResult:
    model: Model
    history: list[HistoryEntry]
    final: list[LossBreakdown]
    train_loss: float
    total: float
    training_set: TrainingSet
    optimizer_states: list
    wall_time: float
    epochs_run: int


def pooled_train_loss(parts: list[LossBreakdown], ts: TrainingSet) -> float:
    """Unweighted boundary plus residual loss pooled over all sub-nets' points."""
    nb, nr = ts.n_b_sub(), ts.n_r_sub()
    b = sum(float(ad.value_of(p.boundary)) * m for p, m in zip(parts, nb)) / max(ts.n_b, 1)
    r = sum(float(ad.value_of(p.residual)) * m for p, m in zip(parts, nr)) / max(ts.n_r, 1)
    return b + r


def _oracle(model: Model, k: int, problem: PdeProblem, ts: TrainingSet, weights: LossWeights, frozen: list[Mlp]):
    base = model.nets[k]

    def builder(t):
        nets = list(frozen)
        nets[k] = t
        return subdomain_loss(nets, k, problem, ts, weights)

    def value_and_grad(theta):
        net = base.with_flat(theta)
        holder = {}

        def loss(t):
            bd = builder(t)
            holder["bd"] = bd
            return bd.total

        f, (g,) = ad.grad(loss, net)
        return f, g.flat(), holder["bd"].as_floats()

    def value(theta):
        return ad.evaluate(lambda t: builder(t).total, base.with_flat(theta))

    return value_and_grad, value


def train(problem: PdeProblem, model: Model, config: TrainConfig, training_set: TrainingSet | None = None) -> TrainResult:
    """Full-batch training; deterministic for a fixed seed.

    Each epoch evaluates every sub-net's loss and gradient at the epoch-start
    parameters (neighbours frozen), then applies all updates at once.
    """
    t0 = time.perf_counter()
    if training_set is None:
        if config.counts is None:
            raise ConfigError("either a training set or point counts are required")
        training_set = sample(problem.domain, config.counts, config.seed, model.decomposition, problem.boundary_data)
    ts = training_set
    if ts.n_sub != len(model.nets):
        raise ConfigError("training set and model disagree on the number of subdomains")
    n_sub = len(model.nets)
    thetas = [net.flat() for net in model.nets]
    states = [AdamState.zeros(t.size) if config.optimizer == "adam" else LbfgsState(config.memory) for t in thetas]
    history: list[HistoryEntry] = []
    cache = [None] * n_sub
    epochs_run = 0

    def current_model():
        return Model([net.with_flat(th) for net, th in zip(model.nets, thetas)], model.decomposition)

    def partial_result():
        m = current_model()
        return TrainResult(m, history, [], math.nan, math.nan, ts, states, time.perf_counter() - t0, epochs_run)

    for epoch in range(config.epochs):
        frozen = [net.with_flat(th) for net, th in zip(model.nets, thetas)]
        frozen_model = Model(frozen, model.decomposition)
        evals = []
        try:
            for k in range(n_sub):
                vg, val = _oracle(frozen_model, k, problem, ts, config.weights, frozen)
                if cache[k] is not None and n_sub == 1:
                    f, g, bd = cache[k]
                else:
                    f, g, bd = vg(thetas[k])
                evals.append((vg, val, f, g, bd))
        except NumericOverflowError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", partial_result()) from exc
        parts = [e[4] for e in evals]
        total = float(sum(e[2] for e in evals))
        if epoch % config.record_every == 0:
            history.append(HistoryEntry(epoch, total, pooled_train_loss(parts, ts), [p.as_dict() for p in parts]))
        if not math.isfinite(total) or total > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"epoch {epoch}: loss {total:.3e}", partial_result())
        new_thetas = []
        try:
            for k, (vg, val, f, g, bd) in enumerate(evals):
                if config.optimizer == "adam":
                    th, states[k] = adam_step(states[k], thetas[k], g, config.lr)
                    cache[k] = None
                else:
                    box = {}

                    def fg(theta, vg=vg, box=box):
                        f_, g_, bd_ = vg(theta)
                        box["bd"] = bd_
                        return f_, g_

                    th, states[k], f1, g1 = lbfgs_step(states[k], thetas[k], fg, config.lr, config.memory, f, g, val)
                    cache[k] = (f1, g1, box["bd"])
                new_thetas.append(th)
        except NumericError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", partial_result()) from exc
        thetas = new_thetas
        epochs_run = epoch + 1

    final_model = current_model()
    final = [subdomain_loss(final_model.nets, k, problem, ts, config.weights).as_floats() for k in range(n_sub)]
    total = float(sum(p.total for p in final))
    if not math.isfinite(total) or total > DIVERGENCE_LIMIT:
        raise TrainingDiverged(f"final loss {total:.3e}", partial_result())
    return TrainResult(final_model, history, final, pooled_train_loss(final, ts), total, ts, states,
                       time.perf_counter() - t0, epochs_run)


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(result: TrainResult, directory) -> list[Path]:
    """One network JSON per sub-net plus an optimizer-state sidecar for each."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (net, state) in enumerate(zip(result.model.nets, result.optimizer_states)):
        p = directory / f"net_{k}.json"
        save_mlp(net, p)
        (directory / f"net_{k}.optimizer.json").write_text(json.dumps(state.to_dict()), encoding="utf-8")
        paths.append(p)
    return paths
