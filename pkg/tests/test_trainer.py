import json
import math

import numpy as np
import pytest

from xpinn_lab import trainer as tr
from xpinn_lab import autodiff as ad
from xpinn_lab.domain import SampleCounts, builtin_decompositions, sample
from xpinn_lab.errors import ConfigError, NumericError, TrainingDiverged
from xpinn_lab.losses import LossWeights, default_weights, subdomain_loss
from xpinn_lab.network import mlp_dims
from xpinn_lab.pde import make_advection, make_heat


def test_adam_first_step_moves_by_lr_times_sign():
    p, st = tr.adam_step(tr.AdamState.zeros(3), np.ones(3), np.array([2.0, -0.5, 0.0]), 1e-3)
    np.testing.assert_allclose(p, [1 - 1e-3, 1 + 1e-3, 1.0], rtol=0, atol=1e-10)
    assert st.t == 1


def test_adam_matches_reference_recurrence(rng):
    theta = rng.normal(size=4)
    state = tr.AdamState.zeros(4)
    m = v = np.zeros(4)
    ref = theta.copy()
    for t in range(1, 6):
        g = rng.normal(size=4)
        theta, state = tr.adam_step(state, theta, g, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(theta, ref, rtol=1e-14)


def test_adam_rejects_nonfinite_gradients():
    with pytest.raises(NumericError):
        tr.adam_step(tr.AdamState.zeros(2), np.zeros(2), np.array([np.nan, 0.0]), 0.1)


def _run_lbfgs(fg, x, steps, lr=1.0):
    state = tr.LbfgsState(10)
    f, g = fg(x)
    for _ in range(steps):
        x, state, f, g = tr.lbfgs_step(state, x, fg, lr, 10, f, g)
        if np.linalg.norm(g) < 1e-10:
            break
    return x, f, g, state


def test_lbfgs_solves_quadratic(rng):
    a = rng.normal(size=(6, 6))
    q = a @ a.T + np.eye(6)
    b = rng.normal(size=6)
    x, f, g, state = _run_lbfgs(lambda x: (0.5 * x @ q @ x - b @ x, q @ x - b), np.zeros(6), 100)
    np.testing.assert_allclose(x, np.linalg.solve(q, b), rtol=1e-8, atol=1e-9)
    assert state.fallbacks == 0 and len(state.s) <= 10


def test_lbfgs_rosenbrock():
    def fg(p):
        x, y = p
        return (1 - x) ** 2 + 100 * (y - x * x) ** 2, np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])

    x, f, _, _ = _run_lbfgs(fg, np.array([-1.2, 1.0]), 200)
    assert f < 1e-8
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-4)


def test_lbfgs_line_search_failure_falls_back():
    # value() never satisfies Armijo, so every trial fails
    with pytest.warns(RuntimeWarning):
        x, state, f1, g1 = tr.lbfgs_step(tr.LbfgsState(5), np.array([1.0]), lambda x: (float(x @ x), 2 * x), 1.0,
                                         value=lambda x: math.inf)
    assert state.fallbacks == 1
    assert x[0] < 1.0


def test_lbfgs_skips_pairs_without_curvature():
    # linear function: y = 0, pair must not be stored
    state = tr.LbfgsState(5)
    _, state, _, _ = tr.lbfgs_step(state, np.array([0.0]), lambda x: (float(-x[0]), np.array([-1.0])), 1.0)
    assert state.s == []


def _heat_setup(n_sub=1, seed=0):
    prob = make_heat()
    dec = builtin_decompositions("heat") if n_sub > 1 else None
    model = tr.build_model(mlp_dims(2, 3, 8), "tanh", seed, dec)
    return prob, model


def test_training_reduces_loss_and_is_deterministic():
    prob, model = _heat_setup()
    cfg = tr.TrainConfig(60, "adam", 1e-2, seed=1, weights=default_weights("heat"), counts=SampleCounts(40, 80),
                         record_every=10)
    a = tr.train(prob, model, cfg)
    b = tr.train(prob, tr.build_model(mlp_dims(2, 3, 8), "tanh", 0), cfg)
    assert a.total < a.history[0].total
    assert [h.epoch for h in a.history] == [0, 10, 20, 30, 40, 50]
    assert a.total == b.total and np.array_equal(a.model.nets[0].flat(), b.model.nets[0].flat())
    assert a.epochs_run == 60


def test_lbfgs_training_runs():
    prob, model = _heat_setup()
    cfg = tr.TrainConfig(15, "lbfgs", 0.1, seed=0, weights=default_weights("heat"), counts=SampleCounts(40, 80))
    res = tr.train(prob, model, cfg)
    assert res.total < res.history[0].total
    assert res.optimizer_states[0].to_dict()["kind"] == "lbfgs"


def test_zero_learning_rate_freezes_parameters():
    prob, model = _heat_setup(2)
    before = [n.flat() for n in model.nets]
    cfg = tr.TrainConfig(3, "adam", 0.0, weights=default_weights("heat"), counts=SampleCounts(20, 40, 10))
    res = tr.train(prob, model, cfg)
    assert all(np.array_equal(a, n.flat()) for a, n in zip(before, res.model.nets))


def test_xpinn_epoch_updates_subnets_simultaneously():
    prob, model = _heat_setup(2)
    ts = sample(prob.domain, SampleCounts(20, 40, 10), 0, model.decomposition, prob.boundary_data)
    w = default_weights("heat")
    cfg = tr.TrainConfig(1, "adam", 1e-2, weights=w, record_every=1)
    res = tr.train(prob, model, cfg, ts)
    for k in range(2):
        def builder(t, k=k):
            nets = list(model.nets)
            nets[k] = t
            return subdomain_loss(nets, k, prob, ts, w).total

        _, (g,) = ad.grad(builder, model.nets[k])
        expected, _ = tr.adam_step(tr.AdamState.zeros(g.flat().size), model.nets[k].flat(), g.flat(), 1e-2)
        np.testing.assert_allclose(res.model.nets[k].flat(), expected, rtol=1e-13)


def test_divergence_raises_with_partial_result():
    prob, model = _heat_setup()
    cfg = tr.TrainConfig(50, "adam", 1e6, weights=LossWeights(), counts=SampleCounts(20, 40))
    with pytest.raises(TrainingDiverged) as info:
        tr.train(prob, model, cfg)
    assert info.value.result is not None
    assert info.value.result.epochs_run < 50


def test_train_config_validation():
    with pytest.raises(ConfigError):
        tr.TrainConfig(0)
    with pytest.raises(ConfigError):
        tr.TrainConfig(1, "sgd")
    with pytest.raises(ConfigError):
        tr.TrainConfig(1, lr=-1.0)
    with pytest.raises(ConfigError):
        tr.Model([], builtin_decompositions("heat"))


def test_build_model_seeds_each_subnet_differently():
    m = tr.build_model([2, 4, 1], "tanh", 7, builtin_decompositions("advection"))
    flats = [n.flat() for n in m.nets]
    assert m.kind == "xpinn" and len(flats) == 3
    assert not np.array_equal(flats[0], flats[1])
    again = tr.build_model([2, 4, 1], "tanh", 7, builtin_decompositions("advection"))
    assert all(np.array_equal(a, b.flat()) for a, b in zip(flats, again.nets))


def test_checkpoint_files_validate(tmp_path, validate):
    prob, model = _heat_setup(2)
    cfg = tr.TrainConfig(2, "lbfgs", 0.1, weights=default_weights("heat"), counts=SampleCounts(20, 40, 10))
    res = tr.train(prob, model, cfg)
    paths = tr.save_checkpoint(res, tmp_path)
    assert [p.name for p in paths] == ["net_0.json", "net_1.json"]
    for k in range(2):
        validate(tmp_path / f"net_{k}.json", "mlp")
        validate(tmp_path / f"net_{k}.optimizer.json", "optimizer-state")
    prob_a = make_advection()
    res = tr.train(prob_a, tr.build_model([2, 4, 1], "tanh", 0), tr.TrainConfig(2, counts=SampleCounts(10, 20)))
    tr.save_checkpoint(res, tmp_path / "adam")
    doc = validate(tmp_path / "adam" / "net_0.optimizer.json", "optimizer-state")
    assert doc["kind"] == "adam" and doc["t"] == 2
    assert json.loads((tmp_path / "adam" / "net_0.json").read_text())["activation"] == "tanh"
