import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xpinn_lab import network as nw
from xpinn_lab.errors import InvalidInputError, ParseError, ShapeError, UnsupportedOrderError
from xpinn_lab.oracles import fd_gradient, fd_hessian, forward_loop, relative_error


def _net(rng, dims=(2, 5, 4, 1), act="tanh"):
    return nw.init_mlp(list(dims), act, rng)


@pytest.mark.parametrize("act", nw.ACTIVATIONS)
def test_forward_matches_scalar_loop(rng, act):
    net = _net(rng, act=act)
    net.biases = [rng.normal(size=b.shape) for b in net.biases]
    fn = np.sin if act == "sine" else np.tanh
    for x in rng.uniform(-1, 1, size=(10, 2)):
        assert nw.forward(net, x) == pytest.approx(forward_loop(net.weights, net.biases, fn, x), rel=1e-13)


def test_batch_and_single_point_agree(rng):
    net = _net(rng)
    pts = rng.uniform(-1, 1, size=(6, 2))
    batch = nw.forward(net, pts)
    assert batch.shape == (6,)
    assert all(batch[i] == pytest.approx(nw.forward(net, p)) for i, p in enumerate(pts))
    assert nw.input_gradient(net, pts).shape == (6, 2)
    assert nw.input_hessian(net, pts).shape == (6, 2, 2)


def test_mlp_dims_counts_weight_layers():
    assert nw.mlp_dims(2, 3, 8) == [2, 8, 8, 1]
    net = nw.init_mlp(nw.mlp_dims(2, 3, 8), "tanh", np.random.default_rng(0))
    assert net.depth == 3
    assert net.max_width == 8


def test_init_is_deterministic_and_glorot():
    a = nw.init_mlp([3, 10, 1], "sine", np.random.default_rng([4, 0, 0]))
    b = nw.init_mlp([3, 10, 1], "sine", np.random.default_rng([4, 0, 0]))
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert np.max(np.abs(a.weights[0])) <= np.sqrt(6 / 13)
    assert all(not np.any(bias) for bias in a.biases)


@pytest.mark.parametrize("act", nw.ACTIVATIONS)
def test_third_order_jet_against_fd_of_hessian(rng, act):
    net = _net(rng, act=act)
    x = rng.uniform(-1, 1, 2)
    for axis in range(2):
        e = np.eye(2)[axis] * 1e-4
        fd3 = (nw.input_hessian(net, x + e)[axis, axis] - nw.input_hessian(net, x - e)[axis, axis]) / 2e-4
        assert nw.directional_jet(net, x, axis, 3).d3 == pytest.approx(fd3, rel=1e-5, abs=1e-8)


def test_jet_order_truncation_and_limits(rng):
    net = _net(rng)
    j = nw.directional_jet(net, np.zeros(2), 0, 1)
    assert j.d2 == 0.0 and j.d3 == 0.0
    with pytest.raises(UnsupportedOrderError):
        nw.directional_jet(net, np.zeros(2), 0, 4)
    with pytest.raises(ShapeError):
        nw.directional_jet(net, np.zeros(2), 2)


def test_derivatives_of_identity_like_net():
    # u = 2 * sin(3x): every derivative known in closed form
    net = nw.Mlp("sine", [np.array([[3.0]]), np.array([[2.0]])], [np.zeros(1), np.zeros(1)])
    x = np.array([0.3])
    assert nw.forward(net, x) == pytest.approx(2 * np.sin(0.9))
    assert nw.input_gradient(net, x)[0] == pytest.approx(6 * np.cos(0.9))
    assert nw.input_hessian(net, x)[0, 0] == pytest.approx(-18 * np.sin(0.9))
    assert nw.directional_jet(net, x, 0).d3 == pytest.approx(-54 * np.cos(0.9))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(nw.ACTIVATIONS))
def test_gradient_hessian_against_finite_differences(seed, act):
    rng = np.random.default_rng(seed)
    net = _net(rng, dims=(3, 6, 1), act=act)
    x = rng.uniform(-1, 1, 3)
    f = lambda p: nw.forward(net, p)  # noqa: E731
    h = nw.input_hessian(net, x)
    assert relative_error(nw.input_gradient(net, x), fd_gradient(f, x), 1e-6) <= 1e-5
    assert relative_error(h, fd_hessian(f, x), 1e-4) <= 1e-4
    assert np.max(np.abs(h - h.T)) <= 1e-12


def test_flat_round_trip(rng):
    net = _net(rng)
    theta = net.flat()
    assert theta.size == net.n_params
    back = net.with_flat(theta)
    assert np.array_equal(back.flat(), theta)
    with pytest.raises(ShapeError):
        net.with_flat(theta[:-1])


def test_json_round_trip_is_exact(tmp_path, rng, validate):
    net = _net(rng)
    net.biases = [rng.normal(size=b.shape) for b in net.biases]
    p = tmp_path / "net.json"
    nw.save_mlp(net, p)
    validate(p, "mlp")
    back = nw.load_mlp(p)
    assert np.array_equal(back.flat(), net.flat())
    assert back.activation == net.activation


@pytest.mark.parametrize("doc", [
    {"activation": "tanh", "dims": [2, 1]},
    {"activation": "tanh", "dims": [2, 1], "layers": [{"w": [1.0], "b": [0.0]}]},
    {"activation": "relu", "dims": [1, 1], "layers": [{"w": [1.0], "b": [0.0]}]},
    {"activation": "tanh", "dims": [1, 1], "layers": [{"w": [float("nan")], "b": [0.0]}]},
])
def test_corrupt_documents_rejected(tmp_path, doc):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises((ParseError, ShapeError, InvalidInputError)):
        nw.load_mlp(p)


def test_invalid_json_reports_parse_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\n  oops")
    with pytest.raises(ParseError):
        nw.load_mlp(p)


def test_shape_validation():
    with pytest.raises(ShapeError):
        nw.Mlp("tanh", [np.ones((3, 2)), np.ones((1, 4))], [np.zeros(3), np.zeros(1)])
    with pytest.raises(ShapeError):
        nw.Mlp("tanh", [np.ones((2, 2))], [np.zeros(2)])
    net = nw.Mlp("tanh", [np.ones((1, 2))], [np.zeros(1)])
    with pytest.raises(ShapeError):
        nw.forward(net, np.zeros(3))
