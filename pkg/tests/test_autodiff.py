import numpy as np
import pytest

from xpinn_lab import autodiff as ad
from xpinn_lab.errors import NumericOverflowError
from xpinn_lab.network import directional_jet, forward, init_mlp, input_gradient, input_hessian


@pytest.fixture(params=["sine", "tanh"])
def net(request, rng):
    n = init_mlp([2, 6, 5, 1], request.param, rng)
    n.biases = [rng.normal(size=b.shape) * 0.3 for b in n.biases]
    return n


def test_net_fields_match_closed_forms(net, rng):
    x = rng.uniform(-1, 1, size=(7, 2))
    f = ad.net_fields(net, x, grad_axes=(0, 1), hess_pairs=((0, 0), (0, 1), (1, 1)), third_axes=(0, 1))
    g, h = input_gradient(net, x), input_hessian(net, x)
    np.testing.assert_allclose(ad.value_of(f.u), forward(net, x), rtol=1e-13)
    for i in range(2):
        np.testing.assert_allclose(ad.value_of(f.grad[i]), g[:, i], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(ad.value_of(f.third[i]), directional_jet(net, x, i).d3, rtol=1e-11, atol=1e-13)
    for (i, j) in ((0, 0), (0, 1), (1, 1)):
        np.testing.assert_allclose(ad.value_of(f.h(j, i)), h[:, i, j], rtol=1e-11, atol=1e-13)


def test_only_requested_fields_present(net, rng):
    f = ad.net_fields(net, rng.uniform(size=(3, 2)), grad_axes=(1,))
    assert set(f.grad) == {1} and not f.hess and not f.third


def test_gradient_of_output_mean_matches_manual(rng):
    # u(x) = w2 . tanh(W1 x + b1) + b2; d mean(u) / d b2 = 1, / d w2 = mean(tanh(.))
    net = init_mlp([1, 3, 1], "tanh", rng)
    x = rng.uniform(-1, 1, size=(5, 1))
    value, (g,) = ad.grad(lambda t: ad.mean(ad.net_fields(t, x).u), net)
    hidden = np.tanh(x @ net.weights[0].T + net.biases[0])
    assert value == pytest.approx(float(np.mean(forward(net, x))))
    assert g.biases[1][0] == pytest.approx(1.0)
    np.testing.assert_allclose(g.weights[1][0], hidden.mean(axis=0), rtol=1e-12)


def test_parameter_gradient_of_derivative_loss(net, rng):
    x = rng.uniform(-1, 1, size=(9, 2))

    def loss(t):
        f = ad.net_fields(t, x, grad_axes=(1,), hess_pairs=((0, 0),), third_axes=(0,))
        r = f.grad[1] + f.u * f.grad[0] - 0.01 * f.third[0] + f.h(0, 0)
        return ad.mean(ad.square(r))

    assert ad.check_gradient(loss, net, step=1e-6) <= 1e-5


def test_constant_loss_yields_zero_gradient(rng):
    net = init_mlp([1, 2, 1], "tanh", rng)
    value, (g,) = ad.grad(lambda t: 3.5, net)
    assert value == 3.5
    assert not np.any(g.flat())


def test_no_recording_outside_tape(rng):
    net = init_mlp([1, 2, 1], "tanh", rng)
    t = ad.taped(net)
    out = ad.net_fields(t, np.zeros((2, 1))).u
    assert out.parents == ()  # nothing recorded: no active tape


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_overflow_is_reported_with_primitive_name():
    v = ad.Var(np.array([1e200]), requires_grad=True, op="param")
    tape = ad.Tape()
    with tape.recording(), pytest.raises(NumericOverflowError) as info:
        ad.square(v)
    assert info.value.primitive == "square"


def test_division_by_var_is_unsupported():
    with pytest.raises(TypeError):
        ad.Var(np.ones(2)) / ad.Var(np.ones(2))


def test_broadcast_gradients_are_unbroadcast(rng):
    net = init_mlp([2, 4, 1], "sine", rng)
    x = rng.uniform(size=(11, 2))
    _, (g,) = ad.grad(lambda t: ad.total(ad.net_fields(t, x).u), net)
    assert [w.shape for w in g.weights] == [w.shape for w in net.weights]
    assert [b.shape for b in g.biases] == [b.shape for b in net.biases]


def test_check_gradient_rejects_bad_step(rng):
    net = init_mlp([1, 2, 1], "tanh", rng)
    with pytest.raises(ValueError):
        ad.check_gradient(lambda t: ad.mean(ad.net_fields(t, np.zeros((1, 1))).u), net, step=0.5)
