import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xpinn_lab import bounds as bd
from xpinn_lab.errors import InvalidInputError, UnsupportedTargetError
from xpinn_lab.network import Mlp, init_mlp
from xpinn_lab.oracles import boundary_bound_formula, residual_bound_formula

# frozen instance: L=2, d=1, h=2, K=1, n=100, delta=0.1, all caps 1
RESIDUAL_FROZEN = 2183.4546986007254
BOUNDARY_FROZEN = 270.8462816372515


def _mp_bounds(L, d, h, K, n, delta, M, N):
    """Same quantities in 50-digit arithmetic, written independently of the float oracle."""
    mpmath = pytest.importorskip("mpmath")
    mp = mpmath.mp
    mp.dps = 50
    pm = mp.mpf(1)
    split = mp.mpf(delta)
    for m_, n_ in zip(M, N):
        pm *= m_
        split /= m_ * (m_ + 1) * n_ * (n_ + 1)
    cn = mp.fsum([mp.mpf(v) ** (mp.mpf(2) / 3) for v in N]) ** mp.mpf(1.5)
    n = mp.mpf(n)
    stat = 2 * mp.sqrt(mp.log(2 / split) / (2 * n))
    rate = mp.sqrt(d * mp.log(2 * h * h)) * mp.log(n) / mp.sqrt(n)
    res = ((64 * K + 32 * d * (L - 1) * K) / (n * mp.sqrt(n)) + stat
           + 144 * K * rate * pm * cn * (1 + mp.sqrt(2) * L * pm + mp.sqrt(2) * d * (L * L - 1) * pm**2))
    bnd = 32 / (n * mp.sqrt(n)) + 144 * rate * pm * cn + stat
    return float(res), float(bnd)


def test_frozen_instance_matches_both_oracles():
    inp = bd.BoundInputs(bd.LayerCaps.ones(2), 100, 1, 2, 1.0, 0.1)
    r, b = bd.residual_bound(inp), bd.boundary_bound(inp)
    assert r == pytest.approx(residual_bound_formula(2, 1, 2, 1.0, 100, 0.1, [1, 1], [1, 1]), rel=1e-12)
    assert b == pytest.approx(boundary_bound_formula(2, 1, 2, 100, 0.1, [1, 1], [1, 1]), rel=1e-12)
    r_mp, b_mp = _mp_bounds(2, 1, 2, 1.0, 100, 0.1, [1, 1], [1, 1])
    assert r == pytest.approx(r_mp, rel=1e-12)
    assert b == pytest.approx(b_mp, rel=1e-12)
    assert r == pytest.approx(RESIDUAL_FROZEN, rel=1e-12)
    assert b == pytest.approx(BOUNDARY_FROZEN, rel=1e-12)


def test_general_instance_against_mp_oracle():
    caps = bd.LayerCaps((2, 3, 1), (4, 2, 1), (1.5, 2.2, 0.7), (5.0, 4.0, 0.7))
    inp = bd.BoundInputs(caps, 2000, 3, 21, 1.0, 0.05)
    r_mp, b_mp = _mp_bounds(3, 3, 21, 1.0, 2000, 0.05, [2, 3, 1], [4, 2, 1])
    assert bd.residual_bound(inp) == pytest.approx(r_mp, rel=1e-12)
    assert bd.boundary_bound(inp) == pytest.approx(b_mp, rel=1e-12)


def test_empirical_term_adds_linearly():
    inp = bd.BoundInputs(bd.LayerCaps.ones(2), 100, 1, 2)
    assert bd.residual_bound(inp, 0.25) == pytest.approx(RESIDUAL_FROZEN + 0.25, rel=1e-14)
    assert bd.boundary_bound(inp, 0.5) == pytest.approx(BOUNDARY_FROZEN + 0.5, rel=1e-14)


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_delta_split_all_ones_is_delta_over_4_to_L(L):
    assert bd.delta_split(0.1, bd.LayerCaps.ones(L)) == 0.1 / 4**L


def test_layer_caps_of_known_matrices():
    net = Mlp("tanh", [np.diag([2.5, 1.0]), np.array([[2.0, 0.0]])], [np.zeros(2), np.zeros(1)])
    caps = bd.layer_caps(net)
    assert caps.M == (3, 2)
    # (2,1)-norm 3.5 over spectral 2.5 -> 2; row vector: 2 / 2 -> 1
    assert caps.N == (2, 1)


def test_integer_snapping_and_zero_layer():
    assert bd._ceil(2.0 + 1e-14) == 2
    assert bd._ceil(2.0 + 1e-9) == 3
    net = Mlp("tanh", [np.zeros((2, 2)), np.array([[3.0, 4.0]])], [np.zeros(2), np.zeros(1)])
    caps = bd.layer_caps(net)
    assert caps.M == (1, 5) and caps.N == (1, 2)


def test_bias_augmentation_changes_caps_and_dims():
    net = Mlp("tanh", [np.eye(1) * 0.5, np.array([[1.0]])], [np.array([3.0]), np.array([0.0])])
    plain = bd.bound_report(net, 100, 100)
    aug = bd.bound_report(net, 100, 100, include_bias=True)
    assert plain.caps.M == (1, 1) and aug.caps.M == (4, 1)
    assert (aug.d, aug.h) == (plain.d + 1, plain.h + 1)


def test_report_fields_and_small_counts(rng):
    net = init_mlp([2, 8, 8, 1], "tanh", rng)
    rep = bd.bound_report(net, 1, 50, K=1.0, delta=0.1, c1=2.0)
    assert rep.boundary_bound is None and rep.l2_bound is None and rep.residual_bound > 0
    full = bd.bound_report(net, 50, 50, c1=2.0)
    assert full.l2_bound == pytest.approx(math.sqrt(2) / 2.0 * math.sqrt(full.boundary_bound + full.residual_bound))
    assert full.L == 3 and full.d == 2 and full.h == 8
    assert full.complexity_spectral == pytest.approx(np.prod(full.caps.spectral))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 40), st.integers(10, 10**6),
       st.floats(0.01, 0.5), st.data())
def test_bounds_monotone(L, d, h, n, delta, data):
    M = data.draw(st.lists(st.integers(1, 4), min_size=L, max_size=L))
    N = data.draw(st.lists(st.integers(1, 4), min_size=L, max_size=L))
    base = bd.BoundInputs(bd.LayerCaps(tuple(M), tuple(N), (1.0,) * L, (1.0,) * L), n, d, h, 1.0, delta)
    r0, b0 = bd.residual_bound(base), bd.boundary_bound(base)
    i = data.draw(st.integers(0, L - 1))
    bigger_m = list(M)
    bigger_m[i] += 1
    up = bd.BoundInputs(bd.LayerCaps(tuple(bigger_m), tuple(N), (1.0,) * L, (1.0,) * L), n, d, h, 1.0, delta)
    assert bd.residual_bound(up) > r0 and bd.boundary_bound(up) > b0
    bigger_n = list(N)
    bigger_n[i] += 1
    up = bd.BoundInputs(bd.LayerCaps(tuple(M), tuple(bigger_n), (1.0,) * L, (1.0,) * L), n, d, h, 1.0, delta)
    assert bd.residual_bound(up) > r0 and bd.boundary_bound(up) > b0
    smaller_delta = bd.BoundInputs(base.caps, n, d, h, 1.0, delta / 2)
    assert bd.residual_bound(smaller_delta) > r0
    larger_k = bd.BoundInputs(base.caps, n, d, h, 2.0, delta)
    assert bd.residual_bound(larger_k) > r0 and bd.boundary_bound(larger_k) == b0


def test_bounds_decrease_in_n_for_large_n():
    caps = bd.LayerCaps.ones(3)
    vals = [bd.residual_bound(bd.BoundInputs(caps, n, 2, 20)) for n in (10**3, 10**4, 10**5, 10**6)]
    assert vals == sorted(vals, reverse=True)


def test_input_validation():
    with pytest.raises(InvalidInputError):
        bd.BoundInputs(bd.LayerCaps.ones(2), 1, 1, 2)
    with pytest.raises(InvalidInputError):
        bd.BoundInputs(bd.LayerCaps.ones(2), 10, 1, 2, delta=1.0)
    with pytest.raises(InvalidInputError):
        bd.l2_bound(1.0, 1.0, 0.0)
    with pytest.raises(InvalidInputError):
        bd.xpinn_aggregate([1.0, 2.0], [0, 0])


def test_xpinn_aggregate_is_count_weighted():
    assert bd.xpinn_aggregate([10.0, 20.0], [1, 3]) == pytest.approx(17.5)
    assert bd.xpinn_aggregate([10.0, 999.0], [5, 0]) == 10.0


def test_comparison_semantics_identical_nets(rng):
    net = init_mlp([2, 10, 10, 1], "tanh", rng)
    pinn = bd.bound_report(net, 200, 2000)
    halves = bd.xpinn_reports([net, net], [100, 100], [1000, 1000])
    assert all(r.delta == 0.05 for r in halves)
    table = bd.compare_posterior(pinn, halves, [1000, 1000], [100, 100])
    assert table.rows[1]["bound_pct"] > 100.0
    assert table.verdict == "PINN"
    single = bd.compare_posterior(pinn, bd.xpinn_reports([net], [200], [2000]), [2000], [200])
    assert f"{single.rows[1]['bound_pct']:.2f}" == "100.00"
    assert single.verdict == "tie"
    assert single.rows[2]["complexity_spectral_pct"] == pytest.approx(100.0)


def test_comparison_csv_columns(rng):
    net = init_mlp([2, 4, 1], "tanh", rng)
    table = bd.compare_posterior(bd.bound_report(net, 20, 100), bd.xpinn_reports([net, net], [10, 10], [50, 50]),
                                 [50, 50], [10, 10], pinn_metrics={"train_loss": 0.1, "rel_l2": 0.2})
    lines = table.to_csv().splitlines()
    assert [c.strip() for c in lines[0].split(",")] == list(bd.CSV_COLUMNS)
    assert len(lines) == 1 + 4
    assert lines[1].startswith("PINN")


# -- prior comparison ------------------------------------------------------------------

def test_barron_norm_rules():
    t = bd.SinusoidTarget(((2.0, 0), (1.0, 1)))
    horizontal = bd.Segment((0.0, 0.0), (1.0, 0.0))
    vertical = bd.Segment((0.0, 0.0), (0.0, 1.0))
    assert bd.barron_norm(t, horizontal) == 2.0
    assert bd.barron_norm(t, vertical) == 1.0
    assert bd.barron_norm(t, [horizontal, vertical]) == 3.0
    shifted = bd.Segment((0.0, 1.0), (1.0, 1.0))  # sin(y) = sin(1) != 0 there
    with pytest.raises(UnsupportedTargetError):
        bd.barron_norm(t, shifted)


def test_examples_exact_values():
    e1 = bd.prior_compare(*bd.example("4.1"), asymptotic=True)
    assert e1.pinn == 27.0 and abs(e1.xpinn - 9 / math.sqrt(2)) <= 1e-12 and e1.verdict == "XPINN"
    e2 = bd.prior_compare(*bd.example("4.2"), asymptotic=True)
    assert e2.pinn == 15.625 and abs(e2.xpinn - 23.625 / math.sqrt(2)) <= 1e-12 and e2.verdict == "PINN"


def test_tradeoff_threshold_closed_form():
    q_star = (8 / (math.sqrt(2) - 1)) ** (1 / 3) - 2
    q = bd.tradeoff_threshold()
    assert abs(q - q_star) <= 1e-9
    below = bd.prior_compare(*bd.example("4.3", q_star - 0.01), asymptotic=True)
    above = bd.prior_compare(*bd.example("4.3", q_star + 0.01), asymptotic=True)
    assert below.verdict == "PINN" and above.verdict == "XPINN"


def test_finite_n_prior_uses_log_factor():
    t, segs = bd.example("4.1")
    c = bd.prior_compare(t, segs, n_r=1000, n_r_sub=[500, 500])
    f = math.log(500) * math.sqrt(500) / (math.log(1000) * math.sqrt(1000))
    assert c.xpinn == pytest.approx(f * (8 + 1), rel=1e-14)
    with pytest.raises(InvalidInputError):
        bd.prior_compare(t, segs)
    with pytest.raises(InvalidInputError):
        bd.example("4.3", -1.0)
