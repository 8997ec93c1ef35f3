import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from xpinn_lab import linalg
from xpinn_lab.errors import InvalidInputError
from xpinn_lab.oracles import norm_2_1_loop, path_norm_enumerate, spectral_norm_jacobi

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_spectral_norm_known_values():
    assert linalg.spectral_norm(np.diag([3.0, -5.0, 1.0])) == pytest.approx(5.0, rel=1e-12)
    assert linalg.spectral_norm([[1.0, 1.0], [1.0, 1.0]]) == pytest.approx(2.0, rel=1e-12)
    # rank one: ||u v^T|| = |u||v|
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert linalg.spectral_norm(np.outer(u, v)) == pytest.approx(15.0, rel=1e-12)


def test_spectral_norm_matches_jacobi_oracle(rng):
    for _ in range(100):
        m = rng.normal(size=(rng.integers(1, 33), rng.integers(1, 33)))
        ref = spectral_norm_jacobi(m)
        assert abs(linalg.spectral_norm(m) - ref) <= 1e-8 * ref


def test_zero_matrix_and_ratio_convention():
    z = np.zeros((3, 4))
    assert linalg.spectral_norm(z) == 0.0
    assert linalg.norm_ratio(z) == 1.0


def test_row_vector_is_one_by_n():
    v = np.array([3.0, 4.0])
    assert linalg.spectral_norm(v) == pytest.approx(5.0)
    # columns of a 1 x n matrix are scalars, so the (2,1)-norm is the l1 norm
    assert linalg.norm_2_1(v) == pytest.approx(7.0)


def test_norm_2_1_against_loop(rng):
    for _ in range(50):
        m = rng.normal(size=(rng.integers(1, 10), rng.integers(1, 10)))
        assert linalg.norm_2_1(m) == pytest.approx(norm_2_1_loop(m), rel=1e-13)


def test_norm_1_inf_is_max_row_sum():
    m = np.array([[1.0, -2.0], [0.5, 0.5], [-3.0, 0.0]])
    assert linalg.norm_1_inf(m) == 3.0


def test_path_norm_against_enumeration(rng):
    for _ in range(20):
        dims = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(2, 5)))] + [1]
        ws = [rng.normal(size=(b, a)) for a, b in zip(dims[:-1], dims[1:])]
        assert linalg.path_norm(ws) == pytest.approx(path_norm_enumerate(ws), rel=1e-12)


@pytest.mark.parametrize("bad", [np.array([[np.nan]]), np.zeros((0, 3)), np.zeros((2, 2, 2))])
def test_invalid_matrices_rejected(bad):
    with pytest.raises(InvalidInputError):
        linalg.spectral_norm(bad)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_norm_ordering(m):
    s, f, c = linalg.spectral_norm(m), linalg.frobenius_norm(m), linalg.norm_2_1(m)
    assert s <= f * (1 + 1e-10) + 1e-12
    assert f <= c * (1 + 1e-10) + 1e-12
    assert linalg.norm_ratio(m) >= 1 - 1e-10


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(-5, 5, allow_nan=False).filter(lambda a: abs(a) > 1e-3))
def test_homogeneity(m, a):
    s = linalg.spectral_norm(m)
    assert linalg.spectral_norm(a * m) == pytest.approx(abs(a) * s, rel=1e-9, abs=1e-12)
    assert linalg.norm_2_1(a * m) == pytest.approx(abs(a) * linalg.norm_2_1(m), rel=1e-12, abs=1e-12)
