import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmc.metrics import (MmdConfig, gaussian_diagnostics, median_bandwidth, mmd_squared,
                          moment_sum)
from rdmc.ou import DomainError


def naive_mmd2(X, Y, h):
    def k(a, b):
        return math.exp(-sum((ai - bi) ** 2 for ai, bi in zip(a, b)) / (2 * h * h))

    m, n = len(X), len(Y)
    kxx = sum(k(a, b) for a in X for b in X) / (m * m)
    kyy = sum(k(a, b) for a in Y for b in Y) / (n * n)
    kxy = sum(k(a, b) for a in X for b in Y) / (m * n)
    return kxx + kyy - 2 * kxy


def naive_lower_median(Z):
    d = sorted(math.dist(Z[i], Z[j]) for i in range(len(Z)) for j in range(i + 1, len(Z)))
    return d[(len(d) - 1) // 2]


@pytest.mark.parametrize("seed", range(10))
def test_mmd_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((50, 3))
    Y = rng.standard_normal((50, 3)) + 0.5
    h = naive_lower_median(np.concatenate([X, Y]).tolist())
    assert median_bandwidth(X, Y) == pytest.approx(h, abs=1e-14)
    assert mmd_squared(X, Y) == pytest.approx(naive_mmd2(X.tolist(), Y.tolist(), h), abs=1e-12)


def test_mmd_identical_inputs_zero():
    X = np.random.default_rng(0).standard_normal((80, 2))
    assert mmd_squared(X, X) <= 1e-12


def test_mmd_two_points_closed_form():
    x, y, h = np.array([[0.0, 0.0]]), np.array([[1.0, 2.0]]), 1.7
    expected = 2 - 2 * math.exp(-5.0 / (2 * h * h))
    assert mmd_squared(x, y, MmdConfig(bandwidth=h)) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_mmd_symmetric_nonnegative_permutation_invariant(m, n, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((m, 2)), rng.standard_normal((n, 2)) * 2
    a = mmd_squared(X, Y)
    assert a >= 0
    assert mmd_squared(Y, X) == pytest.approx(a, abs=1e-12)
    assert mmd_squared(X[rng.permutation(m)], Y[rng.permutation(n)]) == pytest.approx(a, abs=1e-12)


def test_mmd_median_subsampling_is_seeded():
    X = np.random.default_rng(0).standard_normal((3000, 2))
    Y = np.random.default_rng(1).standard_normal((3000, 2))
    assert median_bandwidth(X, Y, seed=0) == median_bandwidth(X, Y, seed=0)


def test_mmd_separates_distributions():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((500, 2))
    assert mmd_squared(X, rng.standard_normal((500, 2)) + 3) > 10 * mmd_squared(X, rng.standard_normal((500, 2)))


@pytest.mark.parametrize("X,Y", [(np.zeros((0, 2)), np.zeros((3, 2))), (np.zeros((3, 2)), np.zeros((3, 1)))])
def test_mmd_errors(X, Y):
    with pytest.raises(DomainError):
        mmd_squared(X, Y)


@pytest.mark.parametrize("bad", [dict(bandwidth=0.0), dict(bandwidth="silverman"), dict(estimator="u")])
def test_mmd_config_validation(bad):
    with pytest.raises(DomainError):
        MmdConfig(**bad)


def test_moment_sum():
    for p in (1, 2, 3):
        assert moment_sum(np.zeros((4, 3)), p) == 0.0
    assert moment_sum(np.array([[1.0, 2.0]]), 2) == 5.0
    X = np.random.default_rng(3).standard_normal((100_000, 4))
    assert moment_sum(X, 2) == pytest.approx(4.0, rel=0.03)
    with pytest.raises(DomainError):
        moment_sum(X, 4)


def test_gaussian_diagnostics():
    out = gaussian_diagnostics(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(out["mean"], [1.0, 0.0]) and np.allclose(out["cov_diag"], [2.0, 0.0])
    X = np.random.default_rng(4).standard_normal((30, 3))
    c = np.array([1.0, -5.0, 100.0])
    a, b = gaussian_diagnostics(X), gaussian_diagnostics(X + c)
    assert np.allclose(b["mean"], a["mean"] + c)
    assert np.allclose(b["cov_diag"], a["cov_diag"], rtol=1e-10)
    assert np.all(a["cov_diag"] >= 0)
    with pytest.raises(DomainError):
        gaussian_diagnostics(np.zeros((1, 2)))
