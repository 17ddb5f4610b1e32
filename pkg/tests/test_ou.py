import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmc._rng import ParticleStreams, ZeroNoise
from rdmc.metrics import MmdConfig, mmd_permutation_threshold, mmd_squared
from rdmc.ou import (DomainError, ParticleEnsemble, Schedule, choose_terminal_time,
                     forward_kl_bound, forward_sample, reverse_update, transition_params)


def test_transition_params_identity():
    p = transition_params(0.0)
    assert (p.mean_scale, p.variance) == (1.0, 0.0)


def test_transition_params_ln2():
    p = transition_params(math.log(2))
    assert p.mean_scale == pytest.approx(0.5, abs=1e-15)
    assert p.variance == pytest.approx(0.75, abs=1e-15)


def test_transition_params_large_time():
    p = transition_params(10.0)
    assert p.mean_scale == pytest.approx(4.539993e-5, rel=1e-6)
    assert p.variance == pytest.approx(0.9999999979, abs=1e-10)


@pytest.mark.parametrize("t", [-1.0, float("nan"), float("inf")])
def test_transition_params_rejects_bad_time(t):
    with pytest.raises(DomainError):
        transition_params(t)


def test_small_time_variance_keeps_precision():
    # expm1 keeps full relative precision where 1 - exp(-2t) would cancel
    assert transition_params(1e-10).variance == pytest.approx(2e-10, rel=1e-9)
    assert transition_params(1e-13).variance == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 20), st.floats(0, 20))
def test_transition_params_compose(t1, t2):
    a, b, ab = transition_params(t1), transition_params(t2), transition_params(t1 + t2)
    assert ab.mean_scale == pytest.approx(a.mean_scale * b.mean_scale, rel=1e-12, abs=1e-300)
    expected = b.variance + b.mean_scale ** 2 * a.variance
    assert ab.variance == pytest.approx(expected, rel=1e-12, abs=1e-13)


def test_forward_sample_zero_time_is_identity():
    x0 = np.array([[1.5, -2.0]])
    assert np.array_equal(forward_sample(x0, 0.0, np.random.default_rng(0)), x0)


@pytest.mark.parametrize("t", [0.1, 1.0])
def test_forward_sample_moments(t):
    x = forward_sample(np.zeros((100_000, 2)), t, np.random.default_rng(1))
    var = -math.expm1(-2 * t)
    assert np.all(np.abs(x.mean(axis=0)) < 0.02 * math.sqrt(var) * 3)
    assert np.allclose(x.var(axis=0), var, rtol=0.02)


def test_forward_sample_reaches_stationarity():
    x = forward_sample(np.full((100_000, 2), 5.0), 20.0, np.random.default_rng(2))
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    assert np.allclose(x.var(axis=0), 1.0, rtol=0.02)


def test_forward_sample_composition_matches_single_jump():
    rng = np.random.default_rng(3)
    start = np.full((2000, 1), 2.0)
    two_jumps = forward_sample(forward_sample(start, 0.3, rng), 0.4, rng)
    one_jump = forward_sample(start, 0.7, rng)
    cfg = MmdConfig()
    stat = mmd_squared(two_jumps, one_jump, cfg)
    assert stat < mmd_permutation_threshold(two_jumps, one_jump, cfg, permutations=100, seed=4)


def test_reverse_update_drift_part():
    out = reverse_update(np.ones((1, 3)), np.full((1, 3), 3.0), math.log(2), ZeroNoise())
    assert np.allclose(out, 5.0, atol=1e-14)


def test_reverse_update_tiny_step():
    x = np.array([[0.3, -1.2]])
    out = reverse_update(x, np.array([[2.0, 1.0]]), 1e-12, ZeroNoise())
    assert np.abs(out - x).max() < 1e-9


def test_reverse_update_noise_moments():
    s = 0.2
    x = np.full((100_000, 2), 0.7)
    out = reverse_update(x, np.zeros_like(x), s, np.random.default_rng(5))
    assert np.allclose(out.mean(axis=0), math.exp(s) * 0.7, atol=0.01)
    assert np.allclose(out.var(axis=0), math.exp(2 * s) - 1, rtol=0.02)


@pytest.mark.parametrize("bad", [dict(s=0.0), dict(s=-1.0), dict(x=np.array([[np.nan]]))])
def test_reverse_update_domain(bad):
    args = dict(x=np.zeros((1, 1)), v=np.zeros((1, 1)), s=0.1)
    args.update(bad)
    with pytest.raises(DomainError):
        reverse_update(args["x"], args["v"], args["s"], ZeroNoise())


def test_reverse_update_reproducible():
    x = np.random.default_rng(0).standard_normal((20, 2))
    a = reverse_update(x, -2 * x, 0.1, ParticleStreams(9, 20))
    b = reverse_update(x, -2 * x, 0.1, ParticleStreams(9, 20))
    assert np.array_equal(a, b)


def test_reverse_update_second_order_bias_with_exact_drift():
    # one step with v = -2x on N(0, I): second moment becomes 3 - 4e^s + 2e^{2s} = 1 + 2s^2 + O(s^3)
    rng = np.random.default_rng(6)
    devs = []
    for eta in (0.1, 0.05, 0.025):
        x = rng.standard_normal((2_000_000, 2))
        out = reverse_update(x, -2 * x, eta, rng)
        devs.append(abs((out ** 2).mean() - (x ** 2).mean()))
        assert devs[-1] <= 4 * eta ** 2
    assert 2.5 <= devs[0] / devs[1] <= 6 and 2.5 <= devs[1] / devs[2] <= 6


def test_forward_kl_bound():
    assert forward_kl_bound(3.0, 0.0) == 3.0
    assert forward_kl_bound(2.0, 2.0) == pytest.approx(0.7357589, rel=1e-7)
    assert forward_kl_bound(0.0, 5.0) == 0.0
    with pytest.raises(DomainError):
        forward_kl_bound(-1.0, 1.0)


def test_choose_terminal_time():
    assert choose_terminal_time(2 * math.e, 1.0) == pytest.approx(2.0, abs=1e-14)
    assert choose_terminal_time(2.0, math.exp(-0.5)) == pytest.approx(2.0, abs=1e-14)
    with pytest.raises(DomainError, match="already satisfied"):
        choose_terminal_time(2.0, 1.0)


def test_schedule():
    s = Schedule(1.0, 0.05)
    assert s.num_steps == 20
    assert s.remaining_time(19) == pytest.approx(0.05)
    assert Schedule(1.0, 0.3).num_steps == 3
    for bad in [(1.0, 2.0), (0.0, 0.1), (1.0, 0.0)]:
        with pytest.raises(DomainError):
            Schedule(*bad)


def test_particle_ensemble_validation():
    assert ParticleEnsemble(np.zeros((3, 2))).dim == 2
    with pytest.raises(DomainError):
        ParticleEnsemble(np.array([[np.inf, 0.0]]))
    with pytest.raises(DomainError):
        ParticleEnsemble(np.zeros((0, 2)))
