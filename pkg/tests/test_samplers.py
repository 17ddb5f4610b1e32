import math

import numpy as np
import pytest
from scipy.linalg import expm

from rdmc._rng import ZeroNoise
from rdmc.ou import DomainError, ParticleEnsemble, Schedule
from rdmc.samplers import (fine_tune, init_hat_p, lmc, mode_weights, rdmc, snapshot_steps,
                           ulmc, ulmc_coefficients)
from rdmc.score import EstimatorConfig
from rdmc.targets import (CountingTarget, GaussianMixtureSpec, TargetDensity, make_circle_gmm,
                          make_gmm, standard_normal)

FLAT = TargetDensity(2, lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x), "flat")
SMALL_ULA = EstimatorConfig(kind="ula", sample_count=4, inner_steps=10)


def test_snapshot_steps():
    assert snapshot_steps(5) == set(range(6))
    s = snapshot_steps(1000)
    assert len(s) == 20 and 0 in s and 1000 in s
    assert snapshot_steps(10, stride=4) == {0, 4, 8, 10}


def test_rdmc_single_step_trace():
    run = rdmc(standard_normal(2), Schedule(0.1, 0.1), SMALL_ULA, n_particles=5, rng=0)
    assert [s.step for s in run.trace] == [0, 1]
    assert run.final.step_index == 1


def test_rdmc_trace_counters_monotone():
    run = rdmc(standard_normal(2), Schedule(0.5, 0.1), SMALL_ULA, n_particles=5, rng=0)
    g = [s.grad_evals for s in run.trace]
    assert g == sorted(g) and g[-1] == run.ledger.grad_evals == 5 * 5 * 4 * 10
    assert np.array_equal(run.trace[-1].particles, run.final.particles)


def test_rdmc_needs_a_drift():
    with pytest.raises(DomainError):
        rdmc(standard_normal(1), Schedule(1.0, 0.5), None)


def test_rdmc_exact_drift_fixed_point():
    x = np.random.default_rng(0).standard_normal((400_000, 2))
    run = rdmc(standard_normal(2), Schedule(1.0, 0.05), None, init=x,
               rng=np.random.default_rng(1), score_fn=lambda x, tau: -2.0 * x)
    assert np.all(np.abs(run.final.particles.var(axis=0) - 1.0) <= 0.05)


def test_rdmc_deterministic():
    kw = dict(n_particles=20, rng=123)
    a = rdmc(make_circle_gmm(3, 1.0), Schedule(0.4, 0.1), SMALL_ULA, **kw)
    b = rdmc(make_circle_gmm(3, 1.0), Schedule(0.4, 0.1), SMALL_ULA, **kw)
    assert np.array_equal(a.final.particles, b.final.particles)
    c = rdmc(make_circle_gmm(3, 1.0), Schedule(0.4, 0.1), SMALL_ULA, n_particles=20, rng=124)
    assert not np.array_equal(a.final.particles, c.final.particles)


def test_rdmc_particles_use_their_own_streams():
    # a particle's trajectory does not depend on how many other particles run with it
    x = np.random.default_rng(0).standard_normal((6, 2))
    target = make_circle_gmm(2, 1.0)
    a = rdmc(target, Schedule(0.3, 0.1), SMALL_ULA, init=x, rng=7)
    b = rdmc(target, Schedule(0.3, 0.1), SMALL_ULA, init=x[:3], rng=7)
    assert np.allclose(a.final.particles[:3], b.final.particles, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", ["importance", "ula", "is_init_ula"])
def test_rdmc_budget_exact(kind):
    t = CountingTarget(make_circle_gmm(3, 1.0))
    cfg = EstimatorConfig(kind=kind, sample_count=3, inner_steps=4, is_pool=5)
    run = rdmc(t, Schedule(0.6, 0.2), cfg, n_particles=7, rng=0)
    assert (run.ledger.grad_evals, run.ledger.f_evals) == (t.grad_calls, t.f_calls)


def test_rdmc_budget_cap_truncates():
    cap = 2 * 5 * 4 * 10 + 1
    run = rdmc(standard_normal(2), Schedule(1.0, 0.1), SMALL_ULA, n_particles=5, rng=0, budget_cap=cap)
    assert run.truncated and run.final.step_index == 2
    assert run.ledger.grad_evals <= cap


def test_rdmc_symmetric_gmm_balanced():
    target = make_gmm(GaussianMixtureSpec([[-2.0, 0.0], [2.0, 0.0]]))
    cfg = EstimatorConfig(kind="is_init_ula", sample_count=10, inner_steps=20, is_pool=100)
    run = rdmc(target, Schedule(2.0, 0.1), cfg, n_particles=1000, rng=0)
    w = mode_weights(run.final, target.modes)
    assert np.all(np.abs(w - 0.5) <= 0.1)


def test_init_hat_p_zero_iterations():
    x = np.random.default_rng(0).standard_normal((10, 2))
    run = init_hat_p(standard_normal(2), 0.5, 0, 0.1, SMALL_ULA, init=x)
    assert np.array_equal(run.final.particles, x)


def test_init_hat_p_standard_normal_stationary():
    cfg = EstimatorConfig(kind="importance", sample_count=50)
    run = init_hat_p(standard_normal(2), 0.5, 500, 0.05, cfg, n_particles=2000,
                     rng=np.random.default_rng(3))
    x = run.final.particles
    assert np.all(np.abs(x.mean(axis=0)) < 0.1)
    assert np.all(np.abs(x.var(axis=0) - 1.0) < 0.1)
    assert run.ledger.f_evals == 500 * 2000 * 50


def test_init_hat_p_populates_both_modes():
    T = 0.5 * math.log(1.5)
    target = make_gmm(GaussianMixtureSpec([[-3.0, 0.0], [3.0, 0.0]]))
    init = 3.0 * np.random.default_rng(4).standard_normal((1000, 2))
    cfg = EstimatorConfig(kind="importance", sample_count=200)
    run = init_hat_p(target, T, 200, 0.05, cfg, init=init, rng=np.random.default_rng(4))
    w = mode_weights(run.final, math.exp(-T) * target.modes)
    assert np.all(w > 0.2)


def test_lmc_zero_gradient_no_noise():
    x = np.random.default_rng(0).standard_normal((10, 2))
    run = lmc(FLAT, 0.1, 50, init=x, rng=ZeroNoise())
    assert np.array_equal(run.final.particles, x)


def pooled_variance(run, burn):
    snaps = [s.particles for s in run.trace if s.step >= burn]
    return np.concatenate(snaps).var(axis=0)


def test_lmc_stationary_variance():
    step = 0.01
    run = lmc(standard_normal(2), step, 10_000, rng=np.random.default_rng(5), n_particles=10_000,
              snapshot_stride=500)
    v = pooled_variance(run, 1000)
    assert np.all((v >= 1 - 3 * step) & (v <= 1 + 3 * step))


def test_lmc_deterministic_and_counted():
    t = CountingTarget(standard_normal(2))
    a = lmc(t, 0.05, 30, rng=9, n_particles=40)
    b = lmc(standard_normal(2), 0.05, 30, rng=9, n_particles=40)
    assert np.array_equal(a.final.particles, b.final.particles)
    assert a.ledger.grad_evals == t.grad_calls == 1200


def test_lmc_budget_cap():
    run = lmc(standard_normal(2), 0.05, 30, rng=9, n_particles=40, budget_cap=410)
    assert run.truncated and run.ledger.grad_evals == 400


def test_ulmc_zero_gradient_no_noise():
    x = np.random.default_rng(0).standard_normal((10, 2))
    run = ulmc(FLAT, 0.1, 2.0, 50, init=x, rng=ZeroNoise())
    assert np.array_equal(run.final.particles, x)


def test_ulmc_stationary_variance():
    run = ulmc(standard_normal(2), 0.01, 2.0, 10_000, rng=np.random.default_rng(6), n_particles=3000,
               snapshot_stride=500)
    v = pooled_variance(run, 2000)
    assert np.all(np.abs(v - 1.0) < 0.1)
    assert np.all(np.abs(run.metadata["velocity"].var(axis=0) - 1.0) < 0.1)


def test_ulmc_deterministic_and_counted():
    t = CountingTarget(standard_normal(2))
    a = ulmc(t, 0.05, 1.0, 30, rng=9, n_particles=40)
    b = ulmc(standard_normal(2), 0.05, 1.0, 30, rng=9, n_particles=40)
    assert np.array_equal(a.final.particles, b.final.particles)
    assert a.ledger.grad_evals == t.grad_calls == 1200
    assert "exponential" in a.metadata["scheme"]


@pytest.mark.parametrize("h,gamma", [(0.01, 2.0), (0.3, 0.5), (1.0, 5.0)])
def test_ulmc_coefficients_match_linear_sde(h, gamma):
    # state (x, v, g) with g constant: dx = v, dv = -gamma v - g, noise sqrt(2 gamma) on v
    A = np.array([[0.0, 1.0, 0.0], [0.0, -gamma, -1.0], [0.0, 0.0, 0.0]])
    Phi = expm(A * h)
    c = ulmc_coefficients(h, gamma)
    assert Phi[0, 1] == pytest.approx(c["x_from_v"], rel=1e-10)
    assert Phi[1, 1] == pytest.approx(c["v_decay"], rel=1e-10)
    assert -Phi[0, 2] == pytest.approx(c["x_from_grad"], rel=1e-10)
    assert -Phi[1, 2] == pytest.approx(c["v_from_grad"], rel=1e-10)
    # Van Loan: noise covariance of the (x, v) block
    A2 = A[:2, :2]
    Q = np.diag([0.0, 2.0 * gamma])
    M = expm(np.block([[-A2, Q], [np.zeros((2, 2)), A2.T]]) * h)
    F = M[2:, 2:].T
    cov = F @ M[:2, 2:]
    got = np.array([[c["x_noise_corr"] ** 2 + c["sd_x_resid"] ** 2, c["x_noise_corr"] * c["sd_v"]],
                    [c["x_noise_corr"] * c["sd_v"], c["sd_v"] ** 2]])
    assert np.allclose(got, cov, rtol=1e-8, atol=1e-14)


def test_fine_tune_zero_iterations():
    run = lmc(standard_normal(2), 0.05, 5, rng=0, n_particles=10)
    assert fine_tune(run, standard_normal(2), 0.05, 0) is run


def test_fine_tune_ledger_and_trace():
    run = rdmc(standard_normal(2), Schedule(0.3, 0.1), SMALL_ULA, n_particles=10, rng=0)
    out = fine_tune(run, standard_normal(2), 0.05, 7, rng=0)
    assert out.ledger.grad_evals == run.ledger.grad_evals + 7 * 10
    assert [s.step for s in out.trace] == list(range(11))
    assert out.final.step_index == 10
    assert run.ledger.grad_evals == 3 * 10 * 4 * 10  # original untouched


def test_fine_tune_keeps_moments():
    x = np.random.default_rng(0).standard_normal((20_000, 2))
    base = rdmc(standard_normal(2), Schedule(0.2, 0.1), None, init=x, rng=1,
                score_fn=lambda x, tau: -2.0 * x)
    out = fine_tune(base, standard_normal(2), 0.01, 300, rng=2)
    before = np.abs(base.final.particles.var(axis=0) - 1).max()
    after = np.abs(out.final.particles.var(axis=0) - 1).max()
    assert after <= before + 0.02


def test_mode_weights_examples():
    modes = np.array([[0.0, 0.0], [4.0, 0.0]])
    assert mode_weights(np.zeros((5, 2)), modes).tolist() == [1.0, 0.0]
    pts = np.array([[0.0, 0.0], [4.0, 0.0], [4.1, 0.0]])
    assert np.allclose(mode_weights(pts, modes), [1 / 3, 2 / 3])
    x = np.random.default_rng(0).standard_normal((5000, 2)) + [2.0, 0.0]
    sym = np.concatenate([x, [4.0, 0.0] - x])
    assert np.allclose(mode_weights(ParticleEnsemble(sym), modes), 0.5, atol=1e-12)
    with pytest.raises(DomainError):
        mode_weights(pts, np.zeros((0, 2)))
