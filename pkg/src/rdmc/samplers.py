"""Reverse diffusion Monte Carlo, its initialization and Langevin baselines.

Each sampler draws from per-particle streams keyed by ``(seed, stage, step,
particle)``; pass an integer seed for reproducible runs, or a noise stub such
as :class:`~rdmc._rng.ZeroNoise` to switch the randomness off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from ._rng import ParticleStreams, normal_steps
from .ou import DomainError, ParticleEnsemble, Schedule, reverse_update
from .score import EstimatorConfig, PosteriorContext, estimate_score
from .targets import TargetDensity

ULMC_SCHEME = "exponential-integrator (velocity OU solved exactly, gradient frozen per step)"


@dataclass
class BudgetLedger:
    grad_evals: int = 0
    f_evals: int = 0
    cap: int | None = None

    def affords(self, grad: int) -> bool:
        return self.cap is None or self.grad_evals + grad <= self.cap

    def charge(self, grad: int = 0, f: int = 0) -> None:
        self.grad_evals += int(grad)
        self.f_evals += int(f)


@dataclass
class Snapshot:
    step: int
    grad_evals: int
    f_evals: int
    particles: np.ndarray


@dataclass
class SamplerRun:
    trace: list[Snapshot]
    final: ParticleEnsemble
    ledger: BudgetLedger
    truncated: bool = False
    metadata: dict = field(default_factory=dict)


def snapshot_steps(num_steps: int, stride: int | None = None) -> set[int]:
    """Step indices recorded in a trace: all of them up to 200 steps, else 20 evenly spaced."""
    if stride is not None:
        if stride < 1:
            raise DomainError("snapshot stride must be >= 1")
        return set(range(0, num_steps + 1, stride)) | {num_steps}
    if num_steps <= 200:
        return set(range(num_steps + 1))
    return {int(round(s)) for s in np.linspace(0, num_steps, 20)}


class _Recorder:
    def __init__(self, keep: set[int], ledger: BudgetLedger, offset: int = 0):
        self.keep, self.ledger, self.offset = keep, ledger, offset
        self.trace: list[Snapshot] = []
        self.last = -1

    def __call__(self, step: int, x: np.ndarray, force: bool = False) -> None:
        if (step in self.keep or force) and step != self.last:
            self.trace.append(Snapshot(step + self.offset, self.ledger.grad_evals,
                                       self.ledger.f_evals, x.copy()))
            self.last = step


def _initial_particles(init, n_particles: int, dim: int, rng) -> np.ndarray:
    if isinstance(init, ParticleEnsemble):
        return init.particles.copy()
    if isinstance(init, str):
        if init != "standard_normal":
            raise DomainError(f"unknown initialization {init!r}")
        return _stage(rng, n_particles, _rng.STAGE_INIT).standard_normal((n_particles, dim))
    x = np.array(init, dtype=float)
    if x.ndim != 2 or x.shape[1] != dim:
        raise DomainError(f"initial ensemble must have shape (n, {dim})")
    return x


def _stage(rng, n: int, *key: int):
    if isinstance(rng, (int, np.integer)):
        return ParticleStreams(int(rng), n, key)
    if isinstance(rng, ParticleStreams):
        return rng.child(*key, size=n)
    return rng


def rdmc(target: TargetDensity, schedule: Schedule, est_cfg: EstimatorConfig | None,
         n_particles: int = 1000, init="standard_normal", rng=0,
         budget_cap: int | None = None, snapshot_stride: int | None = None,
         score_fn: Callable[[np.ndarray, float], np.ndarray] | None = None,
         ledger: BudgetLedger | None = None) -> SamplerRun:
    """Simulate the discretized reverse OU process from ``init`` towards the target.

    At outer step ``k`` the drift is estimated at remaining time
    ``T - k * eta`` for every particle and the exact linear-SDE step of length
    ``eta`` is applied.  ``score_fn(x, tau)`` replaces the Monte Carlo
    estimate with a known drift ``2 grad log p_tau`` (used for testing the
    integrator).  Stops early, flagged ``truncated``, when the next outer step
    would push gradient evaluations past ``budget_cap``.
    """
    if est_cfg is None and score_fn is None:
        raise DomainError("need an estimator config or an explicit score function")
    if n_particles < 1:
        raise DomainError("need at least one particle")
    x = _initial_particles(init, n_particles, target.dim, rng)
    n = x.shape[0]
    ledger = ledger or BudgetLedger(cap=budget_cap)
    if budget_cap is not None:
        ledger.cap = budget_cap
    record = _Recorder(snapshot_steps(schedule.num_steps, snapshot_stride), ledger)
    record(0, x)
    truncated = False
    step = 0
    for k in range(schedule.num_steps):
        tau = schedule.remaining_time(k)
        streams = _stage(rng, n, _rng.STAGE_STEP, k)
        if score_fn is not None:
            drift = np.asarray(score_fn(x, tau), dtype=float)
        else:
            if not ledger.affords(est_cfg.grad_cost(n)):
                truncated = True
                break
            est = estimate_score(PosteriorContext(x, tau, target), est_cfg, streams)
            ledger.charge(est.grad_evals, est.f_evals)
            drift = est.drift
        x = reverse_update(x, drift, schedule.outer_step, streams)
        step = k + 1
        record(step, x)
    record(step, x, force=True)
    meta = {
        "sampler": "rdmc",
        "terminal_time": schedule.terminal_time,
        "outer_step": schedule.outer_step,
        "num_steps": schedule.num_steps,
    }
    return SamplerRun(record.trace, ParticleEnsemble(x, step), ledger, truncated, meta)


def init_hat_p(target: TargetDensity, T: float, iters: int, step: float,
               est_cfg: EstimatorConfig, n_particles: int = 1000, init="standard_normal",
               rng=0, budget_cap: int | None = None) -> SamplerRun:
    """Langevin on the forward marginal at time ``T`` with Monte Carlo scores.

    Each iteration estimates ``grad log p_T`` at every particle (half the
    reverse drift) and takes ``x + step * score + sqrt(2 step) z``.
    """
    if not (T > 0 and step > 0):
        raise DomainError("terminal time and step size must be positive")
    if iters < 0:
        raise DomainError("iteration count must be >= 0")
    x = _initial_particles(init, n_particles, target.dim, rng)
    n = x.shape[0]
    ledger = BudgetLedger(cap=budget_cap)
    record = _Recorder(snapshot_steps(iters), ledger)
    record(0, x)
    truncated = False
    done = 0
    for k in range(iters):
        if not ledger.affords(est_cfg.grad_cost(n)):
            truncated = True
            break
        streams = _stage(rng, n, _rng.STAGE_HAT_P, k)
        est = estimate_score(PosteriorContext(x, T, target), est_cfg, streams)
        ledger.charge(est.grad_evals, est.f_evals)
        x = x + step * (0.5 * est.drift) + math.sqrt(2.0 * step) * streams.standard_normal(x.shape)
        done = k + 1
        record(done, x)
    record(done, x, force=True)
    meta = {"sampler": "init_hat_p", "terminal_time": T, "step": step}
    return SamplerRun(record.trace, ParticleEnsemble(x, done), ledger, truncated, meta)


def _langevin(target, step, iters, x, rng, ledger, offset, stride):
    if not step > 0:
        raise DomainError("step size must be positive")
    if iters < 0:
        raise DomainError("iteration count must be >= 0")
    n = x.shape[0]
    if ledger.cap is not None:
        iters = min(iters, max(0, (ledger.cap - ledger.grad_evals) // n))
    record = _Recorder(snapshot_steps(iters, stride), ledger, offset)
    record(0, x)
    noise_sd = math.sqrt(2.0 * step)
    k = 0
    for k, z in enumerate(normal_steps(rng, iters, x.shape), start=1):
        x = x - step * target.grad(x) + noise_sd * z
        ledger.charge(n)
        record(k, x)
    record(k, x, force=True)
    return record.trace, x, k


def lmc(target: TargetDensity, step: float, iters: int, init="standard_normal", rng=0,
        budget_cap: int | None = None, snapshot_stride: int | None = None,
        n_particles: int = 1000) -> SamplerRun:
    """Unadjusted Langevin: ``x - step * grad f*(x) + sqrt(2 step) z``."""
    x = _initial_particles(init, n_particles, target.dim, rng)
    ledger = BudgetLedger(cap=budget_cap)
    streams = _stage(rng, x.shape[0], _rng.STAGE_LMC)
    trace, x, done = _langevin(target, step, iters, x, streams, ledger, 0, snapshot_stride)
    meta = {"sampler": "lmc", "step": step}
    return SamplerRun(trace, ParticleEnsemble(x, done), ledger, done < iters, meta)


def ulmc_coefficients(step: float, friction: float) -> dict:
    """Drift and noise coefficients of one exact underdamped step with frozen gradient."""
    g, h = float(friction), float(step)
    e1 = math.exp(-g * h)
    one_m_e1 = -math.expm1(-g * h)
    var_v = -math.expm1(-2.0 * g * h)
    var_x = (2.0 * g * h - 3.0 + 4.0 * e1 - e1 * e1) / (g * g)
    cov = one_m_e1 * one_m_e1 / g
    return {
        "v_decay": e1,
        "x_from_v": one_m_e1 / g,
        "v_from_grad": one_m_e1 / g,
        "x_from_grad": (h - one_m_e1 / g) / g,
        "sd_v": math.sqrt(var_v),
        "x_noise_corr": cov / math.sqrt(var_v),
        "sd_x_resid": math.sqrt(max(var_x - cov * cov / var_v, 0.0)),
    }


def ulmc(target: TargetDensity, step: float, friction: float, iters: int, init="standard_normal",
         rng=0, budget_cap: int | None = None, snapshot_stride: int | None = None,
         n_particles: int = 1000) -> SamplerRun:
    """Underdamped Langevin ``dx = v dt, dv = -gamma v dt - grad f* dt + sqrt(2 gamma) dB``.

    Velocities start from N(0, I).  Each step solves the linear SDE exactly
    with the gradient frozen at the start of the step.
    """
    if not (step > 0 and friction > 0):
        raise DomainError("step size and friction must be positive")
    x = _initial_particles(init, n_particles, target.dim, rng)
    n, d = x.shape
    ledger = BudgetLedger(cap=budget_cap)
    if ledger.cap is not None:
        iters = min(iters, max(0, ledger.cap // n))
    streams = _stage(rng, n, _rng.STAGE_ULMC)
    c = ulmc_coefficients(step, friction)
    record = _Recorder(snapshot_steps(iters, snapshot_stride), ledger)
    record(0, x)
    draws = normal_steps(streams, iters + 1, (n, 2, d))
    v = next(draws)[:, 0, :]
    k = 0
    for k in range(1, iters + 1):
        z = next(draws)
        g = target.grad(x)
        ledger.charge(n)
        x_new = x + c["x_from_v"] * v - c["x_from_grad"] * g \
            + c["x_noise_corr"] * z[:, 0, :] + c["sd_x_resid"] * z[:, 1, :]
        v = c["v_decay"] * v - c["v_from_grad"] * g + c["sd_v"] * z[:, 0, :]
        x = x_new
        record(k, x)
    record(k, x, force=True)
    meta = {"sampler": "ulmc", "step": step, "friction": friction, "scheme": ULMC_SCHEME}
    run = SamplerRun(record.trace, ParticleEnsemble(x, k), ledger, k < iters, meta)
    run.metadata["velocity"] = v
    return run


def fine_tune(run: SamplerRun, target: TargetDensity, step: float, iters: int, rng=0,
              snapshot_stride: int | None = None) -> SamplerRun:
    """Continue a finished run with unadjusted Langevin, extending its trace and ledger."""
    if iters == 0:
        return run
    x = run.final.particles
    ledger = BudgetLedger(run.ledger.grad_evals, run.ledger.f_evals, run.ledger.cap)
    offset = run.final.step_index
    streams = _stage(rng, x.shape[0], _rng.STAGE_FINE_TUNE)
    trace, x, done = _langevin(target, step, iters, x, streams, ledger, offset,
                               snapshot_stride)
    meta = dict(run.metadata, fine_tune_step=step, fine_tune_iters=done)
    return SamplerRun(run.trace + trace[1:], ParticleEnsemble(x, offset + done), ledger,
                      run.truncated or done < iters, meta)


def mode_weights(particles, modes) -> np.ndarray:
    """Share of particles whose nearest mode (Euclidean) is each of ``modes``."""
    p = particles.particles if isinstance(particles, ParticleEnsemble) else np.asarray(particles, float)
    modes = np.atleast_2d(np.asarray(modes, dtype=float))
    if modes.size == 0:
        raise DomainError("need at least one mode")
    sq = ((p[:, None, :] - modes[None, :, :]) ** 2).sum(axis=-1)
    counts = np.bincount(sq.argmin(axis=1), minlength=len(modes))
    return counts / counts.sum()
