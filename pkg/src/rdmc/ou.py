"""Ornstein-Uhlenbeck kernel algebra and the exponential-integrator reverse step.

The forward process is ``dx = -x dt + sqrt(2) dB`` with stationary law N(0, I).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# below this time the kernel variance is treated as exactly zero
TIME_FLOOR = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"{name} must be finite and non-negative, got {t!r}")
    return t


@dataclass(frozen=True)
class TransitionParams:
    """Mean scale ``exp(-t)`` and variance ``1 - exp(-2t)`` of the OU kernel."""

    mean_scale: float
    variance: float
    time: float


def transition_params(t: float) -> TransitionParams:
    t = _check_time(t)
    if t < TIME_FLOOR:
        return TransitionParams(1.0, 0.0, t)
    return TransitionParams(math.exp(-t), -math.expm1(-2.0 * t), t)


def forward_sample(x0, t: float, rng) -> np.ndarray:
    """Draw from the OU transition kernel started at ``x0`` (exact, no discretization).

    ``x0`` may be a single point or an ``(n, d)`` batch; ``rng`` is anything
    with a ``standard_normal(shape)`` method.
    """
    p = transition_params(t)
    x0 = np.asarray(x0, dtype=float)
    if p.variance == 0.0:
        return x0.copy()
    return p.mean_scale * x0 + math.sqrt(p.variance) * rng.standard_normal(x0.shape)


def reverse_update(x, v, s: float, rng) -> np.ndarray:
    """One exact step of ``dx = (x + v) dt + sqrt(2) dB`` over a substep ``s`` with ``v`` frozen.

    Returns ``e^s x + (e^s - 1) v + N(0, (e^{2s} - 1) I)``.
    """
    s = float(s)
    if not math.isfinite(s) or s <= 0:
        raise DomainError(f"substep must be finite and positive, got {s!r}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise DomainError("non-finite particle or drift")
    growth = math.expm1(s)
    noise_sd = math.sqrt(math.expm1(2.0 * s))
    return (1.0 + growth) * x + growth * v + noise_sd * rng.standard_normal(x.shape)


def forward_kl_bound(kl0: float, t: float) -> float:
    """Upper bound ``kl0 * exp(-t/2)`` on the KL divergence of the forward marginal to N(0, I)."""
    kl0 = float(kl0)
    if not math.isfinite(kl0) or kl0 < 0:
        raise DomainError(f"initial divergence must be non-negative, got {kl0!r}")
    return kl0 * math.exp(-_check_time(t) / 2.0)


def choose_terminal_time(kl0: float, eps: float) -> float:
    """Smallest T at which the forward KL bound drops to ``2 eps^2``: ``2 ln(kl0 / (2 eps^2))``."""
    kl0, eps = float(kl0), float(eps)
    if kl0 <= 0 or eps <= 0:
        raise DomainError("kl0 and eps must be positive")
    ratio = kl0 / (2.0 * eps * eps)
    if ratio <= 1.0:
        raise DomainError("target accuracy already satisfied at T=0")
    return 2.0 * math.log(ratio)


@dataclass(frozen=True)
class Schedule:
    """Reverse-time grid: terminal time ``T``, outer step ``eta`` and ``floor(T / eta)`` steps."""

    terminal_time: float
    outer_step: float
    num_steps: int = field(init=False)

    def __post_init__(self):
        T, eta = float(self.terminal_time), float(self.outer_step)
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"terminal time must be positive, got {T!r}")
        if not (math.isfinite(eta) and 0 < eta <= T):
            raise DomainError(f"outer step must lie in (0, T], got {eta!r}")
        # tolerate T/eta landing a hair below an integer
        n = int(math.floor(T / eta + 1e-9))
        object.__setattr__(self, "terminal_time", T)
        object.__setattr__(self, "outer_step", eta)
        object.__setattr__(self, "num_steps", n)

    def remaining_time(self, k: int) -> float:
        """Remaining time ``T - k * eta`` at outer step ``k``."""
        if not 0 <= k < self.num_steps:
            raise IndexError(k)
        return self.terminal_time - k * self.outer_step


@dataclass
class ParticleEnsemble:
    """``n`` points in R^d plus the index of the step that produced them."""

    particles: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        p = np.array(self.particles, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise DomainError(f"particles must be a non-empty (n, d) array, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DomainError("particles contain non-finite coordinates")
        self.particles = p
        if self.step_index < 0:
            raise DomainError("step index must be non-negative")

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def __len__(self) -> int:
        return self.particles.shape[0]
