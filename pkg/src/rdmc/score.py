"""Monte Carlo estimates of the reverse-SDE drift ``2 * grad log p_tau``.

The score of the forward marginal at remaining time ``tau`` is an affine
function of the mean of the posterior

    q(x0 | x) ~ exp(-f*(x0) - |x - a x0|^2 / (2 s^2)),   a = e^{-tau}, s^2 = 1 - e^{-2 tau},

namely ``grad log p_tau(x) = (a E[x0] - x) / s^2``.  Estimators here sample
that posterior (importance sampling from its Gaussian factor, unadjusted
Langevin, or both) and report ``drift = 2 * grad log p_tau``.

Every function is batched over query points: ``ctx.query`` has shape
``(m, d)`` and per-query sample clouds have shape ``(m, n, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._rng import normal_steps
from .ou import DomainError
from .targets import TargetDensity

KINDS = ("importance", "ula", "is_init_ula")

# posterior variance below which the drift is reported as zero
VARIANCE_FLOOR = 1e-10


@dataclass(frozen=True)
class PosteriorContext:
    query: np.ndarray
    remaining_time: float
    target: TargetDensity

    def __post_init__(self):
        tau = float(self.remaining_time)
        if not (math.isfinite(tau) and tau > 0):
            raise DomainError(f"remaining time must be positive, got {tau!r}")
        q = np.atleast_2d(np.asarray(self.query, dtype=float))
        if q.shape[1] != self.target.dim:
            raise DomainError("query dimension does not match the target")
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "remaining_time", tau)

    @property
    def alpha(self) -> float:
        return math.exp(-self.remaining_time)

    @property
    def s2(self) -> float:
        return -math.expm1(-2.0 * self.remaining_time)

    def __len__(self) -> int:
        return self.query.shape[0]


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run and its budget.

    ``tail_fraction`` is the trailing share of inner Langevin iterates averaged
    into the posterior mean (0 keeps only the last iterate).  ``init_at_mean``
    starts every inner chain at the importance-sampling posterior mean instead
    of resampling the weighted pool.
    """

    kind: str = "ula"
    sample_count: int = 10
    inner_steps: int = 200
    inner_step_size: float | None = None
    is_pool: int = 100
    tail_fraction: float = 0.5
    init_at_mean: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if int(self.sample_count) < 1:
            raise DomainError("sample_count must be >= 1")
        if int(self.inner_steps) < 0:
            raise DomainError("inner_steps must be >= 0")
        if self.kind == "is_init_ula" and int(self.is_pool) < 1:
            raise DomainError("is_pool must be >= 1")
        if self.inner_step_size is not None and not float(self.inner_step_size) > 0:
            raise DomainError("inner_step_size must be positive")
        if not 0.0 <= float(self.tail_fraction) <= 1.0:
            raise DomainError("tail_fraction must lie in [0, 1]")

    def step_for(self, ctx: PosteriorContext) -> float:
        if self.inner_step_size is not None:
            return float(self.inner_step_size)
        L = ctx.target.metadata.get("smoothness")
        return ctx.s2 / (10.0 * (1.0 + L)) if L else ctx.s2 / 10.0

    def grad_cost(self, n_queries: int) -> int:
        """Gradient evaluations one call to :func:`estimate_score` will spend."""
        if self.kind == "importance":
            return 0
        return n_queries * int(self.sample_count) * int(self.inner_steps)

    def f_cost(self, n_queries: int) -> int:
        if self.kind == "importance":
            return n_queries * int(self.sample_count)
        if self.kind == "is_init_ula":
            return n_queries * int(self.is_pool)
        return 0


@dataclass
class ScoreEstimate:
    drift: np.ndarray
    f_evals: int = 0
    grad_evals: int = 0
    ess: np.ndarray | None = None
    tau_underflow: bool = False


@dataclass
class ChainResult:
    final: np.ndarray
    tail_mean: np.ndarray
    tail_sq_mean: np.ndarray
    grad_evals: int = 0
    extras: dict = field(default_factory=dict)


def _align(x0, ctx: PosteriorContext):
    x0 = np.asarray(x0, dtype=float)
    x = ctx.query
    if x0.ndim == 1:
        x0 = x0[None, :]
    if x0.ndim == 2 and len(ctx) == 1 and x0.shape[0] != 1:
        x0 = x0[None, :, :]
    if x0.ndim == 3:
        return x0, x[:, None, :]
    return x0, x


def posterior_log_density(x0, ctx: PosteriorContext) -> np.ndarray:
    """Unnormalized ``log q(x0 | x)``; one ``f*`` evaluation per point."""
    x0, x = _align(x0, ctx)
    d = x0.shape[-1]
    f = ctx.target.energy(x0.reshape(-1, d)).reshape(x0.shape[:-1])
    resid = x - ctx.alpha * x0
    return -f - (resid * resid).sum(axis=-1) / (2.0 * ctx.s2)


def posterior_grad(x0, ctx: PosteriorContext) -> np.ndarray:
    """``grad_x0 log q(x0 | x) = -grad f*(x0) - a (a x0 - x) / s^2``."""
    x0, x = _align(x0, ctx)
    d = x0.shape[-1]
    g = ctx.target.grad(x0.reshape(-1, d)).reshape(x0.shape)
    a = ctx.alpha
    return -g - a * (a * x0 - x) / ctx.s2


def _proposal(ctx: PosteriorContext, n: int, rng) -> np.ndarray:
    # Gaussian factor of the posterior: N(x / a, s^2 / a^2 I)
    a = ctx.alpha
    z = rng.standard_normal((len(ctx), n, ctx.target.dim))
    return ctx.query[:, None, :] / a + (math.sqrt(ctx.s2) / a) * z


def _weights(ctx: PosteriorContext, x0: np.ndarray):
    m, n, d = x0.shape
    logw = -ctx.target.energy(x0.reshape(-1, d)).reshape(m, n)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    total = w.sum(axis=1, keepdims=True)
    ess = total[:, 0] ** 2 / (w * w).sum(axis=1)
    return w / total, ess


def _drift_from_mean(ctx: PosteriorContext, mean: np.ndarray) -> np.ndarray:
    return 2.0 * (ctx.alpha * mean - ctx.query) / ctx.s2


def is_score(ctx: PosteriorContext, n: int, rng) -> ScoreEstimate:
    """Self-normalized importance sampling with the posterior's Gaussian factor as proposal."""
    n = int(n)
    if n < 1:
        raise DomainError("importance sample size must be >= 1")
    x0 = _proposal(ctx, n, rng)
    w, ess = _weights(ctx, x0)
    mean = np.einsum("mn,mnd->md", w, x0)
    return ScoreEstimate(_drift_from_mean(ctx, mean), f_evals=len(ctx) * n, ess=ess)


def ula_inner(ctx: PosteriorContext, init, K: int, step: float, rng,
              tail_fraction: float = 0.0) -> ChainResult:
    """Run ``K`` unadjusted Langevin steps on ``q(. | x)`` from each initial particle.

    ``init`` has shape ``(m, n, d)``.  Besides the final particles, returns the
    per-chain average (and average square) over the last
    ``max(1, ceil(tail_fraction * K))`` iterates.
    """
    K = int(K)
    if K < 0:
        raise DomainError("number of inner steps must be >= 0")
    step = float(step)
    if not step >= 0:
        raise DomainError("inner step size must be non-negative")
    x0 = np.array(init, dtype=float)
    if x0.ndim == 2:
        x0 = x0[None]
    if x0.shape[1] < 1:
        raise DomainError("no initial particles")
    if K == 0:
        return ChainResult(x0, x0.copy(), x0 * x0, 0)
    tail = max(1, math.ceil(tail_fraction * K))
    acc = np.zeros_like(x0)
    acc_sq = np.zeros_like(x0)
    noise_sd = math.sqrt(2.0 * step)
    for k, z in enumerate(normal_steps(rng, K, x0.shape), start=1):
        x0 = x0 + step * posterior_grad(x0, ctx) + noise_sd * z
        if k > K - tail:
            acc += x0
            acc_sq += x0 * x0
    grad_evals = K * x0.shape[0] * x0.shape[1]
    return ChainResult(x0, acc / tail, acc_sq / tail, grad_evals)


def score_from_samples(ctx: PosteriorContext, samples) -> ScoreEstimate:
    """Average ``2 (a x0 - x) / s^2`` over posterior samples of shape ``(m, n, d)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.shape[1] < 1:
        raise DomainError("no posterior samples")
    return ScoreEstimate(_drift_from_mean(ctx, samples.mean(axis=1)))


def systematic_resample(weights: np.ndarray, count: int, u: np.ndarray) -> np.ndarray:
    """Indices drawn by systematic resampling, one offset ``u`` in [0, 1) per row."""
    cdf = np.cumsum(weights, axis=1)
    cdf[:, -1] = 1.0
    grid = (np.arange(count)[None, :] + u.reshape(-1, 1)) / count
    return np.stack([np.searchsorted(c, g, side="right") for c, g in zip(cdf, grid)])


def estimate_score(ctx: PosteriorContext, cfg: EstimatorConfig, rng) -> ScoreEstimate:
    m, d = ctx.query.shape
    if ctx.s2 < VARIANCE_FLOOR:
        return ScoreEstimate(np.zeros((m, d)), tau_underflow=True)
    if cfg.kind == "importance":
        return is_score(ctx, cfg.sample_count, rng)

    n = int(cfg.sample_count)
    f_evals = 0
    ess = None
    if cfg.kind == "ula":
        init = _proposal(ctx, n, rng)
    else:
        pool = _proposal(ctx, int(cfg.is_pool), rng)
        w, ess = _weights(ctx, pool)
        f_evals = m * int(cfg.is_pool)
        if cfg.init_at_mean:
            mean = np.einsum("mn,mnd->md", w, pool)
            init = np.repeat(mean[:, None, :], n, axis=1)
        else:
            u = rng.random((m, 1))
            idx = systematic_resample(w, n, u)
            init = np.take_along_axis(pool, idx[:, :, None], axis=1)
    chain = ula_inner(ctx, init, cfg.inner_steps, cfg.step_for(ctx), rng, cfg.tail_fraction)
    est = score_from_samples(ctx, chain.tail_mean)
    est.f_evals = f_evals
    est.grad_evals = chain.grad_evals
    est.ess = ess
    return est


def theoretical_budget(T: float, d: int, lsi: float, eta: float, eps: float, delta: float) -> dict:
    """Inner sample count ``n_k`` and inner KL tolerance ``E_k`` from the convergence theorem.

    ``n_k = ceil(64 T d / (mu eta^3 eps^2 delta))`` and
    ``E_k = 2^-13 T^-4 d^-2 mu^2 eta^8 eps^4 delta^4``.
    """
    args = dict(T=T, d=d, lsi=lsi, eta=eta, eps=eps, delta=delta)
    for name, value in args.items():
        if not (math.isfinite(float(value)) and float(value) > 0):
            raise DomainError(f"{name} must be positive, got {value!r}")
    # exact rational arithmetic so the ceiling never picks up rounding error
    T_, d_, mu, h, e, dl = (Fraction(float(v)) for v in (T, d, lsi, eta, eps, delta))
    n_k = math.ceil(64 * T_ * d_ / (mu * h ** 3 * e ** 2 * dl))
    kl_tol = float(Fraction(1, 2 ** 13) * mu ** 2 * h ** 8 * e ** 4 * dl ** 4 / (T_ ** 4 * d_ ** 2))
    return {"n_k": int(n_k), "kl_tol": kl_tol}


def lsi_constant_estimate(t: float, regime: str = "smooth", L: float = 1.0, R=0.0) -> float:
    """Closed-form log-Sobolev constant estimates for the posterior at time ``t``.

    ``smooth``: ``e^{-2t} / (2 (1 - e^{-2t}))``, valid for ``t <= ln(1 + 1/(2L)) / 2``.
    ``tail``: ``c e^{-48 L R(c)^2}`` with ``c = e^{-2t} / (6 (1 - e^{-2t}))``; ``R`` may be a
    number or a callable evaluated at ``c``.
    """
    t = float(t)
    if not (math.isfinite(t) and t >= 0):
        raise DomainError("t must be finite and non-negative")
    if regime not in ("smooth", "tail"):
        raise DomainError(f"unknown regime {regime!r}")
    if regime == "smooth":
        limit = 0.5 * math.log1p(1.0 / (2.0 * L))
        if t > limit:
            raise DomainError(f"smooth-regime estimate only holds for t <= {limit:.6g}")
    if t < 1e-12:
        return math.inf
    ratio = math.exp(-2.0 * t) / -math.expm1(-2.0 * t)
    if regime == "smooth":
        return ratio / 2.0
    base = ratio / 6.0
    r = float(R(base)) if callable(R) else float(R)
    return base * math.exp(-16.0 * 3.0 * L * r * r)
