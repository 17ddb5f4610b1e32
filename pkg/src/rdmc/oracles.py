"""Ground truth for checking the estimators: Gaussian posteriors and 1-d quadrature scores."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .ou import DomainError
from .targets import TargetDensity

ENDPOINT_MASS = 1e-8


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError("posterior variance must be positive")


def gaussian_posterior(x, tau: float, prior_mean=0.0, prior_var: float = 1.0) -> GaussianPosterior:
    """Posterior of the starting point given its OU value ``x`` after time ``tau``,
    for an isotropic Gaussian prior ``N(prior_mean, prior_var I)``."""
    tau, prior_var = float(tau), float(prior_var)
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError("tau must be positive")
    if not prior_var > 0:
        raise DomainError("prior variance must be positive")
    x = np.asarray(x, dtype=float)
    a = math.exp(-tau)
    s2 = -math.expm1(-2.0 * tau)
    precision = 1.0 / prior_var + a * a / s2
    mean = (np.asarray(prior_mean, dtype=float) / prior_var + a * x / s2) / precision
    return GaussianPosterior(np.broadcast_to(mean, x.shape).copy(), 1.0 / precision)


def gaussian_score(x, t: float, mean, var) -> np.ndarray:
    """Closed-form ``grad log p_t`` for a diagonal Gaussian target pushed through the OU flow."""
    a = math.exp(-t)
    s2 = -math.expm1(-2.0 * t)
    x = np.asarray(x, dtype=float)
    return -(x - a * np.asarray(mean, float)) / (a * a * np.asarray(var, float) + s2)


def quadrature_score(target: TargetDensity, x: float, tau: float,
                     lo: float = -12.0, hi: float = 12.0, n_nodes: int = 4001) -> float:
    """``grad log p_tau(x)`` for a 1-d target as a ratio of trapezoid-rule integrals
    of the unnormalized posterior."""
    if target.dim != 1:
        raise DomainError("quadrature oracle only supports 1-d targets")
    tau = float(tau)
    if not tau > 0:
        raise DomainError("tau must be positive")
    if not (hi > lo and n_nodes >= 3):
        raise DomainError("invalid quadrature grid")
    a = math.exp(-tau)
    s2 = -math.expm1(-2.0 * tau)
    nodes = np.linspace(lo, hi, int(n_nodes))
    log_q = -target.energy(nodes[:, None]) - (x - a * nodes) ** 2 / (2.0 * s2)
    log_q -= log_q.max()
    q = np.exp(log_q)
    if q[0] >= ENDPOINT_MASS or q[-1] >= ENDPOINT_MASS:
        raise DomainError("grid too small")
    num = trapezoid((a * nodes - x) / s2 * q, nodes)
    den = trapezoid(q, nodes)
    return float(num / den)
