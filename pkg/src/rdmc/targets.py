"""Unnormalized targets ``p* ~ exp(-f*)`` with gradients and exact reference samplers.

All energies and gradients are vectorized over the rows of an ``(n, d)`` array.
Energies are defined only up to an additive constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .ou import DomainError


@dataclass(frozen=True)
class ReferenceSampler:
    draw: Callable[[int, np.random.Generator], np.ndarray]
    exact: bool = True


@dataclass
class TargetDensity:
    """Energy ``f*``, its gradient, and optional metadata (``smoothness``, ``second_moment``)."""

    dim: int
    energy_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "target"
    metadata: dict = field(default_factory=dict)
    reference: ReferenceSampler | None = None
    modes: np.ndarray | None = None
    energy_grad_fn: Callable | None = None

    def _rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected points of dimension {self.dim}, got {x.shape[-1]}")
        return x

    def energy(self, x) -> np.ndarray:
        """``f*`` at each row of ``x``; a single point gives a length-1 array."""
        return self.energy_fn(self._rows(x))

    def grad(self, x) -> np.ndarray:
        return self.grad_fn(self._rows(x))

    def energy_and_grad(self, x):
        x = self._rows(x)
        if self.energy_grad_fn is not None:
            return self.energy_grad_fn(x)
        return self.energy_fn(x), self.grad_fn(x)

    @property
    def has_exact_sampler(self) -> bool:
        return self.reference is not None and self.reference.exact

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.reference is None:
            raise DomainError(f"{self.name} has no reference sampler")
        return self.reference.draw(int(count), rng)

    def shifted(self, constant: float) -> "TargetDensity":
        """The same density with ``f*`` raised by ``constant`` (gradient unchanged)."""
        c = float(constant)
        base_energy, base_grad = self.energy_fn, self.grad_fn
        pair = None
        if self.energy_grad_fn is not None:
            base_pair = self.energy_grad_fn

            def shifted_pair(x):
                e, g = base_pair(x)
                return e + c, g

            pair = shifted_pair

        return TargetDensity(
            self.dim, lambda x: base_energy(x) + c, base_grad, f"{self.name}+{c:g}",
            dict(self.metadata), self.reference, self.modes, pair,
        )


class CountingTarget(TargetDensity):
    """Wraps a target and counts every point at which ``f*`` or its gradient is evaluated."""

    def __init__(self, base: TargetDensity):
        super().__init__(base.dim, base.energy_fn, base.grad_fn, base.name, base.metadata,
                         base.reference, base.modes, base.energy_grad_fn)
        self.f_calls = 0
        self.grad_calls = 0

    def energy(self, x):
        x = self._rows(x)
        self.f_calls += x.shape[0]
        return self.energy_fn(x)

    def grad(self, x):
        x = self._rows(x)
        self.grad_calls += x.shape[0]
        return self.grad_fn(x)

    def energy_and_grad(self, x):
        x = self._rows(x)
        self.f_calls += x.shape[0]
        self.grad_calls += x.shape[0]
        return super().energy_and_grad(x)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Equal-covariance (identity) mixture: component means and log weights."""

    means: np.ndarray
    log_weights: np.ndarray | None = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.size == 0:
            raise DomainError("mixture needs at least one component")
        lw = (np.zeros(len(means)) if self.log_weights is None
              else np.asarray(self.log_weights, dtype=float).reshape(-1))
        if lw.shape[0] != means.shape[0]:
            raise DomainError("one log weight per component required")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(lw)):
            raise DomainError("non-finite mixture parameters")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "log_weights", lw)

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def make_gmm(spec: GaussianMixtureSpec, name: str = "gmm") -> TargetDensity:
    means = spec.means
    log_w = spec.log_weights
    weights = spec.weights
    dim = means.shape[1]

    def draw(count, rng):
        comp = rng.choice(len(means), size=count, p=weights)
        return means[comp] + rng.standard_normal((count, dim))

    return TargetDensity(
        dim,
        lambda x: kernels.gmm_energy(x, means, log_w),
        lambda x: kernels.gmm_energy_grad(x, means, log_w)[1],
        name,
        {"smoothness": None, "num_modes": len(means), "weights": weights.tolist()},
        ReferenceSampler(draw),
        means.copy(),
        lambda x: kernels.gmm_energy_grad(x, means, log_w),
    )


def circle_radius(radius_scale: float) -> float:
    """Circle radius used by :func:`make_circle_gmm` for separation parameter ``r``."""
    return 2.0 * radius_scale


def make_circle_gmm(num_modes: int, radius_scale: float, dim: int = 2) -> TargetDensity:
    """Equal-weight unit-covariance modes at angles ``2 pi j / K`` on a circle of radius ``2 r``.

    For ``dim > 2`` the circle lives in the first two coordinates.
    """
    if num_modes < 2:
        raise DomainError("circle mixture needs at least two modes")
    if not radius_scale > 0:
        raise DomainError("separation parameter must be positive")
    if dim < 2:
        raise DomainError("circle mixture needs dim >= 2")
    angles = 2.0 * np.pi * np.arange(num_modes) / num_modes
    means = np.zeros((num_modes, dim))
    R = circle_radius(radius_scale)
    means[:, 0] = R * np.cos(angles)
    means[:, 1] = R * np.sin(angles)
    target = make_gmm(GaussianMixtureSpec(means), name=f"circle_gmm(K={num_modes},r={radius_scale:g})")
    target.metadata.update(layout="circle", circle_radius=R)
    return target


def make_ill_conditioned_gaussian(mean, diag_cov) -> TargetDensity:
    mu = np.asarray(mean, dtype=float).reshape(-1)
    var = np.asarray(diag_cov, dtype=float).reshape(-1)
    if mu.shape != var.shape:
        raise DomainError("mean and diagonal covariance differ in length")
    if np.any(~(var > 0)):
        raise DomainError("variances must be positive")
    prec = 1.0 / var
    sd = np.sqrt(var)

    def energy(x):
        return 0.5 * ((x - mu) ** 2 * prec).sum(axis=1)

    def grad(x):
        return (x - mu) * prec

    return TargetDensity(
        len(mu), energy, grad, "gaussian",
        {"smoothness": float(prec.max()), "second_moment": float((mu ** 2 + var).sum()),
         "weights": [1.0]},
        ReferenceSampler(lambda n, rng: mu + sd * rng.standard_normal((n, len(mu)))),
        mu[None, :].copy(),
    )


def make_sublinear_tail(a: float, dim: int) -> TargetDensity:
    """``f*(x) = (|x|^2 + 1)^a``, a heavy-tailed potential without an exact sampler."""
    a = float(a)
    if not 0 < a < 0.5:
        raise DomainError("exponent must lie in (0, 0.5)")

    def energy(x):
        return ((x * x).sum(axis=1) + 1.0) ** a

    def grad(x):
        base = (x * x).sum(axis=1) + 1.0
        return (2.0 * a * base ** (a - 1.0))[:, None] * x

    return TargetDensity(dim, energy, grad, f"sublinear(a={a:g})", {"smoothness": 2.0 * a})


def make_cauchy(dim: int) -> TargetDensity:
    """Product of independent standard Cauchy coordinates."""
    if dim < 1:
        raise DomainError("dim must be at least 1")

    def draw(n, rng):
        return np.tan(np.pi * (rng.random((n, dim)) - 0.5))

    return TargetDensity(
        dim,
        lambda x: np.log1p(x * x).sum(axis=1),
        lambda x: 2.0 * x / (1.0 + x * x),
        "cauchy",
        {"smoothness": 2.0},
        ReferenceSampler(draw),
    )


FUNNEL_SCALE = 3.0


def make_neals_funnel(dim: int) -> TargetDensity:
    """``x1 ~ N(0, 9)`` and ``x_i | x1 ~ N(0, e^{x1})`` for the remaining coordinates."""
    if dim < 2:
        raise DomainError("funnel needs dim >= 2")
    inv_var1 = 1.0 / FUNNEL_SCALE ** 2
    rest = dim - 1

    def energy(x):
        x1 = x[:, 0]
        tail = (x[:, 1:] ** 2).sum(axis=1)
        return 0.5 * inv_var1 * x1 * x1 + 0.5 * tail * np.exp(-x1) + 0.5 * rest * x1

    def grad(x):
        x1 = x[:, 0]
        scale = np.exp(-x1)
        g = np.empty_like(x)
        g[:, 0] = inv_var1 * x1 - 0.5 * (x[:, 1:] ** 2).sum(axis=1) * scale + 0.5 * rest
        g[:, 1:] = x[:, 1:] * scale[:, None]
        return g

    def draw(n, rng):
        x1 = FUNNEL_SCALE * rng.standard_normal(n)
        others = rng.standard_normal((n, rest)) * np.exp(0.5 * x1)[:, None]
        return np.column_stack([x1, others])

    return TargetDensity(dim, energy, grad, "funnel", {"funnel_scale": FUNNEL_SCALE},
                         ReferenceSampler(draw))


def standard_normal(dim: int) -> TargetDensity:
    return make_ill_conditioned_gaussian(np.zeros(dim), np.ones(dim))
