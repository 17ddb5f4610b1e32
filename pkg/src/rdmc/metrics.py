"""Sample-quality metrics: RBF-kernel MMD, summed raw moments, Gaussian diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import kernels
from .ou import DomainError

MEDIAN_SUBSAMPLE = 2000


@dataclass(frozen=True)
class MmdConfig:
    """``bandwidth`` is a positive number or ``"median-heuristic"``."""

    bandwidth: float | str = "median-heuristic"
    estimator: str = "biased_v_statistic"
    seed: int = 0

    def __post_init__(self):
        if self.estimator != "biased_v_statistic":
            raise DomainError(f"unsupported MMD estimator {self.estimator!r}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median-heuristic":
                raise DomainError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not float(self.bandwidth) > 0:
            raise DomainError("bandwidth must be positive")


def _points(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise DomainError(f"{name} is empty")
    return X


def median_bandwidth(X, Y, seed: int = 0) -> float:
    """Lower median of pairwise distances over ``X`` and ``Y`` pooled (at most 2000 points)."""
    Z = np.concatenate([_points(X, "X"), _points(Y, "Y")])
    if Z.shape[0] > MEDIAN_SUBSAMPLE:
        idx = np.random.default_rng(seed).choice(Z.shape[0], MEDIAN_SUBSAMPLE, replace=False)
        Z = Z[np.sort(idx)]
    dists = pdist(Z)
    if dists.size == 0:
        return 1.0
    h = float(np.partition(dists, (dists.size - 1) // 2)[(dists.size - 1) // 2])
    return h if h > 0 else 1.0


def resolve_bandwidth(X, Y, cfg: MmdConfig) -> float:
    if isinstance(cfg.bandwidth, str):
        return median_bandwidth(X, Y, cfg.seed)
    return float(cfg.bandwidth)


def mmd_squared(X, Y, cfg: MmdConfig | None = None) -> float:
    """Biased V-statistic estimate of squared MMD with ``k(a, b) = exp(-|a - b|^2 / (2 h^2))``."""
    cfg = cfg or MmdConfig()
    X, Y = _points(X, "X"), _points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DomainError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    h = resolve_bandwidth(X, Y, cfg)
    gamma = 1.0 / (2.0 * h * h)
    m, n = X.shape[0], Y.shape[0]
    kxx = kernels.rbf_kernel_sum(X, X, gamma) / (m * m)
    kyy = kernels.rbf_kernel_sum(Y, Y, gamma) / (n * n)
    kxy = kernels.rbf_kernel_sum(X, Y, gamma) / (m * n)
    return max(kxx + kyy - 2.0 * kxy, 0.0)


class ReferenceMmd:
    """Squared MMD against a fixed reference sample at a fixed bandwidth.

    The reference self-similarity term is computed once, so scoring many
    snapshots against a large reference costs ``O(m n)`` each.
    """

    def __init__(self, Y, bandwidth: float):
        self.Y = _points(Y, "Y")
        self.bandwidth = float(bandwidth)
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        self.gamma = 1.0 / (2.0 * self.bandwidth ** 2)
        n = self.Y.shape[0]
        self.kyy = kernels.rbf_kernel_sum(self.Y, self.Y, self.gamma) / (n * n)

    def __call__(self, X) -> float:
        X = _points(X, "X")
        if X.shape[1] != self.Y.shape[1]:
            raise DomainError(f"dimension mismatch: {X.shape[1]} vs {self.Y.shape[1]}")
        m, n = X.shape[0], self.Y.shape[0]
        kxx = kernels.rbf_kernel_sum(X, X, self.gamma) / (m * m)
        kxy = kernels.rbf_kernel_sum(X, self.Y, self.gamma) / (m * n)
        return max(kxx + self.kyy - 2.0 * kxy, 0.0)


def moment_sum(X, order: int) -> float:
    """Per-coordinate raw moment of the given order, summed over coordinates."""
    if order not in (1, 2, 3):
        raise DomainError(f"unsupported moment order {order!r}")
    X = _points(X, "X")
    return float((X ** order).mean(axis=0).sum())


def gaussian_diagnostics(X) -> dict:
    X = _points(X, "X")
    if X.shape[0] < 2:
        raise DomainError("need at least two points")
    return {"mean": X.mean(axis=0), "cov_diag": X.var(axis=0, ddof=1)}


def mmd_permutation_threshold(X, Y, cfg: MmdConfig | None = None, permutations: int = 200,
                              level: float = 0.95, seed: int = 0) -> float:
    """``level`` quantile of squared MMD under random relabelings of the pooled sample."""
    X, Y = _points(X, "X"), _points(Y, "Y")
    cfg = cfg or MmdConfig()
    h = resolve_bandwidth(X, Y, cfg)
    fixed = MmdConfig(bandwidth=h)
    Z = np.concatenate([X, Y])
    rng = np.random.default_rng(seed)
    stats = []
    for _ in range(permutations):
        perm = rng.permutation(Z.shape[0])
        stats.append(mmd_squared(Z[perm[:len(X)]], Z[perm[len(X):]], fixed))
    return float(np.quantile(stats, level))
