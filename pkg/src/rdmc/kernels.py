"""Hot kernels, backed by the compiled extension when it is importable.

Set ``RDMC_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("RDMC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def gmm_energy(X, means, log_w):
    """Negative log of ``sum_j exp(log_w[j] - |x - means[j]|^2 / 2)`` for each row of ``X``."""
    return _impl.gmm_energy(_c(X), _c(means), _c(log_w))


def gmm_energy_grad(X, means, log_w):
    """Energy and its gradient ``x - sum_j r_j(x) means[j]`` (``r`` = responsibilities)."""
    return _impl.gmm_energy_grad(_c(X), _c(means), _c(log_w))


def rbf_kernel_sum(X, Y, gamma: float) -> float:
    """``sum_{i,j} exp(-gamma * |X_i - Y_j|^2)``."""
    return float(_impl.rbf_kernel_sum(_c(X), _c(Y), float(gamma)))
