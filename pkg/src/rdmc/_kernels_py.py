"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.spatial.distance import cdist

_ROW_BLOCK = 2048


def _mixture_logits(X, means, log_w):
    sq = cdist(X, means, "sqeuclidean")
    return log_w[None, :] - 0.5 * sq


def gmm_energy(X, means, log_w):
    logits = _mixture_logits(X, means, log_w)
    top = logits.max(axis=1)
    return -(top + np.log(np.exp(logits - top[:, None]).sum(axis=1)))


def gmm_energy_grad(X, means, log_w):
    logits = _mixture_logits(X, means, log_w)
    top = logits.max(axis=1)
    w = np.exp(logits - top[:, None])
    total = w.sum(axis=1)
    energy = -(top + np.log(total))
    resp = w / total[:, None]
    grad = X - resp @ means
    return energy, grad


def rbf_kernel_sum(X, Y, gamma):
    total = 0.0
    for start in range(0, X.shape[0], _ROW_BLOCK):
        block = X[start:start + _ROW_BLOCK]
        total += float(np.exp(-gamma * cdist(block, Y, "sqeuclidean")).sum())
    return total
