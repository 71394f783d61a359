"""Shared finite-difference helpers for the test suite.

Kept independent of fastblocks.gradcheck on purpose: these re-derive
numeric gradients from scratch so the library's own checker is never
validating itself.
"""

import numpy as np


def fd_grad(loss, tensor, step=1e-6):
    """Central-difference gradient of a scalar loss w.r.t. one array, in place."""
    grad = np.zeros_like(tensor, dtype=np.float64)
    flat = tensor.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        lp = loss()
        flat[i] = orig - step
        lm = loss()
        flat[i] = orig
        gflat[i] = (lp - lm) / (2.0 * step)
    return grad


def max_rel_err(a, b):
    """Relative error, falling back to absolute when both values are ~0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.abs(a - b)
    denom = np.maximum(np.abs(a), np.abs(b))
    err = np.where(denom < 1e-8, diff, diff / np.maximum(denom, 1e-300))
    return float(np.max(err))
