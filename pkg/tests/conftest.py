"""Shared test helpers: finite-difference oracles and gradient comparison."""

import numpy as np


def numeric_grad(loss_fn, arr: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function wrt an array, in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        up = loss_fn()
        flat[i] = saved - step
        down = loss_fn()
        flat[i] = saved
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Worst-case relative difference with a floor against fd noise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-6)))
