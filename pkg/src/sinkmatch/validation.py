"""Input validation helpers used across the solvers and estimators."""

import numpy as np

from .exceptions import DimensionMismatch, InvalidInput

WEIGHT_SUM_TOL = 1e-9


def check_matrix(values, name="matrix"):
    """Return ``values`` as a finite 2-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def check_cost(cost):
    return check_matrix(cost, name="cost matrix")


def check_weights(weights, size=None, name="weights"):
    """Validate a discrete probability vector (a set of marginal weights).

    Entries must be strictly positive and sum to one within ``1e-9``.
    Zero weights are rejected rather than silently dropped.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInput(f"{name} must be a non-empty vector")
    if size is not None and w.size != size:
        raise DimensionMismatch(f"{name} has length {w.size}, expected {size}")
    if not np.all(np.isfinite(w)):
        raise InvalidInput(f"{name} contains non-finite entries")
    if np.any(w <= 0):
        raise InvalidInput(f"{name} must be strictly positive")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidInput(f"{name} sums to {w.sum()!r}, expected 1")
    return w


def uniform_weights(n):
    return np.full(n, 1.0 / n)


def check_positive(value, name):
    if not value > 0:
        raise InvalidInput(f"{name} must be positive, got {value!r}")
    return value
