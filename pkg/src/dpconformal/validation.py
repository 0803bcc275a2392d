"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


def require_positive(value: float, name: str) -> float:
    """Return ``value`` as a float, raising ValueError unless it is finite and > 0."""
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def require_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be a nonnegative finite number, got {value}")
    return value


def require_unit_open(value: float, name: str) -> float:
    """Validate that ``value`` lies in the open interval (0, 1)."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value


def require_count(value: int, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def as_generator(random_state) -> np.random.Generator:
    """Coerce ``None``, an int seed, or a Generator into a numpy Generator.

    Every stochastic operation in this package threads an explicit generator;
    there is no module-level RNG state.
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def as_float_array(values, name: str, ndim: int = 1) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr
