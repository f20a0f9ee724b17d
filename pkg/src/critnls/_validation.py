"""Small input checks shared by the public functions."""
from __future__ import annotations

import numbers

import numpy as np


def check_dimension(d) -> int:
    if d not in (1, 2) or isinstance(d, bool):
        raise ValueError(f"dimension must be 1 or 2, got {d!r}")
    return int(d)


def check_power_of_two(n, name: str, minimum: int = 2) -> int:
    if not isinstance(n, numbers.Integral) or n < minimum or n & (n - 1):
        raise ValueError(f"{name} must be a power of two >= {minimum}, got {n!r}")
    return int(n)


def check_positive(x, name: str, strict: bool = True) -> float:
    if not isinstance(x, numbers.Real) or not np.isfinite(x):
        raise ValueError(f"{name} must be a finite real number, got {x!r}")
    if x < 0 or (strict and x == 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'nonnegative'}, got {x!r}")
    return float(x)


def check_finite(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_increasing(times, name: str = "times") -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return t
