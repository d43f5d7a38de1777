"""Input validation helpers shared by the public API surface."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError


def as_complex_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite, non-empty 2-D complex128 array."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return arr


def as_real_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return arr


def as_complex_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce ``x`` to a finite, non-empty 1-D complex128 array."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return arr


def check_positive_int(value, name: str) -> int:
    if int(value) != value or value < 1:
        raise DimensionError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
