"""Argument checking helpers used across the package."""

import numbers

import numpy as np

from .errors import ParameterError, ShapeError


def check_t(t, T):
    """Validate a timestep index and return it as a plain int."""
    if not isinstance(t, numbers.Integral):
        raise ParameterError(f"t must be an integer, got {t!r}")
    t = int(t)
    if not 1 <= t <= T:
        raise ParameterError(f"t must be in [1, {T}], got {t}")
    return t


def as_float_array(x, name="array"):
    """Coerce to a float64 ndarray (no copy when already one)."""
    try:
        return np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{name} is not numeric: {exc}") from exc


def check_same_shape(a, b, a_name, b_name):
    if np.shape(a) != np.shape(b):
        raise ShapeError(
            f"{a_name} has shape {np.shape(a)} but {b_name} has shape {np.shape(b)}"
        )


def check_shape(arr, expected, name):
    if np.shape(arr) != tuple(expected):
        raise ShapeError(f"{name} has shape {np.shape(arr)}, expected {tuple(expected)}")


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ParameterError(f"{name} must be a finite real, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ParameterError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite values")
    return arr
