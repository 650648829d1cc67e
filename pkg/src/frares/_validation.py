"""Input validation helpers."""

import numpy as np

from .exceptions import ConfigurationError


def as_float_matrix(value, name, shape=None):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name}: not a numeric matrix ({exc})") from None
    if arr.ndim != 2:
        raise ConfigurationError(f"{name}: expected a 2-d matrix, got {arr.ndim}-d")
    if shape is not None:
        for axis, (got, want) in enumerate(zip(arr.shape, shape)):
            if want is not None and got != want:
                raise ConfigurationError(
                    f"{name}: expected shape {shape}, got {arr.shape} (axis {axis})"
                )
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: contains non-finite entries")
    return arr


def as_float_vector(value, name, size=None):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name}: not a numeric vector ({exc})") from None
    if arr.ndim != 1:
        raise ConfigurationError(f"{name}: expected a 1-d vector, got {arr.ndim}-d")
    if size is not None and arr.shape[0] != size:
        raise ConfigurationError(f"{name}: expected length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: contains non-finite entries")
    return arr


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_tolerance(value, name):
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
    return value


def frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr
