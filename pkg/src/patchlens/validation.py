"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError, DataError, DimensionError
from .layout import parse_grid


def check_stack(X, name="X", allow_channels=True):
    """Finite float64 stack ``(n, rows, cols)`` or ``(n, channels, rows, cols)``.

    A list of equally shaped arrays is accepted; a single 2D image is not
    (wrap it in a list).
    """
    try:
        arr = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"{name}: cannot form a numeric stack ({exc})") from None
    if arr.ndim not in ((3, 4) if allow_channels else (3,)):
        raise DimensionError(f"{name}: expected a stack of images, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError(f"{name}: empty stack")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: contains NaN or inf")
    return arr


def check_pairs(X, y):
    X = check_stack(X, "X")
    y = check_stack(y, "y")
    if len(X) != len(y):
        raise DimensionError(f"{len(X)} measurements vs {len(y)} scenes")
    if X.ndim != y.ndim:
        raise DimensionError(f"channel layout differs: X {X.shape}, y {y.shape}")
    return X, y


def check_grid(grid):
    """``(by, bx)`` from ``"5x6"`` or a pair of positive ints."""
    if isinstance(grid, str):
        return parse_grid(grid)
    try:
        by, bx = (int(v) for v in grid)
    except (TypeError, ValueError):
        raise ConfigError(f"grid must be 'RxC' or a pair of ints, got {grid!r}") from None
    if by < 1 or bx < 1:
        raise ConfigError(f"grid counts must be >= 1, got {grid!r}")
    return by, bx


def check_scalar(value, name, kind=numbers.Real, low=None, high=None, low_open=False):
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{name} must be {kind.__name__}, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    if low is not None and (value <= low if low_open else value < low):
        raise ConfigError(f"{name} must be {'>' if low_open else '>='} {low}, got {value!r}")
    if high is not None and value > high:
        raise ConfigError(f"{name} must be <= {high}, got {value!r}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value
