"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np

from .tsdf import DEFAULT_TRUNCATION_FACTOR, GridSpec, VoxelGrid


def check_grid(X, truncation_factor: float = DEFAULT_TRUNCATION_FACTOR) -> VoxelGrid:
    """Return ``X`` as a VoxelGrid.

    A bare cubic 3-D array is read as a TSDF over [-1, 1]^3 (x fastest along
    the first axis).
    """
    if isinstance(X, VoxelGrid):
        grid = X
    else:
        arr = np.asarray(X, dtype=float)
        if arr.ndim != 3 or len(set(arr.shape)) != 1:
            raise ValueError(f"expected a VoxelGrid or a cubic 3-D array, got shape {arr.shape}")
        grid = VoxelGrid.from_spec(GridSpec.cube(arr.shape[0], truncation_factor=truncation_factor), arr)
    if not np.all(np.isfinite(grid.values)):
        raise ValueError("grid values must be finite")
    return grid


def check_points(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite ``(n, 3)`` float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name: str, integer: bool = False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        raise ValueError(f"{name} must be a positive {'integer' if integer else 'number'}, got {value!r}")
    return value


def check_fraction(value, name: str, open_low: bool = True, open_high: bool = True):
    ok_low = value > 0 if open_low else value >= 0
    ok_high = value < 1 if open_high else value <= 1
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not (ok_low and ok_high):
        raise ValueError(f"{name} must lie in the unit interval, got {value!r}")
    return value
