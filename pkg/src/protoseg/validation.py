"""Input validation helpers.

Feature maps are ``(C, H, W)`` float64 arrays, scalar maps ``(H, W)`` float64
arrays and binary masks ``(H, W)`` boolean arrays.  Every public function in
the package funnels its array arguments through one of the checks below.
"""

import numpy as np


def _as_float(x, ndim, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_feature_map(x, name="features"):
    """Return ``x`` as a finite ``(C, H, W)`` float64 array."""
    return _as_float(x, 3, name)


def check_scalar_map(x, name="map"):
    """Return ``x`` as a finite ``(H, W)`` float64 array."""
    return _as_float(x, 2, name)


def check_map(x, name="map"):
    """Accept either a scalar map or a per-channel feature map."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return check_scalar_map(arr, name)
    if arr.ndim == 3:
        return check_feature_map(arr, name)
    raise ValueError(f"{name} must be 2-D or 3-D, got shape {arr.shape}")


def check_mask(m, shape=None, name="mask"):
    """Return ``m`` as a boolean ``(H, W)`` array.

    Only the values 0 and 1 (or booleans) are admitted.  When ``shape`` is
    given the mask must match it exactly.
    """
    arr = np.asarray(m)
    if arr.ndim != 2 or any(d < 1 for d in arr.shape):
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError(f"{name} values must be exactly 0 or 1")
        arr = arr.astype(bool)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    return arr


def check_vector(v, size=None, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if size is not None and arr.size != size:
        raise ValueError(f"{name} has length {arr.size}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_size(h, w):
    h, w = int(h), int(w)
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got ({h}, {w})")
    return h, w
