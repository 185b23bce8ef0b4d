"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import EmptySample, NonPositiveBandwidth


def check_sample(X, name="X"):
    """Return a sample as a finite 1-D float array.

    Accepts a flat sequence or a single-column 2-D array, the latter being
    the shape scikit-learn estimators receive.
    """
    arr = np.asarray(X, dtype=float)
    if arr.size == 0:
        raise EmptySample(f"{name} is empty")
    if arr.ndim == 2 and arr.shape[1] != 1:
        raise ValueError(f"{name} must be univariate; got shape {arr.shape}")
    if arr.ndim > 2:
        raise ValueError(f"{name} must be 1-D or a single column; got shape {arr.shape}")
    arr = check_array(arr.reshape(-1, 1), dtype=np.float64, ensure_all_finite=True,
                      input_name=name)
    return arr.ravel()


def check_grid(x, name="grid"):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    if x.size > 1 and not np.all(np.diff(x) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return x


def check_bandwidth(h):
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise NonPositiveBandwidth(f"bandwidth must be positive and finite; got {h!r}")
    return h


def sample_range(X):
    return float(np.max(X) - np.min(X))
