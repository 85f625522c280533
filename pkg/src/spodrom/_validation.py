"""Input checks shared by the estimator wrappers.

Estimators follow the scikit-learn orientation, ``X.shape == (n_snapshots,
n_points)``; the core modules use the transpose.
"""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, ShapeMismatchError


def check_snapshots(X, *, min_samples: int = 2, n_features=None, name: str = "X") -> np.ndarray:
    """2-D finite float64 array with at least ``min_samples`` rows."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples, input_name=name)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeMismatchError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_latent(A, *, min_samples: int = 1, n_features=None, name: str = "A") -> np.ndarray:
    """2-D finite latent series; complex input is kept complex."""
    A = np.asarray(A)
    if np.iscomplexobj(A):
        if A.ndim != 2:
            raise ShapeMismatchError(f"{name} must be 2-D, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError(f"{name} contains non-finite entries")
        A = A.astype(np.complex128)
    else:
        A = check_array(A, dtype=np.float64, input_name=name)
    if A.shape[0] < min_samples:
        raise ShapeMismatchError(f"{name} needs at least {min_samples} rows, got {A.shape[0]}")
    if n_features is not None and A.shape[1] != n_features:
        raise ShapeMismatchError(f"{name} has {A.shape[1]} columns, expected {n_features}")
    return A


def check_weights(weights, n_features: int) -> np.ndarray:
    if weights is None:
        return np.ones(n_features)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != (n_features,):
        raise ShapeMismatchError(f"weights have length {w.size}, expected {n_features}")
    if np.any(w < 0) or not np.any(w > 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, nonnegative and not all zero")
    return w


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
