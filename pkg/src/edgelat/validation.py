"""Input validation helpers shared by the estimators."""

import numpy as np


def check_feature_matrix(X, expected_dim=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-dimensional, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError("feature matrix must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if expected_dim is not None and X.shape[1] != expected_dim:
        raise ValueError(
            f"feature-length mismatch: expected {expected_dim} features, got {X.shape[1]}"
        )
    return X


def check_positive_targets(y, n_rows) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (n_rows,):
        raise ValueError(f"targets must be a vector of length {n_rows}, got shape {y.shape}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("targets must be finite and > 0 (latencies in seconds)")
    return y


def check_sample_weight(sample_weight, n_rows) -> np.ndarray:
    if sample_weight is None:
        return np.ones(n_rows)
    w = np.asarray(sample_weight, dtype=float)
    if w.shape != (n_rows,):
        raise ValueError(f"sample_weight must have length {n_rows}, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("sample_weight entries must be finite and > 0")
    return w
