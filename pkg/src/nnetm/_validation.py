"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .signals import SignalBatch


def check_features(X, n_features: int = 2) -> np.ndarray:
    """(M, n_features) finite float array; a single row may be passed 1-D."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features per row, got {X.shape[1]}")
    return X


def check_signals(signals) -> SignalBatch:
    if not isinstance(signals, SignalBatch):
        raise TypeError(f"expected a SignalBatch, got {type(signals).__name__}")
    if signals.batch_size < 1:
        raise ValueError("signal batch is empty")
    for name in ("values", "derivatives"):
        if not np.all(np.isfinite(getattr(signals, name))):
            raise ValueError(f"signal {name} contain non-finite entries")
    return signals


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
