"""Correlation and coefficient-of-prognosis statistics."""

import warnings

import numpy as np

from ..errors import EmdWarning, FitError


def _centered(v):
    v = np.asarray(v, dtype=float)
    return v - v.mean()


def _is_constant(v):
    return bool(np.all(v == v[0]))


def correlation_coefficient(fit_values, var_values) -> float:
    """Linear correlation between two samples, normalised by ``N - 1``.

    Numerator and standard deviations share the ``N - 1`` normalisation, so the
    result is the Pearson coefficient and always lies in [-1, 1].
    """
    a = np.asarray(fit_values, dtype=float)
    b = np.asarray(var_values, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got {a.shape} and {b.shape}")
    n = a.size
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    if _is_constant(a) or _is_constant(b):
        raise FitError("degenerate_variance", "correlation undefined for a constant vector")
    da, db = _centered(a), _centered(b)
    sa = np.sqrt(np.sum(da * da) / (n - 1))
    sb = np.sqrt(np.sum(db * db) / (n - 1))
    rho = np.sum(da * db) / ((n - 1) * sa * sb)
    return float(np.clip(rho, -1.0, 1.0))


def cop_score(targets, predictions) -> float:
    """Squared correlation between held-out targets and predictions, in [0, 1].

    A constant predictor scores 0 (with an ``EmdWarning``); a constant target
    vector is an error because no predictor can be ranked against it.
    """
    s = np.asarray(targets, dtype=float)
    s_hat = np.asarray(predictions, dtype=float)
    if s.shape != s_hat.shape or s.ndim != 1:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_hat.shape}")
    if s.size < 3:
        raise FitError("too_few_test_points", f"need >= 3 test points, got {s.size}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s_hat))):
        raise FitError("nonfinite_prediction", "CoP needs finite targets and predictions")
    if _is_constant(s):
        raise FitError("degenerate_test_set", "test targets have zero variance")
    if _is_constant(s_hat):
        warnings.warn("constant_predictor: predictions have zero variance, CoP set to 0",
                      EmdWarning, stacklevel=2)
        return 0.0
    rho = correlation_coefficient(s, s_hat)
    return float(np.clip(rho * rho, 0.0, 1.0))


def rmse(targets, predictions) -> float:
    d = np.asarray(targets, dtype=float) - np.asarray(predictions, dtype=float)
    return float(np.sqrt(np.mean(d * d)))
