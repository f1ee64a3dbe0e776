"""Exponential decay-rate estimation by log-linear least squares."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

MIN_SAMPLES = 8
DEFAULT_FLOOR = 1e-14


def _window(t, y, window):
    t = np.asarray(t, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if t.shape != y.shape:
        raise ValueError(f"t and y lengths differ: {t.shape} vs {y.shape}")
    if window is not None:
        lo, hi = window
        keep = (t >= lo) & (t <= (np.inf if hi is None else hi))
        t, y = t[keep], y[keep]
    return t, y


def fit_decay_rate(t, y, window: tuple[float, float | None] | None = None) -> tuple[float, float]:
    """Least-squares slope of log y against t.

    Returns ``(rate, r_squared)`` with ``rate = -slope``. A series that is exactly
    constant has rate 0 and R^2 = 1 by convention.
    """
    t, y = _window(t, y, window)
    if t.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples in the fit window, got {t.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("decay fit needs strictly positive finite values; clip to a floor first")
    logy = np.log(y)
    if np.ptp(logy) == 0.0:
        return 0.0, 1.0
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)


def clip_floor(y, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(y, dtype=float), floor)


class ExponentialDecayRegressor(RegressorMixin, BaseEstimator):
    """Fit ``y ~ amplitude * exp(-rate * t)`` on ``t >= t_min``.

    Parameters
    ----------
    t_min : float
        Samples earlier than this are treated as transient and ignored.
    t_max : float or None
        Optional upper end of the fit window.
    floor : float
        Values are clipped below at this level before taking logs.
    """

    def __init__(self, t_min: float = 1.0, t_max: float | None = None, floor: float = DEFAULT_FLOOR):
        self.t_min = t_min
        self.t_max = t_max
        self.floor = floor

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(-1)
        yy = clip_floor(y, self.floor)
        self.rate_, self.r_squared_ = fit_decay_rate(t, yy, (self.t_min, self.t_max))
        tw, yw = _window(t, yy, (self.t_min, self.t_max))
        self.log_amplitude_ = float(np.mean(np.log(yw) + self.rate_ * tw))
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        t = np.asarray(X, dtype=float).reshape(-1)
        return np.exp(self.log_amplitude_ - self.rate_ * t)
