"""Input validation and money helpers shared across modules."""
from __future__ import annotations

import math

import numpy as np

from .exceptions import ValidationError

ANNUALIZATION = 365


def to_cents(usd):
    """Round a USD amount to integer cents."""
    if not math.isfinite(usd):
        raise ValidationError(f"non-finite money amount: {usd!r}")
    return int(round(usd * 100))


def from_cents(cents):
    return cents / 100.0


def check_weights(weights, n_assets=None, long_only=False, atol=1e-9):
    """Validate a weight vector and return it as a float array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("weights must be a non-empty 1-d vector")
    if n_assets is not None and w.size != n_assets:
        raise ValidationError(f"expected {n_assets} weights, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite")
    if abs(w.sum() - 1.0) > atol:
        raise ValidationError(f"weights sum to {w.sum():.12g}, expected 1")
    if long_only and np.any(w < -atol):
        raise ValidationError("long-only weights must be non-negative")
    return w


def check_covariance(cov, n_assets=None, atol=1e-12):
    c = np.asarray(cov, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError("covariance must be a square matrix")
    if n_assets is not None and c.shape[0] != n_assets:
        raise ValidationError(
            f"covariance is {c.shape[0]}x{c.shape[0]}, expected {n_assets}"
        )
    if not np.all(np.isfinite(c)):
        raise ValidationError("covariance must be finite")
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.max(np.abs(c - c.T)) > atol * scale:
        raise ValidationError("covariance must be symmetric")
    return c


def check_vector(x, n, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != n:
        raise ValidationError(f"{name} has length {v.size}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} must be finite")
    return v


def check_fraction(value, name, low=0.0, high=1.0, closed=(True, True)):
    lo_ok = value >= low if closed[0] else value > low
    hi_ok = value <= high if closed[1] else value < high
    if not (lo_ok and hi_ok):
        lb = "[" if closed[0] else "("
        rb = "]" if closed[1] else ")"
        raise ValidationError(f"{name}={value!r} outside {lb}{low}, {high}{rb}")
    return float(value)
