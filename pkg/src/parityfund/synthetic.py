"""Seeded synthetic crypto market for tests and demos.

One market factor drives every asset through its beta, with volatility that
switches between a calm and a turbulent regime, and an optional scripted
crash window where the market drifts down hard. The last asset has a
negative beta so that classification has a natural hedge candidate.
"""
from __future__ import annotations

import datetime as dt

import numpy as np

from .marketdata import PriceHistory

TICKERS = ("ADA", "AVAX", "BNB", "BTC", "DOT", "ETH", "LINK", "MATIC", "SOL", "XRP",
           "ATOM", "UNI", "AAVE", "ALGO", "FIL", "NEAR")


def generate_history(n_assets=10, n_days=546, start=dt.date(2020, 5, 1), seed=0,
                     crash_start=None, crash_days=30, crash_drift=-0.04,
                     switch_prob=0.02):
    """Daily close prices and market caps for ``n_assets`` assets.

    ``crash_start`` is a day index; by default the crash starts two thirds of
    the way through the sample. Pass ``crash_days=0`` to disable it.
    """
    rng = np.random.default_rng(seed)
    if n_assets <= len(TICKERS):
        assets = tuple(sorted(TICKERS[:n_assets]))
    else:
        assets = tuple(f"T{j:03d}" for j in range(n_assets))
    if crash_start is None:
        crash_start = (2 * n_days) // 3

    calm, wild = 0.025, 0.06
    regime = np.zeros(n_days, dtype=bool)
    for t in range(1, n_days):
        regime[t] = (not regime[t - 1]) if rng.random() < switch_prob else regime[t - 1]
    mkt_vol = np.where(regime, wild, calm)
    drift = np.full(n_days, 0.001)
    crash = slice(crash_start, crash_start + crash_days)
    drift[crash] = crash_drift
    mkt_vol[crash] = wild * 1.5
    market = drift + mkt_vol * rng.standard_normal(n_days)

    beta = rng.uniform(0.6, 1.6, n_assets)
    if n_assets >= 3:
        beta[-1] = -0.3
    idio = rng.uniform(0.01, 0.04, n_assets)
    alpha = rng.normal(0.0005, 0.001, n_assets)
    rets = alpha + market[:, None] * beta + rng.standard_normal((n_days, n_assets)) * idio
    rets[0] = 0.0
    start_px = np.exp(rng.uniform(np.log(0.5), np.log(50_000.0), n_assets))
    close = start_px * np.exp(np.cumsum(rets, axis=0))
    supply = np.exp(rng.uniform(np.log(1e7), np.log(1e10), n_assets))
    mcap = close * supply
    dates = tuple(start + dt.timedelta(days=i) for i in range(n_days))
    return PriceHistory(assets, dates, close, mcap)
