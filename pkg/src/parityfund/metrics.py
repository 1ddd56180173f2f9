"""Concentration Risk Indicator and interval performance reports.

The indicator keeps the Herfindahl-Hirschman core (squared weights) and
modifies each asset's term by its relative volatility and its share of the
universe market cap::

    contribution_i = w_i**2 * (sigma_i / sigma_ref) / m_i

With neutral modifiers it reduces to the HH index scaled by the number of
assets; a larger market share lowers the term, a higher volatility raises it.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import ANNUALIZATION, check_vector
from .exceptions import AlignmentError, ValidationError
from .weights import DEFAULT_BENCHMARK_RATE, sharpe_ratio

INTERVALS = (7, 30, 90, 365)


@dataclass(frozen=True)
class CriReport:
    assets: tuple
    contributions: np.ndarray
    market_shares: np.ndarray
    sigma_ref: float

    @property
    def portfolio_cri(self):
        return float(self.contributions.sum())

    def to_dict(self):
        return {
            "portfolio_cri": self.portfolio_cri,
            "sigma_ref": self.sigma_ref,
            "assets": [
                {"asset": a, "contribution": float(c), "market_share": float(m)}
                for a, c, m in zip(self.assets, self.contributions, self.market_shares)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def cri(weights, market_caps, volatilities, assets=None, universe_market_cap=None,
        sigma_ref=None, chain_fractions=None):
    """Concentration Risk Indicator of a portfolio.

    Parameters
    ----------
    weights, market_caps, volatilities : array-like of shape (n,)
    universe_market_cap : float, optional
        Total market cap used to normalise shares. Defaults to the sum of
        ``market_caps``, i.e. the portfolio universe is the whole market.
    sigma_ref : float, optional
        Reference volatility. Defaults to the market-cap-weighted average of
        ``volatilities``.
    chain_fractions : array-like of shape (n, n_chains), optional
        Fraction of each asset's holding on each chain. Multiplies each
        contribution by ``sum_c f_ic**2``, which is 1 for a single chain.
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    n = w.size
    mcap = check_vector(market_caps, n, "market_caps")
    sigma = check_vector(volatilities, n, "volatilities")
    assets = tuple(assets) if assets is not None else tuple(range(n))
    if np.any(mcap <= 0):
        bad = [a for a, m in zip(assets, mcap) if m <= 0]
        raise ValidationError(f"market cap must be positive for {bad}")
    if np.any(sigma < 0):
        raise ValidationError("volatilities must be non-negative")
    total = float(universe_market_cap) if universe_market_cap is not None else float(mcap.sum())
    if total < mcap.sum() * (1 - 1e-12):
        raise ValidationError("universe market cap is smaller than the portfolio assets' total")
    shares = mcap / total
    if sigma_ref is None:
        sigma_ref = float((mcap / mcap.sum()) @ sigma)
    if not sigma_ref > 0:
        raise ValidationError("reference volatility must be positive")
    contrib = w ** 2 * (sigma / sigma_ref) / shares
    if chain_fractions is not None:
        f = np.asarray(chain_fractions, dtype=float)
        if f.shape[0] != n or np.any(f < 0) or np.any(np.abs(f.sum(axis=1) - 1) > 1e-9):
            raise ValidationError("chain fractions must be non-negative rows summing to 1")
        contrib = contrib * (f ** 2).sum(axis=1)
    return CriReport(assets, contrib, shares, float(sigma_ref))


@dataclass(frozen=True)
class PerformanceRow:
    entity: str
    interval_days: int
    total_return: float
    volatility: float
    sharpe: float
    cri: float

    def as_list(self):
        return [self.entity, self.interval_days, self.total_return, self.volatility,
                self.sharpe, self.cri]


def interval_stats(nav, days, benchmark_rate=DEFAULT_BENCHMARK_RATE):
    """(total return, annualized vol, Sharpe) over the last ``days`` of ``nav``."""
    tail = np.asarray(nav[-(days + 1):], dtype=float)
    if np.any(tail <= 0):
        raise ValidationError("NAV must stay positive")
    total = float(tail[-1] / tail[0] - 1.0)
    r = np.diff(np.log(tail))
    vol = float(r.std(ddof=1) * math.sqrt(ANNUALIZATION)) if r.size > 1 else 0.0
    ann = float(r.mean() * ANNUALIZATION) if r.size else 0.0
    return total, vol, sharpe_ratio(ann, vol, benchmark_rate)


def performance_report(nav_by_entity, dates=None, cri_by_entity=None, intervals=INTERVALS,
                       benchmark_rate=DEFAULT_BENCHMARK_RATE):
    """Return, volatility, Sharpe and CRI per entity over trailing intervals.

    ``nav_by_entity`` maps a name to its NAV series; all series must share
    length (and ``dates`` when given, as a mapping of name to dates).
    Intervals longer than the available history are omitted.
    """
    lengths = {k: len(v) for k, v in nav_by_entity.items()}
    if len(set(lengths.values())) > 1:
        raise AlignmentError(f"NAV series have different lengths: {lengths}")
    if dates is not None:
        ref = None
        for name, d in dates.items():
            if ref is None:
                ref = tuple(d)
            elif tuple(d) != ref:
                raise AlignmentError(f"dates for {name} do not match")
    cri_by_entity = cri_by_entity or {}
    rows = []
    for entity, nav in nav_by_entity.items():
        for days in intervals:
            if days >= len(nav):
                continue
            total, vol, sharpe = interval_stats(nav, days, benchmark_rate)
            rows.append(PerformanceRow(entity, days, total, vol, sharpe,
                                       float(cri_by_entity.get(entity, float("nan")))))
    return rows


def max_drawdown(nav):
    nav = np.asarray(nav, dtype=float)
    peak = np.maximum.accumulate(nav)
    return float(np.max(1.0 - nav / peak)) if nav.size else 0.0


REPORT_HEADER = ["entity", "interval_days", "total_return", "volatility", "sharpe", "cri"]


def report_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row.as_list()])
    return buf.getvalue()
