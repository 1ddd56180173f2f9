"""Sub-fund classification and the parity line between sub-fund mixes.

Also holds the unit accounting used when investors enter or leave a fund.

Sub-fund mandates: Gamma holds assets that move against the rest of the
universe (or, failing that, the calmest asset), Alpha the most volatile
remaining third, Beta the rest. The parity line is the Pareto-efficient set
of Alpha/Beta/Gamma mixes.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import from_cents, to_cents
from .exceptions import RedemptionError, ValidationError
from .marketdata import ReturnSeries, covariance_matrix, rolling_volatility
from .weights import (
    PortfolioStats,
    erc_weights,
    expected_returns,
    portfolio_stats,
    vvv_profile,
    vvv_weights,
)

ALPHA, BETA, GAMMA = "Alpha", "Beta", "Gamma"


@dataclass(frozen=True)
class SubFundDefinition:
    label: str
    members: tuple
    weighting: str
    stats: PortfolioStats | None = None


class SubFunds(NamedTuple):
    alpha: SubFundDefinition
    beta: SubFundDefinition
    gamma: SubFundDefinition


def classify_assets(assets, adjusted_volatility, expected_return, index_correlation,
                    gamma_corr_max=0.0):
    """Split a universe of at least three assets into Alpha, Beta and Gamma.

    Gamma takes every asset whose correlation with the universe index is
    below ``gamma_corr_max``; if none qualifies it takes the single asset with
    the lowest adjusted volatility. Gamma is capped so that two assets
    remain. The remainder is ranked by adjusted volatility (then expected
    return, then symbol): the top third, rounded up, forms Alpha and the rest
    Beta, with Beta always keeping at least one asset.
    """
    assets = list(assets)
    n = len(assets)
    if n < 3:
        raise ValidationError(f"classification needs at least 3 assets, got {n}")
    vol = dict(zip(assets, np.asarray(adjusted_volatility, dtype=float)))
    ret = dict(zip(assets, np.asarray(expected_return, dtype=float)))
    corr = dict(zip(assets, np.asarray(index_correlation, dtype=float)))
    if not (len(vol) == len(ret) == len(corr) == n):
        raise ValidationError("asset stats must align with assets")

    gamma = sorted((a for a in assets if corr[a] < gamma_corr_max),
                   key=lambda a: (corr[a], a))
    if not gamma:
        gamma = [min(assets, key=lambda a: (vol[a], a))]
    gamma = gamma[: n - 2]
    rest = sorted((a for a in assets if a not in gamma),
                  key=lambda a: (-vol[a], -ret[a], a))
    n_alpha = min(math.ceil(len(rest) / 3), len(rest) - 1)
    return SubFunds(
        SubFundDefinition(ALPHA, tuple(sorted(rest[:n_alpha])), "vvv"),
        SubFundDefinition(BETA, tuple(sorted(rest[n_alpha:])), "vvv"),
        SubFundDefinition(GAMMA, tuple(sorted(gamma)), "erc"),
    )


def index_correlations(returns, index_weights):
    """Correlation of each asset with the weighted index of all assets."""
    values = np.asarray(returns, dtype=float)
    index = values @ np.asarray(index_weights, dtype=float)
    out = np.empty(values.shape[1])
    for j in range(values.shape[1]):
        x = values[:, j]
        if x.std() == 0 or index.std() == 0:
            out[j] = 0.0
        else:
            out[j] = float(np.corrcoef(x, index)[0, 1])
    return out


class ABGClassifier(TransformerMixin, BaseEstimator):
    """Fit sub-fund membership and weights; transform returns to sub-fund returns.

    Parameters
    ----------
    window_days, vvv_window_days : int
        Windows for volatility and vvvFactor.
    gamma_corr_max : float
        Index-correlation threshold for Gamma membership.
    benchmark_rate : float
        Used for the sub-fund Sharpe ratios.

    Attributes
    ----------
    subfunds_ : SubFunds
    weights_ : ndarray of shape (n_assets, 3)
        Column ``k`` holds the within-sub-fund weights of Alpha, Beta, Gamma.
    subfund_mu_ : ndarray of shape (3,)
    subfund_cov_ : ndarray of shape (3, 3)
    """

    def __init__(self, window_days=90, vvv_window_days=90, gamma_corr_max=0.0,
                 benchmark_rate=0.10, assets=None):
        self.window_days = window_days
        self.vvv_window_days = vvv_window_days
        self.gamma_corr_max = gamma_corr_max
        self.benchmark_rate = benchmark_rate
        self.assets = assets

    def fit(self, X, y=None):
        names = getattr(X, "columns", None)
        X = check_array(X, ensure_min_samples=self.window_days + self.vvv_window_days - 1)
        if names is not None:
            assets = tuple(str(c) for c in names)
        elif self.assets is not None:
            assets = tuple(self.assets)
        else:
            assets = tuple(f"A{j}" for j in range(X.shape[1]))
        self.n_features_in_ = X.shape[1]
        self.assets_ = assets
        series = ReturnSeries(assets, tuple(range(X.shape[0])), X)
        profile = vvv_profile(rolling_volatility(series, self.window_days),
                              self.vvv_window_days)
        mu = expected_returns(series)
        cov = covariance_matrix(series)
        corr = index_correlations(X, vvv_weights(profile))
        funds = classify_assets(assets, profile.adjusted_volatility, mu, corr,
                                self.gamma_corr_max)
        W = np.zeros((len(assets), 3))
        defs = []
        for k, sub in enumerate(funds):
            idx = [assets.index(a) for a in sub.members]
            if sub.weighting == "erc":
                w = erc_weights(cov[np.ix_(idx, idx)])
            else:
                w = vvv_weights(profile.adjusted_volatility[idx])
            W[idx, k] = w
            defs.append(SubFundDefinition(sub.label, sub.members, sub.weighting,
                                     portfolio_stats(W[:, k], mu, cov, self.benchmark_rate)))
        self.profile_ = profile
        self.index_correlation_ = corr
        self.subfunds_ = SubFunds(*defs)
        self.weights_ = W
        self.subfund_mu_ = W.T @ mu
        self.subfund_cov_ = W.T @ cov @ W
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        return X @ self.weights_

    def asset_weights(self, abg):
        """Asset-level weights of an Alpha/Beta/Gamma mix."""
        check_is_fitted(self, "weights_")
        return self.weights_ @ np.asarray(abg, dtype=float)


# --------------------------------------------------------------------------
# Parity line


@dataclass(frozen=True)
class ParityPoint:
    position: float
    abg: tuple
    expected_return: float
    volatility: float


@dataclass(frozen=True)
class ParityLine:
    points: tuple

    def __len__(self):
        return len(self.points)

    @property
    def volatilities(self):
        return np.array([p.volatility for p in self.points])

    @property
    def returns(self):
        return np.array([p.expected_return for p in self.points])


def abg_grid(step=0.01):
    """All (alpha, beta, gamma) mixes on a simplex grid with spacing ``step``."""
    n = int(round(1.0 / step))
    if not math.isclose(n * step, 1.0, rel_tol=1e-9):
        raise ValidationError("step must divide 1")
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    i, j = i[keep], j[keep]
    return np.stack([i, j, n - i - j], axis=1) / n


def pareto_frontier(returns, vols, tol=1e-12):
    """Indices of non-dominated (return, vol) pairs, sorted by vol ascending."""
    order = np.lexsort((-returns, vols))
    keep = []
    best = -np.inf
    for idx in order:
        if returns[idx] > best + tol:
            keep.append(int(idx))
            best = returns[idx]
    return keep


def efficient_hull(returns, vols, keep, tol=1e-14):
    """Drop Pareto points lying strictly below the upper concave hull.

    The continuous long-only frontier is concave in (vol, return); grid points
    under the hull are discretization artifacts that a blend of two hull
    points beats.
    """
    hull = []
    for i in keep:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            lhs = (returns[b] - returns[a]) * (vols[i] - vols[a])
            rhs = (returns[i] - returns[a]) * (vols[b] - vols[a])
            if lhs - rhs < -tol:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def build_parity_line(subfund_mu, subfund_cov, step=0.01):
    """Efficient frontier of Alpha/Beta/Gamma mixes swept on a simplex grid.

    Keeps the Pareto-optimal grid mixes that lie on the upper concave hull,
    sorted by volatility.
    """
    mu = np.asarray(subfund_mu, dtype=float).reshape(3)
    cov = np.asarray(subfund_cov, dtype=float).reshape(3, 3)
    grid = abg_grid(step)
    rets = grid @ mu
    vols = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", grid, cov, grid), 0.0))
    keep = efficient_hull(rets, vols, pareto_frontier(rets, vols))
    v = vols[keep]
    span = v[-1] - v[0]
    points = tuple(
        ParityPoint(float((vols[k] - v[0]) / span) if span > 0 else 0.0,
                    tuple(float(x) for x in grid[k]), float(rets[k]), float(vols[k]))
        for k in keep
    )
    return ParityLine(points)


# --------------------------------------------------------------------------
# Investor preferences

PREFERENCE_MODES = ("risk_target", "return_target", "explicit_weights", "default")


@dataclass(frozen=True)
class InvestorPreference:
    investor_id: str
    mode: str = "default"
    value: object = None

    def __post_init__(self):
        if self.mode not in PREFERENCE_MODES:
            raise ValidationError(f"unknown preference mode {self.mode!r}")
        if self.mode == "explicit_weights":
            w = np.asarray(self.value, dtype=float)
            if w.shape != (3,) or np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1) > 1e-9:
                raise ValidationError("explicit ABG weights must be 3 fractions summing to 1")
        elif self.mode in ("risk_target", "return_target"):
            if self.value is None or not math.isfinite(float(self.value)):
                raise ValidationError(f"{self.mode} requires a numeric value")


@dataclass(frozen=True)
class Allocation:
    abg: tuple
    clamped: bool = False


def _interpolate(line, key, target):
    xs = line.volatilities if key == "vol" else line.returns
    pts = line.points
    if target <= xs[0]:
        return Allocation(pts[0].abg, bool(target < xs[0]))
    if target >= xs[-1]:
        return Allocation(pts[-1].abg, bool(target > xs[-1]))
    k = int(np.searchsorted(xs, target, side="right")) - 1
    lo, hi = pts[k], pts[k + 1]
    span = xs[k + 1] - xs[k]
    a = (target - xs[k]) / span if span > 0 else 0.0
    mix = (1 - a) * np.asarray(lo.abg) + a * np.asarray(hi.abg)
    mix = np.clip(mix, 0.0, None)
    return Allocation(tuple(float(x) for x in mix / mix.sum()), False)


def allocation_from_preference(pref, line):
    """Map a preference onto Alpha/Beta/Gamma weights using the parity line.

    Risk and return targets interpolate between adjacent frontier points and
    are clamped to the line's range (``clamped=True``). Investors with no
    stated preference get the lowest-volatility point.
    """
    if not line.points:
        raise ValidationError("parity line is empty")
    if pref.mode == "explicit_weights":
        return Allocation(tuple(float(x) for x in pref.value), False)
    if pref.mode == "risk_target":
        return _interpolate(line, "vol", float(pref.value))
    if pref.mode == "return_target":
        return _interpolate(line, "ret", float(pref.value))
    return Allocation(line.points[0].abg, False)


class PreferenceLedger:
    """Append-only JSON-lines record of investor preferences."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, pref, allocation, timestamp=None):
        ts = timestamp or dt.datetime.now(dt.timezone.utc).isoformat()
        value = list(pref.value) if isinstance(pref.value, (list, tuple, np.ndarray)) else pref.value
        record = {
            "investor_id": pref.investor_id,
            "mode": pref.mode,
            "value": value,
            "abg_weights": list(allocation.abg),
            "timestamp": ts,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    def records(self):
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# Fund unit accounting


@dataclass
class FundAccount:
    """Holdings, cash and token supply of one fund.

    ``tvl = cash + sum(units * price)``; tokens mint and burn at
    ``tvl / token_supply`` (1.0 for an empty fund).
    """

    name: str = "Parity"
    holdings: dict = field(default_factory=dict)
    cash_cents: int = 0
    token_supply: float = 0.0
    balances: dict = field(default_factory=dict)

    def tvl_cents(self, prices):
        value = sum(units * prices[a] for a, units in sorted(self.holdings.items()))
        return self.cash_cents + to_cents(value)

    def tvl_usd(self, prices):
        return from_cents(self.tvl_cents(prices))

    def unit_price(self, prices):
        if self.token_supply <= 0:
            return 1.0
        return self.tvl_usd(prices) / self.token_supply

    def deposit(self, investor_id, amount_usd, prices):
        """Mint tokens for a cash deposit at the current unit price."""
        if amount_usd <= 0:
            raise ValidationError("deposit must be positive")
        price = self.unit_price(prices)
        cents = to_cents(amount_usd)
        tokens = from_cents(cents) / price
        self.cash_cents += cents
        self.token_supply += tokens
        self.balances[investor_id] = self.balances.get(investor_id, 0.0) + tokens
        return tokens

    def redeem(self, investor_id, amount_usd, prices):
        """Burn tokens worth ``amount_usd`` and pay it out of cash."""
        if amount_usd <= 0:
            raise ValidationError("redemption must be positive")
        price = self.unit_price(prices)
        cents = to_cents(amount_usd)
        tokens = from_cents(cents) / price
        held = self.balances.get(investor_id, 0.0)
        if tokens > held * (1 + 1e-12):
            raise RedemptionError(
                f"{investor_id} holds {held * price:.2f} USD, cannot redeem {amount_usd:.2f}"
            )
        if cents > self.cash_cents:
            raise RedemptionError("insufficient cash; sell holdings before redeeming")
        self.cash_cents -= cents
        self.token_supply -= min(tokens, held)
        self.balances[investor_id] = held - min(tokens, held)
        return tokens

    def snapshot(self, prices):
        return {
            "name": self.name,
            "holdings": dict(sorted(self.holdings.items())),
            "cash_usd": from_cents(self.cash_cents),
            "token_supply": self.token_supply,
            "unit_price_usd": self.unit_price(prices),
            "tvl_usd": self.tvl_usd(prices),
        }


def fund_nav(account, prices):
    """Unit price of ``account`` at ``prices``."""
    if account.token_supply <= 0:
        raise ValidationError("unit price undefined for zero token supply")
    return account.unit_price(prices)
