"""Portfolio weighting engines.

Four schemes share one output convention (weights summing to one):

* ``vvv_weights``: inverse of volatility plus volatility-of-volatility.
* ``mvo_weights``: Markowitz tangency portfolio, shorts allowed.
* ``mvo_no_short_weights``: maximum-Sharpe portfolio on the simplex.
* ``erc_weights``: equal risk contribution using the full covariance.

Each has a scikit-learn style estimator wrapper that fits on a matrix of
daily log returns (rows are days, columns assets).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import ANNUALIZATION, check_covariance, check_vector, check_weights
from .exceptions import (
    ConditioningError,
    ConvergenceError,
    DegenerateAssetError,
    DegenerateFrontierError,
    InsufficientDataError,
    ValidationError,
)
from .marketdata import (
    ReturnSeries,
    VolatilitySeries,
    _rolling_std,
    covariance_matrix,
    log_returns,
    rolling_volatility,
)

DEFAULT_BENCHMARK_RATE = 0.10


@dataclass(frozen=True)
class VolatilityProfile:
    assets: tuple
    volatility: np.ndarray
    vvv_factor: np.ndarray
    adjusted_volatility: np.ndarray


@dataclass(frozen=True)
class PortfolioStats:
    expected_return: float
    volatility: float
    sharpe: float
    benchmark_rate: float = DEFAULT_BENCHMARK_RATE

    @property
    def sharpe_defined(self):
        return not math.isnan(self.sharpe)


@dataclass(frozen=True)
class NoShortResult:
    """Weights from :func:`mvo_no_short_weights`.

    ``min_variance_fallback`` is set when no asset beats the benchmark rate
    and the minimum-variance long-only portfolio was returned instead.
    """

    weights: np.ndarray
    sharpe: float
    min_variance_fallback: bool = False
    iterations: int = 0


def sharpe_ratio(expected_return, volatility, benchmark_rate=DEFAULT_BENCHMARK_RATE):
    """Excess return over ``benchmark_rate`` per unit volatility.

    Returns NaN when ``volatility`` is zero: the ratio is undefined there.
    """
    if volatility <= 0:
        return float("nan")
    return (expected_return - benchmark_rate) / volatility


def expected_returns(returns):
    """Annualized mean daily log return per asset."""
    values = returns.values if isinstance(returns, ReturnSeries) else np.asarray(returns)
    if values.shape[0] < 1:
        raise InsufficientDataError("need at least one return row")
    return values.mean(axis=0) * ANNUALIZATION


def vvv_factor_series(vol_series, window_days=90):
    """Rolling sample std of the volatility series itself."""
    if len(vol_series) < window_days:
        raise InsufficientDataError(
            f"need {window_days} volatility points for vvvFactor, have {len(vol_series)}"
        )
    values = _rolling_std(vol_series.values, window_days)
    return VolatilitySeries(
        vol_series.assets, vol_series.dates[window_days - 1:], values, window_days,
        vol_series.annualization_factor,
    )


def vvv_profile(vol_series, window_days=90):
    """Volatility, vvvFactor and their sum at the last date of ``vol_series``.

    vvvFactor is the sample standard deviation of the final ``window_days``
    values of the (already annualized) rolling volatility series.
    """
    values = np.asarray(vol_series.values, dtype=float)
    if values.shape[0] < window_days:
        short = vol_series.assets[0] if vol_series.assets else "?"
        raise InsufficientDataError(
            f"asset {short}: vvvFactor needs {window_days} volatility points, "
            f"have {values.shape[0]}"
        )
    tail = values[-window_days:]
    vol = values[-1].copy()
    # std is shift invariant; centring on the first value keeps flat series exactly 0
    vvv = (tail - tail[0]).std(axis=0, ddof=1)
    return VolatilityProfile(tuple(vol_series.assets), vol, vvv, vol + vvv)


def vvv_weights(profile):
    """Weights inversely proportional to VVV-adjusted volatility."""
    adjusted = np.asarray(
        profile.adjusted_volatility if isinstance(profile, VolatilityProfile) else profile,
        dtype=float,
    ).reshape(-1)
    assets = getattr(profile, "assets", tuple(range(adjusted.size)))
    for asset, a in zip(assets, adjusted):
        if not (np.isfinite(a) and a > 0):
            raise DegenerateAssetError(f"asset {asset} has adjusted volatility {a}", asset)
    inv = 1.0 / adjusted
    return inv / inv.sum()


def mvo_weights(mu, cov, benchmark_rate=DEFAULT_BENCHMARK_RATE, max_condition=1e12):
    """Tangency portfolio ``w ∝ inv(cov) @ (mu - benchmark_rate)``, sum one."""
    cov = check_covariance(cov)
    n = cov.shape[0]
    mu = check_vector(mu, n, "mu")
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > max_condition:
        raise ConditioningError(f"covariance condition number {cond:.3g} exceeds {max_condition:.3g}")
    raw = np.linalg.solve(cov, mu - benchmark_rate)
    total = raw.sum()
    if abs(total) <= 1e-12 * max(1.0, np.abs(raw).sum()):
        raise DegenerateFrontierError("tangency weights sum to zero; frontier is degenerate")
    return raw / total


def _project_simplex(v):
    # Sort-based Euclidean projection onto {w >= 0, sum w = 1}.
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _sharpe_of(w, excess, cov):
    var = float(w @ cov @ w)
    if var <= 0:
        return -np.inf
    return float(w @ excess) / math.sqrt(var)


def _ascend(w, objective, gradient, max_iter, tol):
    """Projected gradient ascent with backtracking on the step size."""
    step = 1.0
    value = objective(w)
    for it in range(1, max_iter + 1):
        g = gradient(w)
        while True:
            candidate = _project_simplex(w + step * g)
            cand_value = objective(candidate)
            if cand_value >= value + 1e-4 * float(g @ (candidate - w)):
                break
            step *= 0.5
            if step < 1e-18:
                return w, it
        moved = np.max(np.abs(candidate - w))
        w, value = candidate, cand_value
        step *= 2.0
        if moved < tol:
            return w, it
    return w, max_iter


def _polish(w, solve_on_support, objective):
    support = np.nonzero(w > 1e-9)[0]
    raw = solve_on_support(support)
    if raw is None or np.any(raw <= 0):
        return w
    candidate = np.zeros_like(w)
    candidate[support] = raw / raw.sum()
    return candidate if objective(candidate) >= objective(w) else w


def mvo_no_short_weights(mu, cov, benchmark_rate=DEFAULT_BENCHMARK_RATE,
                         max_iter=10_000, tol=1e-12):
    """Maximum-Sharpe weights subject to ``w >= 0`` and ``sum(w) == 1``.

    Solved by projected-gradient ascent over the simplex, started from the
    better of the equal-weight portfolio and the best single asset (lowest
    index on ties), then polished by solving the tangency system restricted
    to the active support. When every asset's expected return is at or below
    ``benchmark_rate`` the minimum-variance long-only portfolio is returned
    with ``min_variance_fallback=True``.

    Returns
    -------
    NoShortResult
    """
    cov = check_covariance(cov)
    n = cov.shape[0]
    mu = check_vector(mu, n, "mu")
    excess = mu - benchmark_rate
    if np.any(np.diag(cov) <= 0):
        raise ConditioningError("covariance has a non-positive variance")

    def solve(support, rhs):
        sub = cov[np.ix_(support, support)]
        try:
            return np.linalg.solve(sub, rhs[support])
        except np.linalg.LinAlgError:
            return None

    if np.all(excess <= 0):
        def objective(w):
            return -float(w @ cov @ w)

        def gradient(w):
            return -2.0 * (cov @ w)

        start = np.full(n, 1.0 / n)
        ones = np.ones(n)
        w, iters = start, 0
        for _ in range(3):
            w, k = _ascend(w, objective, gradient, max_iter, tol)
            iters += k
            w = _polish(w, lambda s: solve(s, ones), objective)
        return NoShortResult(w, _sharpe_of(w, excess, cov), True, iters)

    def objective(w):
        return _sharpe_of(w, excess, cov)

    def gradient(w):
        sig_w = cov @ w
        var = float(w @ sig_w)
        vol = math.sqrt(var)
        return excess / vol - float(w @ excess) * sig_w / (var * vol)

    eye = np.eye(n)
    vertex_sharpe = [objective(eye[i]) for i in range(n)]
    best = int(np.argmax(vertex_sharpe))
    start = np.full(n, 1.0 / n)
    if vertex_sharpe[best] > objective(start):
        start = eye[best].copy()
    w, iters = start, 0
    for _ in range(3):
        w, k = _ascend(w, objective, gradient, max_iter, tol)
        iters += k
        w = _polish(w, lambda s: solve(s, excess), objective)
    w = np.where(w < 0, 0.0, w)
    w = w / w.sum()
    return NoShortResult(w, objective(w), False, iters)


def risk_contributions(weights, cov):
    """Fraction of portfolio variance attributable to each asset."""
    w = np.asarray(weights, dtype=float)
    cov = np.asarray(cov, dtype=float)
    marginal = cov @ w
    return w * marginal / float(w @ marginal)


def erc_weights(cov, tol=1e-10, max_iters=10_000, rc_tol=1e-10):
    """Long-only weights with equal risk contributions.

    Cyclical coordinate descent on ``0.5 x'Σx - (1/N) Σ log x``: each
    coordinate update is the positive root of a quadratic, so the fixed
    point satisfies ``x_i (Σx)_i = 1/N`` for every asset.
    """
    cov = check_covariance(cov)
    n = cov.shape[0]
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise ConditioningError("covariance must be positive definite")
    if n == 1:
        return np.ones(1)
    budget = 1.0 / n
    x = 1.0 / np.sqrt(diag)
    x /= math.sqrt(float(x @ cov @ x))
    w = x / x.sum()
    residual = np.inf
    for _ in range(max_iters):
        w_old = w
        for i in range(n):
            c = float(cov[i] @ x) - diag[i] * x[i]
            x[i] = (-c + math.sqrt(c * c + 4.0 * diag[i] * budget)) / (2.0 * diag[i])
        w = x / x.sum()
        if np.max(np.abs(w - w_old)) < tol:
            residual = float(np.max(np.abs(risk_contributions(w, cov) - budget)))
            if residual < rc_tol:
                return w
    raise ConvergenceError(
        f"ERC did not converge in {max_iters} iterations (residual {residual:.3g})", residual
    )


def portfolio_stats(weights, mu, cov, benchmark_rate=DEFAULT_BENCHMARK_RATE):
    w = np.asarray(weights, dtype=float).reshape(-1)
    mu = check_vector(mu, w.size, "mu")
    cov = check_covariance(cov, w.size)
    er = float(w @ mu)
    var = float(w @ cov @ w)
    vol = math.sqrt(max(var, 0.0))
    return PortfolioStats(er, vol, sharpe_ratio(er, vol, benchmark_rate), benchmark_rate)


# --------------------------------------------------------------------------
# Estimator wrappers


class _PortfolioEstimator(BaseEstimator):
    """Shared ``predict``/``score`` for weighting estimators.

    ``predict(X)`` returns the weighted daily return of each row of ``X``;
    ``score(X)`` is the annualized Sharpe ratio of those returns.
    """

    def _validate(self, X, min_rows=2):
        names = getattr(X, "columns", None)
        X = check_array(X, ensure_min_samples=min_rows)
        if names is not None:
            self.feature_names_in_ = np.asarray([str(c) for c in names], dtype=object)
        self.n_features_in_ = X.shape[1]
        return X

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.weights_.size:
            raise ValidationError(f"X has {X.shape[1]} columns, fitted on {self.weights_.size}")
        return X @ self.weights_

    def score(self, X, y=None):
        r = self.predict(X)
        vol = r.std(ddof=1) * math.sqrt(ANNUALIZATION) if r.size > 1 else 0.0
        return sharpe_ratio(r.mean() * ANNUALIZATION, vol, getattr(self, "benchmark_rate",
                                                                   DEFAULT_BENCHMARK_RATE))


class VVVRiskParity(_PortfolioEstimator):
    """Inverse VVV-adjusted volatility weighting.

    Parameters
    ----------
    window_days : int, default=90
        Trailing window for the annualized volatility.
    vvv_window_days : int, default=90
        Trailing window of volatility values for vvvFactor.
    benchmark_rate : float, default=0.10
        Only used by ``score``.

    Attributes
    ----------
    profile_ : VolatilityProfile
    weights_ : ndarray of shape (n_assets,)
    """

    def __init__(self, window_days=90, vvv_window_days=90,
                 benchmark_rate=DEFAULT_BENCHMARK_RATE):
        self.window_days = window_days
        self.vvv_window_days = vvv_window_days
        self.benchmark_rate = benchmark_rate

    def fit(self, X, y=None):
        X = self._validate(X, min_rows=self.window_days + self.vvv_window_days - 1)
        assets = tuple(getattr(self, "feature_names_in_", range(X.shape[1])))
        series = ReturnSeries(assets, tuple(range(X.shape[0])), X)
        vols = rolling_volatility(series, self.window_days)
        self.profile_ = vvv_profile(vols, self.vvv_window_days)
        self.weights_ = vvv_weights(self.profile_)
        return self


class MeanVariance(_PortfolioEstimator):
    """Maximum-Sharpe Markowitz portfolio against ``benchmark_rate``.

    With ``allow_short=True`` this is the closed-form tangency portfolio;
    otherwise the long-only solution from :func:`mvo_no_short_weights`.
    """

    def __init__(self, benchmark_rate=DEFAULT_BENCHMARK_RATE, allow_short=True,
                 max_condition=1e12):
        self.benchmark_rate = benchmark_rate
        self.allow_short = allow_short
        self.max_condition = max_condition

    def fit(self, X, y=None):
        X = self._validate(X)
        series = ReturnSeries(tuple(range(X.shape[1])), tuple(range(X.shape[0])), X)
        self.mu_ = expected_returns(series)
        self.covariance_ = covariance_matrix(series)
        if self.allow_short:
            self.weights_ = mvo_weights(self.mu_, self.covariance_, self.benchmark_rate,
                                        self.max_condition)
            self.min_variance_fallback_ = False
        else:
            res = mvo_no_short_weights(self.mu_, self.covariance_, self.benchmark_rate)
            self.weights_ = res.weights
            self.min_variance_fallback_ = res.min_variance_fallback
        return self


class EqualRiskContribution(_PortfolioEstimator):
    """Equal-risk-contribution (covariance-aware risk parity) weights."""

    def __init__(self, tol=1e-10, max_iters=10_000, benchmark_rate=DEFAULT_BENCHMARK_RATE):
        self.tol = tol
        self.max_iters = max_iters
        self.benchmark_rate = benchmark_rate

    def fit(self, X, y=None):
        X = self._validate(X)
        series = ReturnSeries(tuple(range(X.shape[1])), tuple(range(X.shape[0])), X)
        self.covariance_ = covariance_matrix(series)
        self.weights_ = erc_weights(self.covariance_, self.tol, self.max_iters)
        return self


# --------------------------------------------------------------------------
# Weight comparison report

REPORT_COLUMNS = [
    "asset", "volatility", "vvv_factor", "vvv_adj_volatility",
    "vvv_weight", "mvo_weight", "no_short_weight",
]
TRAILER_ROWS = ["portfolio_expected_return", "portfolio_volatility", "sharpe_ratio"]


@dataclass(frozen=True)
class WeightsReport:
    profile: VolatilityProfile
    vvv: np.ndarray
    mvo: np.ndarray
    no_short: np.ndarray
    stats: dict

    def rows(self):
        out = []
        p = self.profile
        for i, asset in enumerate(p.assets):
            out.append([asset, p.volatility[i], p.vvv_factor[i], p.adjusted_volatility[i],
                        self.vvv[i], self.mvo[i], self.no_short[i]])
        for label, attr in zip(TRAILER_ROWS, ["expected_return", "volatility", "sharpe"]):
            out.append([label, "", "", ""] + [
                getattr(self.stats[s], attr) for s in ("vvv", "mvo", "no_short")
            ])
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows():
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def weights_report(history, window_days=90, vvv_window_days=90,
                   benchmark_rate=DEFAULT_BENCHMARK_RATE):
    """VVV, MVO and no-short MVO weights side by side, with portfolio stats.

    Expected returns and covariance use the full sample; volatility and
    vvvFactor are the trailing values at the last date.
    """
    returns = log_returns(history)
    vols = rolling_volatility(returns, window_days)
    profile = vvv_profile(vols, vvv_window_days)
    mu = expected_returns(returns)
    cov = covariance_matrix(returns)
    schemes = {
        "vvv": vvv_weights(profile),
        "mvo": mvo_weights(mu, cov, benchmark_rate),
        "no_short": mvo_no_short_weights(mu, cov, benchmark_rate).weights,
    }
    stats = {k: portfolio_stats(w, mu, cov, benchmark_rate) for k, w in schemes.items()}
    for w in schemes.values():
        check_weights(w)
    return WeightsReport(profile, schemes["vvv"], schemes["mvo"], schemes["no_short"], stats)
