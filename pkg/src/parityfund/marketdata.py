"""Daily price ingestion and the return statistics derived from it.

All statistics are annualized with 365 periods per year since crypto assets
trade every calendar day. Standard deviations use the sample (n - 1) estimator.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import ANNUALIZATION
from .exceptions import (
    DataError,
    DegenerateAssetError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)

CSV_HEADER = ["date", "asset", "close_usd", "market_cap_usd"]


@dataclass
class IngestReport:
    filled: list = field(default_factory=list)
    rejected: list = field(default_factory=list)

    def to_dict(self):
        return {"filled": list(self.filled), "rejected": list(self.rejected)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class PriceHistory:
    """Daily close prices and market caps, one column per asset.

    ``close`` and ``market_cap`` have shape ``(n_dates, n_assets)``; columns
    follow ``assets`` which is sorted by symbol.
    """

    assets: tuple
    dates: tuple
    close: np.ndarray
    market_cap: np.ndarray
    report: IngestReport = field(default_factory=IngestReport, compare=False)

    def __post_init__(self):
        close = np.array(self.close, dtype=float)
        mcap = np.array(self.market_cap, dtype=float)
        n, k = len(self.dates), len(self.assets)
        if close.shape != (n, k) or mcap.shape != (n, k):
            raise ValidationError(
                f"price matrices must have shape ({n}, {k}), got "
                f"{close.shape} and {mcap.shape}"
            )
        if len(set(self.assets)) != k or any(not a for a in self.assets):
            raise ValidationError("asset symbols must be non-empty and unique")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("dates must be strictly increasing")
        if not np.all(np.isfinite(close)) or np.any(close <= 0):
            raise ValidationError("all close prices must be positive")
        if not np.all(np.isfinite(mcap)) or np.any(mcap <= 0):
            raise ValidationError("all market caps must be positive")
        close.flags.writeable = False
        mcap.flags.writeable = False
        object.__setattr__(self, "close", close)
        object.__setattr__(self, "market_cap", mcap)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def n_dates(self):
        return len(self.dates)

    @property
    def n_assets(self):
        return len(self.assets)

    def slice(self, start=None, end=None):
        """Return the sub-history with ``start <= date <= end``."""
        idx = [
            i
            for i, d in enumerate(self.dates)
            if (start is None or d >= start) and (end is None or d <= end)
        ]
        if not idx:
            raise InsufficientDataError(f"no dates between {start} and {end}")
        sl = slice(idx[0], idx[-1] + 1)
        return PriceHistory(
            self.assets, self.dates[sl], self.close[sl], self.market_cap[sl]
        )

    def select(self, assets):
        cols = [self.assets.index(a) for a in assets]
        return PriceHistory(
            tuple(assets), self.dates, self.close[:, cols], self.market_cap[:, cols]
        )


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log returns; ``dates[t]`` is the date the return is realised."""

    assets: tuple
    dates: tuple
    values: np.ndarray

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class VolatilitySeries:
    """Trailing-window annualized volatility; row ``t`` ends at ``dates[t]``."""

    assets: tuple
    dates: tuple
    values: np.ndarray
    window_days: int = 90
    annualization_factor: int = ANNUALIZATION

    def __len__(self):
        return len(self.dates)


def _parse_float(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r}", line) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite {what} {text!r}", line)
    return value


def load_price_history(path, date_range=None, max_gap_days=3):
    """Load a long-format price CSV into a :class:`PriceHistory`.

    Parameters
    ----------
    path : str or Path
        CSV with header ``date,asset,close_usd,market_cap_usd``.
    date_range : tuple of (date or None, date or None), optional
        Inclusive bounds; rows outside are ignored.
    max_gap_days : int
        Longest run of consecutive missing days per asset that is
        forward-filled. Longer gaps raise :class:`DataError`.

    Returns
    -------
    PriceHistory
        With ``report`` listing forward-filled and ignored duplicate cells.
    """
    start, end = date_range if date_range is not None else (None, None)
    report = IngestReport()
    cells = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)}", 1)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line)
            date_s, asset, close_s, mcap_s = (c.strip() for c in row)
            try:
                day = dt.date.fromisoformat(date_s)
            except ValueError:
                raise ParseError(f"bad date {date_s!r} (want YYYY-MM-DD)", line) from None
            if not asset:
                raise ParseError("empty asset symbol", line)
            close = _parse_float(close_s, "close_usd", line)
            mcap = _parse_float(mcap_s, "market_cap_usd", line)
            if close <= 0:
                raise ValidationError(f"line {line}: non-positive close_usd {close_s} for {asset}")
            if mcap <= 0:
                raise ValidationError(
                    f"line {line}: non-positive market_cap_usd {mcap_s} for {asset}"
                )
            if (start is not None and day < start) or (end is not None and day > end):
                continue
            key = (day, asset)
            if key in cells:
                if cells[key] != (close, mcap):
                    raise ParseError(f"conflicting duplicate row for {asset} on {day}", line)
                report.rejected.append(
                    {"line": line, "date": day.isoformat(), "asset": asset, "reason": "duplicate"}
                )
                continue
            cells[key] = (close, mcap)

    if not cells:
        raise InsufficientDataError(f"no rows in {path} within {start}..{end}")
    assets = sorted({a for _, a in cells})
    first = min(d for d, _ in cells)
    last = max(d for d, _ in cells)
    n_days = (last - first).days + 1
    dates = [first + dt.timedelta(days=i) for i in range(n_days)]
    close = np.empty((n_days, len(assets)))
    mcap = np.empty((n_days, len(assets)))
    for j, asset in enumerate(assets):
        gap = 0
        for i, day in enumerate(dates):
            cell = cells.get((day, asset))
            if cell is not None:
                close[i, j], mcap[i, j] = cell
                gap = 0
                continue
            if i == 0:
                raise DataError(f"{asset} has no price on first date {day}; cannot forward-fill")
            gap += 1
            if gap > max_gap_days:
                raise DataError(
                    f"{asset} missing more than {max_gap_days} consecutive days ending {day}"
                )
            close[i, j] = close[i - 1, j]
            mcap[i, j] = mcap[i - 1, j]
            report.filled.append({"date": day.isoformat(), "asset": asset})
    return PriceHistory(tuple(assets), tuple(dates), close, mcap, report)


def write_price_csv(history, path):
    """Write ``history`` in the long CSV format read by :func:`load_price_history`."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, day in enumerate(history.dates):
            for j, asset in enumerate(history.assets):
                writer.writerow(
                    [day.isoformat(), asset, repr(float(history.close[i, j])),
                     repr(float(history.market_cap[i, j]))]
                )
    return path


def log_returns(history):
    """Daily log returns ``ln(close[t+1] / close[t])``."""
    if history.n_dates < 2:
        raise InsufficientDataError("need at least 2 dates to compute returns")
    values = np.diff(np.log(history.close), axis=0)
    return ReturnSeries(history.assets, history.dates[1:], values)


def _rolling_std(values, window):
    windows = sliding_window_view(values, window, axis=0)
    return windows.std(axis=-1, ddof=1)


def rolling_volatility(returns, window_days=90):
    """Annualized sample volatility over each trailing ``window_days`` block."""
    if window_days < 2:
        raise ValidationError("window_days must be at least 2")
    if len(returns) < window_days:
        raise InsufficientDataError(
            f"need {window_days} returns for the volatility window, have {len(returns)}"
        )
    vol = _rolling_std(returns.values, window_days) * np.sqrt(ANNUALIZATION)
    return VolatilitySeries(
        returns.assets, returns.dates[window_days - 1:], vol, window_days, ANNUALIZATION
    )


def _check_sample(returns):
    values = np.asarray(returns.values, dtype=float)
    if values.shape[0] < 2:
        raise InsufficientDataError("need at least 2 return rows")
    return values


def covariance_matrix(returns):
    """Annualized sample covariance of daily log returns."""
    values = _check_sample(returns)
    cov = np.cov(values, rowvar=False, ddof=1).reshape(values.shape[1], values.shape[1])
    cov = (cov + cov.T) / 2.0
    return cov * ANNUALIZATION


def correlation_matrix(returns):
    """Pearson correlation of daily log returns over the full sample."""
    values = _check_sample(returns)
    std = values.std(axis=0, ddof=1)
    for asset, s in zip(returns.assets, std):
        if not s > 0:
            raise DegenerateAssetError(f"asset {asset} has zero return variance", asset)
    cov = np.cov(values, rowvar=False, ddof=1).reshape(len(std), len(std))
    corr = cov / np.outer(std, std)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


class RollingVolatility(TransformerMixin, BaseEstimator):
    """Transformer mapping a daily log-return matrix to rolling annualized vol.

    The output has ``n_samples - window_days + 1`` rows, one per full window.
    Stateless: ``fit`` only validates input.

    Examples
    --------
    >>> import numpy as np
    >>> RollingVolatility(window_days=3).fit_transform(np.zeros((4, 2))).shape
    (2, 2)
    """

    def __init__(self, window_days=90):
        self.window_days = window_days

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        if X.shape[0] < self.window_days:
            raise InsufficientDataError(
                f"need {self.window_days} rows, have {X.shape[0]}"
            )
        return _rolling_std(X, self.window_days) * np.sqrt(ANNUALIZATION)
