import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from parityfund.marketdata import PriceHistory
from parityfund.synthetic import generate_history

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def make_history(close, start=dt.date(2021, 1, 1), assets=None, mcap=None):
    close = np.asarray(close, dtype=float)
    if close.ndim == 1:
        close = close[:, None]
    n, k = close.shape
    assets = tuple(assets or [f"A{j}" for j in range(k)])
    dates = tuple(start + dt.timedelta(days=i) for i in range(n))
    mcap = np.full_like(close, 1e9) if mcap is None else np.asarray(mcap, dtype=float)
    return PriceHistory(assets, dates, close, mcap)


def random_spd(rng, n, scale=0.3):
    a = rng.standard_normal((n, n))
    vols = rng.uniform(0.2, 1.2, n)
    corr = a @ a.T + n * 0.2 * np.eye(n)
    d = np.sqrt(np.diag(corr))
    corr = corr / np.outer(d, d)
    return corr * np.outer(vols, vols)


@pytest.fixture(scope="session")
def synthetic_history():
    return generate_history(n_assets=6, n_days=400, seed=3)


def write_csv(path, rows, header="date,asset,close_usd,market_cap_usd"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path
