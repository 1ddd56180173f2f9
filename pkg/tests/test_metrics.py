import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parityfund.exceptions import AlignmentError, ValidationError
from parityfund.metrics import (
    REPORT_HEADER,
    cri,
    interval_stats,
    max_drawdown,
    performance_report,
    report_to_csv,
)


def test_single_asset_is_one():
    assert cri([1.0], [5e9], [0.8], sigma_ref=0.8).portfolio_cri == 1.0


@pytest.mark.parametrize("n", [2, 5, 10])
def test_equal_split_divides_by_n(n):
    w = np.full(n, 1 / n)
    spread = cri(w, np.full(n, 1e9), np.full(n, 0.6)).portfolio_cri
    assert spread == pytest.approx(1.0, rel=1e-12)
    single = cri([1.0], [1e9], [0.6], universe_market_cap=n * 1e9, sigma_ref=0.6).portfolio_cri
    assert single == pytest.approx(n, rel=1e-12)
    assert single / spread == pytest.approx(n)


def test_lower_vol_preferred():
    a = cri([1.0], [1e9], [0.4], universe_market_cap=2e9, sigma_ref=0.5).portfolio_cri
    b = cri([1.0], [1e9], [0.9], universe_market_cap=2e9, sigma_ref=0.5).portfolio_cri
    assert a < b


def _random_portfolio(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n))
    mcap = np.exp(rng.uniform(15, 25, n))
    vol = rng.uniform(0.2, 1.5, n)
    return rng, w, mcap, vol


@given(st.integers(0, 10**6), st.integers(1, 8), st.floats(1.01, 3.0))
def test_monotone_in_volatility_and_market_share(seed, n, bump):
    rng, w, mcap, vol = _random_portfolio(seed, n)
    universe = mcap.sum() * 10
    base = cri(w, mcap, vol, universe_market_cap=universe, sigma_ref=0.7).portfolio_cri
    i = int(rng.integers(n))
    v2 = vol.copy()
    v2[i] *= bump
    assert cri(w, mcap, v2, universe_market_cap=universe, sigma_ref=0.7).portfolio_cri >= base
    m2 = mcap.copy()
    m2[i] *= bump
    assert cri(w, m2, vol, universe_market_cap=universe, sigma_ref=0.7).portfolio_cri <= base


@given(st.integers(0, 10**6), st.integers(2, 8), st.floats(0.01, 1.0))
def test_concentrating_weight_never_lowers_cri(seed, n, t):
    _, w, _, _ = _random_portfolio(seed, n)
    mcap = np.full(n, 1e9)
    vol = np.full(n, 0.5)
    target = np.zeros(n)
    target[int(np.argmax(w))] = 1.0
    moved = (1 - t) * w + t * target
    assert cri(moved, mcap, vol).portfolio_cri >= cri(w, mcap, vol).portfolio_cri - 1e-12


@given(st.integers(0, 10**6), st.integers(1, 8), st.floats(1e-3, 1e3))
def test_market_cap_scale_invariance(seed, n, c):
    _, w, mcap, vol = _random_portfolio(seed, n)
    a = cri(w, mcap, vol).portfolio_cri
    b = cri(w, mcap * c, vol).portfolio_cri
    assert b == pytest.approx(a, rel=1e-10)


@given(st.integers(0, 10**6), st.integers(1, 8))
def test_neutral_modifiers_reduce_to_hh_index(seed, n):
    _, w, _, _ = _random_portfolio(seed, n)
    r = cri(w, np.full(n, 1.0), np.full(n, 0.3))
    assert r.portfolio_cri == pytest.approx(n * float(np.sum(w ** 2)), rel=1e-12)
    naive = sum(wi * wi * 1.0 / (1.0 / n) for wi in w)
    assert r.portfolio_cri == pytest.approx(naive, rel=1e-12)
    assert r.market_shares.sum() == pytest.approx(1.0)


def test_chain_fractions():
    base = cri([0.5, 0.5], [1e9, 1e9], [0.5, 0.5])
    one_chain = cri([0.5, 0.5], [1e9, 1e9], [0.5, 0.5], chain_fractions=[[1, 0], [0, 1]])
    split = cri([0.5, 0.5], [1e9, 1e9], [0.5, 0.5], chain_fractions=[[0.5, 0.5], [0.5, 0.5]])
    assert one_chain.portfolio_cri == base.portfolio_cri
    assert split.portfolio_cri == pytest.approx(base.portfolio_cri / 2)
    with pytest.raises(ValidationError):
        cri([1.0], [1e9], [0.5], chain_fractions=[[0.7, 0.7]])


def test_cri_errors_and_json():
    with pytest.raises(ValidationError, match="BTC"):
        cri([0.5, 0.5], [0.0, 1.0], [0.5, 0.5], assets=["BTC", "ETH"])
    with pytest.raises(ValidationError):
        cri([1.0], [10.0], [0.5], universe_market_cap=1.0)
    d = json.loads(cri([0.6, 0.4], [3e9, 1e9], [0.5, 0.9], assets=["A", "B"]).to_json())
    assert d["portfolio_cri"] == pytest.approx(sum(a["contribution"] for a in d["assets"]))


def _naive_interval(nav, days, b=0.10):
    tail = nav[-(days + 1):]
    rets = [math.log(tail[i + 1] / tail[i]) for i in range(len(tail) - 1)]
    mean = sum(rets) / len(rets)
    var = sum((r - mean) ** 2 for r in rets) / (len(rets) - 1)
    vol = math.sqrt(var * 365)
    return tail[-1] / tail[0] - 1, vol, (mean * 365 - b) / vol


def test_report_matches_naive_recompute(synthetic_history):
    navs = {a: synthetic_history.close[:, j] for j, a in enumerate(synthetic_history.assets[:3])}
    rows = performance_report(navs)
    assert {r.interval_days for r in rows} == {7, 30, 90, 365}
    for r in rows:
        total, vol, sharpe = _naive_interval(list(navs[r.entity]), r.interval_days)
        assert r.total_return == pytest.approx(total, rel=1e-10)
        assert r.volatility == pytest.approx(vol, rel=1e-10)
        assert r.sharpe == pytest.approx(sharpe, rel=1e-9)


def test_fund_vs_itself_and_constant_nav():
    nav = np.linspace(1.0, 1.3, 40)
    rows = performance_report({"a": nav, "b": nav.copy()}, intervals=(7, 30))
    a = [r.as_list()[1:5] for r in rows if r.entity == "a"]
    b = [r.as_list()[1:5] for r in rows if r.entity == "b"]
    assert a == b
    total, vol, sharpe = interval_stats(np.full(10, 2.0), 7)
    assert total == 0.0 and vol == 0.0 and math.isnan(sharpe)


def test_alignment_errors():
    with pytest.raises(AlignmentError):
        performance_report({"a": np.ones(10), "b": np.ones(11)})
    with pytest.raises(AlignmentError):
        performance_report({"a": np.ones(3), "b": np.ones(3)},
                           dates={"a": [1, 2, 3], "b": [1, 2, 4]})


def test_csv_and_drawdown():
    rows = performance_report({"f": np.linspace(1, 2, 20)}, intervals=(7,), cri_by_entity={"f": 1.5})
    lines = report_to_csv(rows).splitlines()
    assert lines[0].split(",") == REPORT_HEADER
    assert lines[1].startswith("f,7,") and lines[1].endswith(",1.5")
    assert max_drawdown([1.0, 2.0, 1.0, 3.0]) == 0.5
