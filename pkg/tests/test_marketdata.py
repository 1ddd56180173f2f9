import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parityfund.exceptions import (
    DataError,
    DegenerateAssetError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)
from parityfund.marketdata import (
    RollingVolatility,
    correlation_matrix,
    covariance_matrix,
    load_price_history,
    log_returns,
    rolling_volatility,
    write_price_csv,
)

from conftest import make_history, write_csv


def test_well_formed_file(tmp_path):
    rows = [f"2021-01-0{d},{a},{p},1000" for d in (1, 2, 3) for a, p in (("BTC", 10), ("ETH", 5))]
    h = load_price_history(write_csv(tmp_path / "p.csv", rows))
    assert h.assets == ("BTC", "ETH")
    assert h.n_dates == 3 and h.n_assets == 2
    assert h.report.filled == [] and h.report.rejected == []


def test_zero_price_names_the_row(tmp_path):
    rows = ["2021-01-01,BTC,10,1000", "2021-01-02,BTC,0,1000"]
    with pytest.raises(ValidationError, match="line 3"):
        load_price_history(write_csv(tmp_path / "p.csv", rows))


def test_missing_middle_date_is_forward_filled(tmp_path):
    rows = ["2021-01-01,BTC,10,1000", "2021-01-03,BTC,12,1200",
            "2021-01-01,ETH,1,50", "2021-01-02,ETH,2,60", "2021-01-03,ETH,3,70"]
    h = load_price_history(write_csv(tmp_path / "p.csv", rows))
    assert h.close[1, 0] == 10.0
    assert h.report.filled == [{"date": "2021-01-02", "asset": "BTC"}]


def test_gap_beyond_tolerance_is_a_data_error(tmp_path):
    rows = ["2021-01-01,BTC,10,1000", "2021-01-06,BTC,11,1000"]
    with pytest.raises(DataError, match="consecutive"):
        load_price_history(write_csv(tmp_path / "p.csv", rows), max_gap_days=3)


def test_malformed_rows_report_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_price_history(write_csv(tmp_path / "p.csv", ["2021-01-01,BTC,ten,1000"]))
    assert exc.value.line == 2
    with pytest.raises(ParseError) as exc:
        load_price_history(write_csv(tmp_path / "q.csv", ["x"], header="date,close"))
    assert exc.value.line == 1


def test_duplicates(tmp_path):
    same = ["2021-01-01,BTC,10,1000", "2021-01-01,BTC,10,1000", "2021-01-02,BTC,11,1000"]
    h = load_price_history(write_csv(tmp_path / "p.csv", same))
    assert len(h.report.rejected) == 1
    clash = ["2021-01-01,BTC,10,1000", "2021-01-01,BTC,12,1000"]
    with pytest.raises(ParseError, match="conflicting"):
        load_price_history(write_csv(tmp_path / "q.csv", clash))


def test_date_range_and_roundtrip(tmp_path, synthetic_history):
    path = tmp_path / "s.csv"
    write_price_csv(synthetic_history, path)
    h = load_price_history(path)
    np.testing.assert_allclose(h.close, synthetic_history.close, rtol=1e-12)
    d0, d1 = synthetic_history.dates[10], synthetic_history.dates[20]
    cut = load_price_history(path, (d0, d1))
    assert cut.dates[0] == d0 and cut.dates[-1] == d1 and cut.n_dates == 11


def test_log_returns_examples():
    assert log_returns(make_history([100, 100])).values[:, 0].tolist() == [0.0]
    r = log_returns(make_history([100, 110])).values[0, 0]
    assert r == pytest.approx(0.0953101798, abs=1e-9)
    assert len(log_returns(make_history(np.linspace(1, 2, 366)))) == 365
    with pytest.raises(InsufficientDataError):
        log_returns(make_history([100]))


def _returns_history(r):
    """Price path whose log returns are exactly ``r``."""
    return make_history(np.exp(np.concatenate([[0.0], np.cumsum(r)])) * 100)


def test_constant_returns_have_zero_vol():
    vol = rolling_volatility(log_returns(_returns_history(np.full(100, 0.01))), 30)
    np.testing.assert_allclose(vol.values, 0.0, atol=1e-12)


@pytest.mark.parametrize("window", [4, 30, 90])
def test_alternating_returns_closed_form(window):
    r = 0.02
    seq = np.array([r, -r] * 60)
    vol = rolling_volatility(log_returns(_returns_history(seq)), window)
    if window % 2 == 0:
        expected = r * math.sqrt(window / (window - 1)) * math.sqrt(365)
        np.testing.assert_allclose(vol.values, expected, rtol=1e-9)


def test_monte_carlo_vol_reference():
    rng = np.random.default_rng(7)
    r = rng.normal(0.0, 0.04, 5000)
    vol = rolling_volatility(log_returns(_returns_history(r)), 5000)
    # daily 0.04 * sqrt(365) = 0.7642; sampling error of std over 5000 draws is ~1%
    assert vol.values[-1, 0] == pytest.approx(0.04 * math.sqrt(365), rel=0.03)


def test_volatility_definition_matches_naive_loop(synthetic_history):
    rets = log_returns(synthetic_history)
    vol = rolling_volatility(rets, 30)
    assert len(vol) == len(rets) - 29
    for t in (0, 17, len(vol) - 1):
        window = rets.values[t:t + 30]
        naive = [math.sqrt(sum((x - sum(col) / 30) ** 2 for x in col) / 29 * 365)
                 for col in window.T]
        np.testing.assert_allclose(vol.values[t], naive, rtol=1e-10)


def test_window_longer_than_series():
    with pytest.raises(InsufficientDataError):
        rolling_volatility(log_returns(make_history(np.linspace(1, 2, 10))), 90)


def test_correlation_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50)
    h = make_history(np.exp(np.cumsum(np.stack([x, x, -x], axis=1), axis=0)))
    c = correlation_matrix(log_returns(h))
    np.testing.assert_allclose(np.diag(c), 1.0)
    assert c[0, 1] == pytest.approx(1.0)
    assert c[0, 2] == pytest.approx(-1.0)


def test_zero_variance_asset_named():
    h = make_history(np.stack([np.linspace(1, 2, 20), np.full(20, 5.0)], axis=1),
                     assets=["BTC", "USDC"])
    with pytest.raises(DegenerateAssetError) as exc:
        correlation_matrix(log_returns(h))
    assert exc.value.asset == "USDC"


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_correlation_invariant_to_price_rescaling(seed, scale):
    rng = np.random.default_rng(seed)
    close = np.exp(np.cumsum(rng.normal(0, 0.03, (40, 3)), axis=0))
    base = correlation_matrix(log_returns(make_history(close)))
    close[:, 1] *= scale
    scaled = correlation_matrix(log_returns(make_history(close)))
    np.testing.assert_allclose(base, scaled, atol=1e-12)
    assert np.all(np.abs(base) <= 1 + 1e-12)
    np.testing.assert_allclose(base, base.T, atol=1e-12)


def test_covariance_is_psd(synthetic_history):
    cov = covariance_matrix(log_returns(synthetic_history))
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > -1e-12


def test_rolling_volatility_transformer(synthetic_history):
    rets = log_returns(synthetic_history).values
    tr = RollingVolatility(window_days=20).fit(rets)
    out = tr.transform(rets)
    assert out.shape == (rets.shape[0] - 19, rets.shape[1])
    assert tr.get_params() == {"window_days": 20}


def test_price_history_slice_and_select(synthetic_history):
    h = synthetic_history
    s = h.slice(h.dates[5], h.dates[9]).select([h.assets[2], h.assets[0]])
    assert s.n_dates == 5
    assert s.assets == (h.assets[2], h.assets[0])
    np.testing.assert_array_equal(s.close[:, 0], h.close[5:10, 2])
    with pytest.raises(ValidationError):
        make_history([[1.0, -1.0]])
    assert dt.date(2021, 1, 1) in make_history([1.0, 2.0]).dates
