"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``.
"""
import contextlib
import datetime as dt
import hashlib
import json
import math
import time
from decimal import Decimal

import numpy as np
import pytest

from parityfund.backtest import BacktestConfig, replay_nav, run_backtest
from parityfund.feeshare import RewardPot, trickle_payout
from parityfund.metrics import cri
from parityfund.multichain import NetworkPortfolio, aggregate_global, transfer_units
from parityfund.rebalancer import AssetCapacity, TradeBounds, _waterfall
from parityfund.safehouse import LOCKED, OPEN, HashChainSigner, SafeHouse
from parityfund.synthetic import generate_history
from parityfund.weights import (
    erc_weights,
    mvo_no_short_weights,
    mvo_weights,
    portfolio_stats,
    risk_contributions,
    sharpe_ratio,
    vvv_weights,
    weights_report,
)

from conftest import make_history, random_spd
from oracles import grid_max_sharpe, waterfall_loop


@pytest.fixture
def criterion(capsys):
    """Context manager that prints ``PASS/FAIL criterion N: title`` on exit."""

    @contextlib.contextmanager
    def run(number, title):
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            with capsys.disabled():
                print(f"\n{status} criterion {number}: {title}")

    return run


FREE = {"gas_fee_usd": 0.0, "pool_depth_usd": 1e12, "max_gas_fraction": 0.01,
        "max_slippage": 0.5}


def test_criterion_01_high_water_mark(criterion):
    with criterion(1, "high-water-mark fee example"):
        start = time.perf_counter()
        history = make_history([1.0, 1.4, 1.2, 1.3], assets=("BTC",))
        cfg = BacktestConfig(funds=[{"name": "f", "scheme": "equal"}], warmup_days=0,
                             initial_deposit_usd=10_000, cost=FREE)
        fund = run_backtest(cfg, history).funds["f"]
        fees = [e for e in fund.events if e["type"] == "fee"]
        assert len(fees) == 1
        assert fees[0]["day"] == history.dates[1]
        assert fees[0]["amount_cents"] == 80_000  # 20% of 4,000.00 profit
        navs = [row["nav_cents"] for row in fund.nav]
        assert navs[1] == 1_400_000 - 80_000
        assert all(row["fee_cents"] == 0 for row in fund.nav[2:])
        assert all(row["unit_price"] < 1.4 for row in fund.nav[2:])
        assert time.perf_counter() - start < 1.0


def test_criterion_02_trickle(criterion):
    with criterion(2, "trickle payout example"):
        start = time.perf_counter()
        pot = RewardPot(10_000_000, 0.5)
        first, pot = trickle_payout(pot)
        second, pot = trickle_payout(pot)
        assert (first, second) == (5_000_000, 2_500_000)
        pot = RewardPot(10_000_000, 0.5)
        for k in range(1, 61):
            _, pot = trickle_payout(pot)
            exact = Decimal(10_000_000) * Decimal("0.5") ** k
            assert pot.balance_cents == int(exact.to_integral_value(rounding="ROUND_HALF_EVEN"))
        assert time.perf_counter() - start < 1.0


def test_criterion_03_sharpe(criterion):
    with criterion(3, "Sharpe formula"):
        assert portfolio_stats([1.0], [0.20], [[0.05 ** 2]], 0.10).sharpe == 2.0
        assert sharpe_ratio(0.20, 0.05, 0.10) == 2.0
        rng = np.random.default_rng(3)
        for _ in range(2000):
            n = int(rng.integers(1, 7))
            w = rng.dirichlet(np.ones(n))
            mu = rng.uniform(-0.5, 1.5, n)
            cov = random_spd(rng, n)
            b = float(rng.uniform(0, 0.2))
            s = portfolio_stats(w, mu, cov, b)
            expected = (w @ mu - b) / math.sqrt(w @ cov @ w)
            assert abs(s.sharpe - expected) <= 1e-12 * max(1.0, abs(expected))


def test_criterion_04_optimizer_oracles(criterion):
    with criterion(4, "MVO oracle equivalence"):
        start = time.perf_counter()
        rng = np.random.default_rng(4)
        worst = 0.0
        for i in range(100):
            n = (2, 3, 4)[i % 3]
            cov = random_spd(rng, n)
            mu = rng.uniform(-0.1, 0.7, n)
            mu[int(rng.integers(n))] = rng.uniform(0.15, 0.8)  # at least one mu > b
            res = mvo_no_short_weights(mu, cov, 0.1)
            best, _ = grid_max_sharpe(mu, cov, 0.1, step=0.001)
            worst = max(worst, best - res.sharpe)
            assert res.sharpe >= best - 1e-4

            closed = np.linalg.inv(cov) @ (mu - 0.1)
            closed = closed / closed.sum()
            np.testing.assert_allclose(mvo_weights(mu, cov, 0.1), closed, rtol=0, atol=1e-9)
        assert time.perf_counter() - start < 60.0


def test_criterion_05_erc(criterion):
    with criterion(5, "ERC equal risk contributions"):
        rng = np.random.default_rng(5)
        for i in range(100):
            n = int(rng.integers(1, 9))
            cov = random_spd(rng, n)
            w = erc_weights(cov)
            assert np.all(w > 0) and abs(w.sum() - 1) < 1e-12
            assert np.max(np.abs(risk_contributions(w, cov) - 1 / n)) <= 1e-8


def test_criterion_06_waterfall(criterion):
    with criterion(6, "waterfall conservation and oracle"):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            assets = [chr(65 + i) for i in range(n)]
            need = {a: int(rng.integers(0, 500_000)) for a in assets}
            mx = {a: int(rng.integers(1, 200_000)) for a in assets}
            mn = {a: int(rng.integers(0, mx[a] + 1)) if rng.random() < 0.5 else 0
                  for a in assets}
            flow = int(rng.integers(0, 2_000_000))
            sign = 1 if rng.random() < 0.5 else -1
            current = {a: int(rng.integers(0, 1_000_000)) for a in assets}
            # a buy fills headroom, a sell drains excess; both have `need` to go
            caps = [AssetCapacity(a, current[a] + sign * need[a], current[a]) for a in assets]
            bounds = {a: TradeBounds(a, mn[a], mx[a]) for a in assets}
            plan = _waterfall(caps, bounds, set(assets), sign * flow)
            expected = waterfall_loop(need, mx, mn, flow)
            assert [(o.asset, o.notional_cents) for o in plan.orders] == expected
            assert plan.bought_cents - plan.sold_cents == sign * (flow - plan.unallocated_cents)
            for o in plan.orders:
                assert isinstance(o.notional_cents, int)
                assert mn[o.asset] <= o.notional_cents <= mx[o.asset]


def test_criterion_07_vvv_report(criterion):
    with criterion(7, "VVV report structure"):
        for seed in range(5):
            history = generate_history(8, 400, seed=seed)
            report = weights_report(history, 90, 90)
            lines = report.to_csv().splitlines()
            assert lines[0] == ("asset,volatility,vvv_factor,vvv_adj_volatility,vvv_weight,"
                                "mvo_weight,no_short_weight")
            assert [ln.split(",")[0] for ln in lines[-3:]] == [
                "portfolio_expected_return", "portfolio_volatility", "sharpe_ratio"]
            assert len(lines) == 1 + 8 + 3
            p = report.profile
            assert np.array_equal(p.adjusted_volatility, p.volatility + p.vvv_factor)
            order = np.argsort(p.adjusted_volatility, kind="stable")
            assert np.all(np.diff(report.vvv[order]) <= 0)
        rng = np.random.default_rng(7)
        for _ in range(500):
            adj = rng.uniform(0.05, 3.0, int(rng.integers(2, 12)))
            w = vvv_weights(adj)
            order = np.argsort(adj)
            assert np.all(np.diff(w[order]) <= 0)


def test_criterion_08_cri(criterion):
    with criterion(8, "CRI properties"):
        assert cri([1.0], [3e9], [0.7], sigma_ref=0.7).portfolio_cri == 1.0
        for n in range(2, 11):
            single = cri([1.0], [1e9], [0.5], universe_market_cap=n * 1e9, sigma_ref=0.5)
            split = cri(np.full(n, 1 / n), np.full(n, 1e9), np.full(n, 0.5), sigma_ref=0.5)
            assert math.isclose(single.portfolio_cri / split.portfolio_cri, n, rel_tol=1e-12)
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            w = rng.dirichlet(np.ones(n))
            mcap = np.exp(rng.uniform(15, 25, n))
            vol = rng.uniform(0.2, 1.5, n)
            kw = dict(universe_market_cap=mcap.sum() * 5, sigma_ref=0.8)
            base = cri(w, mcap, vol, **kw).portfolio_cri
            i = int(rng.integers(n))
            bump = float(rng.uniform(1.01, 2.0))
            v2, m2 = vol.copy(), mcap.copy()
            v2[i] *= bump
            m2[i] *= bump
            assert cri(w, mcap, v2, **kw).portfolio_cri >= base
            assert cri(w, m2, vol, **kw).portfolio_cri <= base


def _adversarial_sequence(rng, seq_id):
    per_tx, daily = 100.0, 250.0
    house = SafeHouse(per_tx, daily)
    ops = ["a", "b", "c"]
    signers = {}
    for op in ops:
        seed = hashlib.sha256(f"{seq_id}:{op}".encode()).digest()
        signers[op] = HashChainSigner(op, seed, 40)
        house.add_operator(signers[op].chain())
    day = dt.datetime(2024, 1, 1, tzinfo=dt.timezone.utc)
    spent = {}
    stale = []
    for _ in range(int(rng.integers(5, 25))):
        kind = rng.random()
        op = ops[int(rng.integers(3))]
        amount = float(rng.choice([0.0, 1.0, 99.99, 100.0, 100.01, 150.0, 249.0,
                                   float(rng.uniform(-10, 300))]))
        was_locked = house.status == LOCKED
        if kind < 0.45 and signers[op].remaining:
            reveal = signers[op].peek()
        elif kind < 0.6 and stale:
            reveal = stale[int(rng.integers(len(stale)))]
        elif kind < 0.7:
            reveal = bytes(rng.integers(0, 256, 32, dtype=np.uint8))
        elif kind < 0.75:
            d = house.request_withdrawal("mallory", amount, bytes(32), at=day)
            assert not d.accepted and house.status == LOCKED
            continue
        elif kind < 0.85:
            if house.status == LOCKED:
                picks = [ops[j] for j in rng.integers(0, 3, int(rng.integers(1, 4)))]
                approvals = [(p, signers[p].peek()) for p in picks if signers[p].remaining]
                d = house.unlock(approvals, required=2, at=day)
                for p, r in approvals:
                    # a successful check consumed the link; keep the signer in step
                    if house.operators[p].anchor == r and signers[p].remaining and \
                            signers[p].peek() == r:
                        stale.append(signers[p].next_reveal())
                assert d.accepted == (house.status == OPEN)
                if d.accepted:
                    assert len({p for p, _ in approvals}) >= 2
            continue
        else:
            day += dt.timedelta(days=1)
            continue
        d = house.request_withdrawal(op, amount, reveal, at=day)
        if d.accepted:
            assert not was_locked
            assert 0 < amount <= per_tx
            spent[day.date()] = spent.get(day.date(), 0) + round(amount * 100)
            assert spent[day.date()] <= daily * 100
            stale.append(signers[op].next_reveal())
        elif d.reason == "invalid reveal":
            assert house.status == LOCKED
        if was_locked:
            assert not d.accepted and house.status == LOCKED
    v = house.verify()
    assert v.ok and v.n_events == len(house.audit_log)
    accepted = [e for e in house.audit_log if e.action == "withdraw"]
    for e in accepted:
        assert e.amount_usd <= per_tx
    return len(accepted)


def test_criterion_09_safehouse(criterion):
    with criterion(9, "safe house adversarial sequences"):
        rng = np.random.default_rng(9)
        accepted = sum(_adversarial_sequence(rng, i) for i in range(10_000))
        assert accepted > 0


PRICES = {"BTC": 43_210.987654, "ETH": 2_345.6789, "SOL": 98.7654321, "USDC": 1.0}


def test_criterion_10_multichain(criterion):
    with criterion(10, "multichain price identity"):
        rng = np.random.default_rng(10)
        for _ in range(500):
            k = int(rng.integers(2, 6))
            nets = tuple(
                NetworkPortfolio(f"N{j}",
                                 {a: Decimal(str(round(float(rng.uniform(0, 1e3)), 8)))
                                  for a in PRICES},
                                 Decimal(str(round(float(rng.uniform(1, 1e6)), 6))))
                for j in range(k))
            before = aggregate_global(nets, PRICES)
            for _ in range(int(rng.integers(1, 20))):
                s, d = (int(x) for x in rng.choice(k, 2, replace=False))
                asset = list(PRICES)[int(rng.integers(len(PRICES)))]
                held = nets[s].holdings[asset]
                units = (held * Decimal(str(round(float(rng.uniform(0, 1)), 6)))).quantize(
                    Decimal("1e-10"), rounding="ROUND_DOWN")
                nets = transfer_units(nets, f"N{s}", f"N{d}", asset, units)
            after = aggregate_global(nets, PRICES)
            assert after.unit_price_cents == before.unit_price_cents
            assert after.tvl_usd == before.tvl_usd


def test_criterion_11_backtest_replay(criterion):
    with criterion(11, "backtest determinism, replay and runtime"):
        cfg = BacktestConfig(
            synthetic={"n_assets": 10, "n_days": 546, "seed": 11},
            funds=[{"name": "Parity", "scheme": "vvv"}],
            cost={"gas_fee_usd": 3.0, "pool_depth_usd": 5e6, "max_gas_fraction": 0.01,
                  "max_slippage": 0.005},
            flows=[{"date": "2021-01-15", "investor_id": "x", "amount_usd": 250_000},
                   {"date": "2021-06-01", "investor_id": "x", "amount_usd": -100_000}])
        history = cfg.load_history()
        start = time.perf_counter()
        first = run_backtest(cfg, history)
        elapsed = time.perf_counter() - start
        assert len(first.dates) >= 365 and first.assets and len(first.assets) == 10
        assert elapsed < 10.0
        second = run_backtest(cfg, history)
        assert first.to_json() == second.to_json()
        expected = [row["nav_cents"] for row in first.funds["Parity"].nav]
        assert replay_nav(json.loads(first.to_json()), history, "Parity") == expected
