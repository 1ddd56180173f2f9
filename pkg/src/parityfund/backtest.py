"""Deterministic daily backtest wiring every module together.

Each simulated day, per fund::

    mark to market -> crystallize fees -> trickle payout -> investor flows
    -> target weights -> no-trade filter -> capacities -> waterfall plan
    -> safe-house-gated execution with costs -> NAV record

Targets on day ``t`` only use prices up to day ``t-1`` and trades fill at
the close of day ``t``. Money lives in integer cents; every state change is
recorded as an event so the NAV path can be replayed from the report.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ANNUALIZATION, from_cents, to_cents
from .exceptions import DataError, ParityError, ValidationError
from .feeshare import (
    EligibilityPolicy,
    HighWaterMark,
    RewardPot,
    StakePosition,
    crystallize_fees,
    distribute_rewards,
    trickle_payout,
)
from .marketdata import (
    ReturnSeries,
    covariance_matrix,
    load_price_history,
    log_returns,
    rolling_volatility,
)
from .metrics import cri, max_drawdown, performance_report, report_to_csv
from .rebalancer import (
    BUY,
    AssetCapacity,
    CostModel,
    _rebalance,
    no_trade_filter,
    trade_bounds,
)
from .safehouse import HashChainSigner, SafeHouse
from .synthetic import generate_history
from .weights import (
    erc_weights,
    expected_returns,
    mvo_no_short_weights,
    mvo_weights,
    sharpe_ratio,
    vvv_profile,
    vvv_weights,
)

log = logging.getLogger(__name__)

SCHEMES = ("vvv", "mvo", "no_short", "erc", "equal")


def _parse_date(value):
    if value is None or isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise ValidationError(f"bad date {value!r}") from None


@dataclass
class BacktestConfig:
    """Everything that determines a run. Loadable from JSON.

    ``flows`` entries are ``{"date", "investor_id", "amount_usd", "fund"?}``
    with negative amounts for redemptions; a flow without ``fund`` applies
    to every fund. ``cost`` holds ``gas_fee_usd`` and ``pool_depth_usd``,
    each either a number or a per-asset mapping.
    """

    data: str | None = None
    synthetic: dict = field(default_factory=lambda: {"n_assets": 10, "n_days": 546, "seed": 0})
    start: dt.date | None = None
    end: dt.date | None = None
    funds: list = field(default_factory=lambda: [{"name": "Parity", "scheme": "vvv"}])
    window_days: int = 90
    vvv_window_days: int = 90
    lookback_days: int = 90
    warmup_days: int | None = None
    benchmark_rate: float = 0.10
    rebalance_every_days: int = 1
    band: float = 0.01
    max_gross_leverage: float = 2.0
    cost: dict = field(default_factory=lambda: {
        "gas_fee_usd": 0.0, "pool_depth_usd": 1e8,
        "max_gas_fraction": 0.01, "max_slippage": 0.005})
    fees: dict = field(default_factory=lambda: {
        "fee_rate": 0.20, "community_share": 0.50,
        "payout_fraction": 0.50, "distribution_threshold_usd": 0.0})
    initial_deposit_usd: float = 1_000_000.0
    flows: list = field(default_factory=list)
    stakes: list = field(default_factory=list)
    eligibility: dict = field(default_factory=lambda: {"required_ratio": 1.0})
    safehouse: dict = field(default_factory=lambda: {"daily_limit_usd": None,
                                                     "chain_length": 4096})
    seed: int = 0

    def __post_init__(self):
        self.start = _parse_date(self.start)
        self.end = _parse_date(self.end)
        names = set()
        for f in self.funds:
            if f.get("scheme") not in SCHEMES:
                raise ValidationError(f"unknown scheme {f.get('scheme')!r}; choose from {SCHEMES}")
            if f.get("name") in names:
                raise ValidationError(f"duplicate fund name {f.get('name')!r}")
            names.add(f.get("name"))
        if self.band < 0 or self.rebalance_every_days < 1:
            raise ValidationError("band must be >= 0 and rebalance_every_days >= 1")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {path}: {exc}") from None
        cfg = cls.from_dict(data)
        if cfg.data is not None and not Path(cfg.data).is_absolute():
            cfg.data = str(Path(path).parent / cfg.data)
        return cfg

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["start"] = self.start.isoformat() if self.start else None
        d["end"] = self.end.isoformat() if self.end else None
        return d

    def required_warmup(self):
        if self.warmup_days is not None:
            return self.warmup_days
        need = 0
        for f in self.funds:
            if f["scheme"] == "vvv":
                need = max(need, self.window_days + self.vvv_window_days)
            elif f["scheme"] != "equal":
                need = max(need, self.lookback_days + 1)
        return need

    def load_history(self):
        if self.data is not None:
            return load_price_history(self.data, (None, self.end))
        return generate_history(**self.synthetic)

    def cost_model(self, assets):
        c = self.cost

        def per_asset(value):
            if isinstance(value, dict):
                missing = set(assets) - set(value)
                if missing:
                    raise ValidationError(f"cost model missing assets {sorted(missing)}")
                return {a: float(value[a]) for a in assets}
            return {a: float(value) for a in assets}

        return CostModel(per_asset(c.get("gas_fee_usd", 0.0)),
                         per_asset(c.get("pool_depth_usd", 1e8)),
                         float(c.get("max_gas_fraction", 0.01)),
                         float(c.get("max_slippage", 0.005)))


# --------------------------------------------------------------------------
# Accounting book


@dataclass
class Book:
    """Cash and per-asset position values of one fund, all in cents."""

    assets: tuple
    cash_cents: int = 0
    value_cents: dict = field(default_factory=dict)
    token_supply: float = 0.0

    def __post_init__(self):
        for a in self.assets:
            self.value_cents.setdefault(a, 0)

    @property
    def invested_cents(self):
        return sum(self.value_cents[a] for a in self.assets)

    @property
    def nav_cents(self):
        return self.cash_cents + self.invested_cents

    def unit_price(self):
        if self.token_supply <= 0:
            return 1.0
        return from_cents(self.nav_cents) / self.token_supply

    def mark(self, prev_prices, prices):
        """Revalue positions by the price ratio; return the market P&L."""
        pnl = 0
        for j, a in enumerate(self.assets):
            v = self.value_cents[a]
            if v:
                nv = int(round(v * (prices[j] / prev_prices[j])))
                pnl += nv - v
                self.value_cents[a] = nv
        return pnl

    def apply(self, event):
        kind = event["type"]
        if kind == "flow":
            self.cash_cents += event["amount_cents"]
            self.token_supply += event["tokens"]
        elif kind == "fee":
            self.cash_cents -= event["amount_cents"]
        elif kind == "trade":
            signed = event["notional_cents"] if event["side"] == BUY else -event["notional_cents"]
            self.value_cents[event["asset"]] += signed
            self.cash_cents -= signed + event["gas_cents"] + event["slippage_cents"]
        else:
            raise ValidationError(f"unknown book event {kind!r}")


# --------------------------------------------------------------------------
# Targets


def _trailing_returns(returns, t, length):
    """Returns realised on days ``t-length .. t-1`` (prices up to ``t-1``)."""
    end = t - 1
    start = end - length
    if start < 0:
        raise DataError(f"need {length} returns before day index {t}")
    return ReturnSeries(returns.assets, returns.dates[start:end], returns.values[start:end])


def target_weights(scheme, returns, t, config):
    """Weights for ``scheme`` using information available before day ``t``."""
    n = len(returns.assets)
    if scheme == "equal" or n == 1:
        return np.full(n, 1.0 / n)
    if scheme == "vvv":
        r = _trailing_returns(returns, t, config.window_days + config.vvv_window_days - 1)
        profile = vvv_profile(rolling_volatility(r, config.window_days), config.vvv_window_days)
        return vvv_weights(profile)
    r = _trailing_returns(returns, t, config.lookback_days)
    cov = covariance_matrix(r)
    if scheme == "erc":
        return erc_weights(cov)
    mu = expected_returns(r)
    if scheme == "no_short":
        return mvo_no_short_weights(mu, cov, config.benchmark_rate).weights
    w = mvo_weights(mu, cov, config.benchmark_rate)
    gross = np.abs(w).sum()
    if gross > config.max_gross_leverage:
        w = w * (config.max_gross_leverage / gross)
    return w


# --------------------------------------------------------------------------
# Report


@dataclass
class FundResult:
    name: str
    scheme: str
    nav: list = field(default_factory=list)
    events: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    audit_head: str = ""
    audit_ok: bool = True
    audit_events: list = field(default_factory=list)
    final_values: dict = field(default_factory=dict)

    def nav_series(self):
        return np.array([row["nav_cents"] for row in self.nav], dtype=float) / 100.0

    def unit_prices(self):
        return np.array([row["unit_price"] for row in self.nav])


@dataclass
class BacktestReport:
    config: dict
    assets: tuple
    dates: tuple
    funds: dict
    metrics: list = field(default_factory=list)
    cri: dict = field(default_factory=dict)

    def fee_events(self, fund=None):
        return [e for name, f in self.funds.items() if fund in (None, name)
                for e in f.events if e["type"] in ("fee", "pot_credit", "payout", "reward")]

    def to_dict(self):
        return {
            "config": self.config,
            "assets": list(self.assets),
            "dates": [d.isoformat() for d in self.dates],
            "funds": {
                name: {"scheme": f.scheme, "nav": f.nav, "events": f.events, "plans": f.plans,
                       "audit_head": f.audit_head, "audit_ok": f.audit_ok}
                for name, f in self.funds.items()
            },
            "metrics": [dataclasses.asdict(r) for r in self.metrics],
            "cri": self.cri,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=_json_default)

    def nav_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "fund", "nav_usd", "unit_price", "token_supply", "cash_usd"])
        for name, f in self.funds.items():
            for row in f.nav:
                w.writerow([row["date"], name, f"{row['nav_cents'] / 100:.2f}",
                            repr(row["unit_price"]), repr(row["token_supply"]),
                            f"{row['cash_cents'] / 100:.2f}"])
        return buf.getvalue()

    def write(self, out_dir):
        """Write report.json, nav.csv, events.jsonl, performance.csv and audit logs."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n", encoding="utf-8")
        (out / "nav.csv").write_text(self.nav_csv(), encoding="utf-8")
        (out / "performance.csv").write_text(report_to_csv(self.metrics), encoding="utf-8")
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for name, f in self.funds.items():
                for e in f.events:
                    fh.write(json.dumps({"fund": name, **e}, sort_keys=True,
                                        default=_json_default) + "\n")
        for name, f in self.funds.items():
            with open(out / f"audit_{name}.jsonl", "w", encoding="utf-8") as fh:
                for ev in f.audit_events:
                    fh.write(ev.to_json() + "\n")
        return out


def _json_default(obj):
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"not JSON serializable: {type(obj)}")


# --------------------------------------------------------------------------
# Engine


def _executor(name, config, generation):
    seed = hashlib.sha256(f"{config.seed}:{name}:{generation}".encode()).digest()
    return HashChainSigner(f"executor-{name}", seed, int(config.safehouse.get("chain_length", 4096)))


def _first_index(history, config):
    warm = config.required_warmup()
    if config.start is None:
        t0 = warm
    else:
        after = [i for i, d in enumerate(history.dates) if d >= config.start]
        if not after:
            raise DataError(f"start {config.start} is after the last data date")
        t0 = after[0]
        if t0 < warm:
            first = history.dates[warm] if warm < history.n_dates else None
            raise DataError(
                f"warm-up of {warm} days is not available before {config.start}; "
                f"first runnable date is {first}"
            )
    if t0 >= history.n_dates:
        raise DataError(
            f"history has {history.n_dates} days but warm-up needs {warm}; no runnable date"
        )
    return t0


class _FundSim:
    def __init__(self, fund_cfg, config, assets, cost, bounds):
        self.name = fund_cfg["name"]
        self.scheme = fund_cfg["scheme"]
        self.config = config
        self.cost = cost
        self.bounds = bounds
        self.book = Book(assets)
        self.balances = {}
        self.hwm = HighWaterMark(1.0, config.fees.get("fee_rate", 0.2),
                                 config.fees.get("community_share", 0.5))
        self.pot = RewardPot(0, config.fees.get("payout_fraction", 0.5),
                             to_cents(config.fees.get("distribution_threshold_usd", 0.0)))
        self.policy = EligibilityPolicy(
            config.eligibility.get("required_ratio", 1.0),
            config.eligibility.get("whale_minimum_project_tokens", float("inf")))
        self.stakes = [StakePosition(s["investor_id"], s.get("project_tokens", 0.0),
                                     s.get("fund_tokens", 0.0))
                       for s in config.stakes if s.get("fund", self.name) == self.name]
        daily = config.safehouse.get("daily_limit_usd")
        limit = max((b.max_trade_usd for b in bounds.values() if b.tradeable), default=0.0)
        self.safehouse = SafeHouse(max(limit, 0.01),
                                   float("inf") if daily is None else float(daily))
        self.generation = 0
        self.signer = _executor(self.name, config, 0)
        self.safehouse.add_operator(self.signer.chain())
        self.result = FundResult(self.name, self.scheme)
        self.targets = None
        self.halted = False

    def _event(self, day, kind, **fields):
        e = {"day": day, "type": kind, **fields}
        self.result.events.append(e)
        if kind in ("flow", "fee", "trade"):
            self.book.apply(e)
        return e

    def _reveal(self):
        if self.signer.remaining == 0:
            self.generation += 1
            self.signer = _executor(self.name, self.config, self.generation)
            self.safehouse.add_operator(self.signer.chain())
        return self.signer.peek()

    def step(self, t, day, prices, prev_prices, returns, flows, rebalance):
        book = self.book
        nav_before = book.nav_cents
        pnl = book.mark(prev_prices, prices) if prev_prices is not None else 0

        fees = credit = 0
        if book.token_supply > 0 and book.nav_cents > 0:
            res = crystallize_fees(self.hwm, book.unit_price(), book.token_supply)
            self.hwm = res.hwm
            if res.fee_cents:
                fees, credit = res.fee_cents, res.pot_credit_cents
                self._event(day, "fee", amount_cents=fees, unit_price=res.hwm.hwm_unit_price_usd)
                self._event(day, "pot_credit", amount_cents=credit)
        payout, self.pot = trickle_payout(self.pot, from_cents(credit))
        if payout:
            self._event(day, "payout", amount_cents=payout)
            dist = distribute_rewards(payout, self.stakes, self.policy)
            for investor, amount in dist.rewards_cents.items():
                self._event(day, "reward", amount_cents=amount, investor_id=investor)
            if dist.returned_cents:
                self.pot = dataclasses.replace(
                    self.pot, balance_cents=self.pot.balance_cents + dist.returned_cents)

        net_flow = 0
        for f in flows:
            amount = to_cents(f["amount_usd"])
            investor = f["investor_id"]
            price = book.unit_price()
            if amount < 0:
                held = self.balances.get(investor, 0.0)
                tokens = -from_cents(-amount) / price
                if -tokens > held * (1 + 1e-12) or -amount > book.nav_cents:
                    self._event(day, "rejected_flow", investor_id=investor, amount_cents=amount,
                                reason="redemption exceeds balance")
                    continue
                tokens = max(tokens, -held)
            else:
                tokens = from_cents(amount) / price
            self.balances[investor] = self.balances.get(investor, 0.0) + tokens
            self._event(day, "flow", investor_id=investor, amount_cents=amount, tokens=tokens)
            net_flow += amount

        costs = 0
        if rebalance and not self.halted and book.nav_cents > 0:
            costs = self._rebalance(t, day, returns)
        if book.nav_cents <= 0 and book.token_supply > 0 and not self.halted:
            self.halted = True
            self._event(day, "halt", reason="non-positive NAV")
            log.warning("%s halted on %s: non-positive NAV", self.name, day.isoformat())

        nav = book.nav_cents
        if nav - nav_before != pnl + net_flow - costs - fees:
            raise ParityError(f"{self.name} {day}: money not conserved")
        self.result.nav.append({
            "date": day.isoformat(), "nav_cents": nav, "cash_cents": book.cash_cents,
            "token_supply": book.token_supply, "unit_price": book.unit_price(),
            "pnl_cents": pnl, "flow_cents": net_flow, "cost_cents": costs, "fee_cents": fees,
        })

    def _rebalance(self, t, day, returns):
        book = self.book
        assets = book.assets
        try:
            w = target_weights(self.scheme, returns, t, self.config)
            self.targets = dict(zip(assets, (float(x) for x in w)))
        except ParityError as exc:
            self._event(day, "target_error", reason=str(exc))
            if self.targets is None:
                return 0
        nav = book.nav_cents
        current = {a: book.value_cents[a] / nav for a in assets}
        actionable = no_trade_filter(current, self.targets, self.config.band)
        if book.cash_cents < 0:
            actionable = set(assets)
        capacities = [AssetCapacity(a, int(round(self.targets[a] * nav)), book.value_cents[a])
                      for a in assets]
        plan = _rebalance(capacities, self.bounds, actionable, book.cash_cents, self.cost)
        self.result.plans.append({"date": day.isoformat(), **plan.to_dict()})
        at = dt.datetime.combine(day, dt.time(), tzinfo=dt.timezone.utc)
        spent = 0
        for order in plan.orders:
            if order.side == BUY and book.cash_cents < order.notional_cents + order.cost_cents:
                self._event(day, "skipped_order", asset=order.asset, side=order.side,
                            notional_cents=order.notional_cents, reason="insufficient cash")
                continue
            decision = self.safehouse.request_withdrawal(
                self.signer.operator_id, from_cents(order.notional_cents), self._reveal(), at)
            if not decision.accepted:
                self._event(day, "skipped_order", asset=order.asset, side=order.side,
                            notional_cents=order.notional_cents, reason=decision.reason)
                continue
            self.signer.next_reveal()
            self._event(day, "trade", asset=order.asset, side=order.side,
                        notional_cents=order.notional_cents, gas_cents=order.gas_cents,
                        slippage_cents=order.slippage_cents, seq=order.sequence_index)
            spent += order.cost_cents
        return spent


def run_backtest(config, history=None):
    """Simulate every configured fund over the history; return a BacktestReport."""
    if history is None:
        history = config.load_history()
    t0 = _first_index(history, config)
    t_end = history.n_dates - 1
    if config.end is not None:
        t_end = max(i for i, d in enumerate(history.dates) if d <= config.end)
    if t_end < t0:
        raise DataError("end date precedes the first runnable date")
    returns = log_returns(history) if history.n_dates > 1 else None
    assets = history.assets
    cost = config.cost_model(assets)
    bounds = trade_bounds(cost)
    sims = [_FundSim(fund_cfg, config, assets, cost, bounds) for fund_cfg in config.funds]

    flows_by_day = {}
    if config.initial_deposit_usd:
        flows_by_day.setdefault(history.dates[t0], []).append(
            {"investor_id": "seed", "amount_usd": config.initial_deposit_usd})
    for f in config.flows:
        day = _parse_date(f["date"])
        flows_by_day.setdefault(day, []).append(f)

    for t in range(t0, t_end + 1):
        day = history.dates[t]
        prices = history.close[t]
        prev = history.close[t - 1] if t > t0 else None
        rebalance = (t - t0) % config.rebalance_every_days == 0
        for sim in sims:
            flows = [f for f in flows_by_day.get(day, []) if f.get("fund", sim.name) == sim.name]
            sim.step(t, day, prices, prev, returns, flows, rebalance)

    funds = {}
    for sim in sims:
        check = sim.safehouse.verify()
        sim.result.audit_ok = check.ok
        sim.result.audit_head = check.final_digest
        sim.result.audit_events = list(sim.safehouse.audit_log)
        sim.result.final_values = dict(sim.book.value_cents)
        funds[sim.name] = sim.result
    report = BacktestReport(config.to_dict(), assets, history.dates[t0:t_end + 1], funds)
    _final_metrics(report, history, t_end, config)
    return report


def _final_metrics(report, history, t_end, config):
    vols = None
    window = min(config.window_days, t_end)
    if window >= 2:
        r = np.diff(np.log(history.close[t_end - window:t_end + 1]), axis=0)
        vols = r.std(axis=0, ddof=1) * math.sqrt(ANNUALIZATION)
    navs = {}
    for name, f in report.funds.items():
        nav = f.unit_prices()
        navs[name] = nav
        last = f.nav[-1] if f.nav else None
        if last is None or vols is None or last["nav_cents"] <= 0 or not np.all(vols > 0):
            report.cri[name] = float("nan")
            continue
        weights = np.array([f.final_values.get(a, 0) for a in report.assets]) / last["nav_cents"]
        report.cri[name] = cri(weights, history.market_cap[t_end], vols,
                               report.assets).portfolio_cri
    valid = {k: v for k, v in navs.items() if v.size and np.all(v > 0)}
    report.metrics = performance_report(valid, cri_by_entity=report.cri,
                                        benchmark_rate=config.benchmark_rate)


# --------------------------------------------------------------------------
# Replay and comparison


def replay_nav(report, history, fund):
    """Rebuild a fund's daily NAV (cents) from the report's event stream.

    ``report`` is a :class:`BacktestReport` or the dict parsed from its JSON.
    """
    if isinstance(report, BacktestReport):
        f = report.funds[fund]
        events, nav = f.events, f.nav
    else:
        events, nav = report["funds"][fund]["events"], report["funds"][fund]["nav"]
    return replay_events(events, [row["date"] for row in nav], history)


def replay_events(events, dates, history):
    """Apply flow, fee and trade events day by day, marking to market in between."""
    book = Book(history.assets)
    by_day = {}
    for e in events:
        by_day.setdefault(_parse_date(e["day"]), []).append(e)
    index = {d: i for i, d in enumerate(history.dates)}
    out = []
    prev = None
    for day in dates:
        day = _parse_date(day)
        prices = history.close[index[day]]
        if prev is not None:
            book.mark(prev, prices)
        for e in by_day.get(day, []):
            if e["type"] in ("flow", "fee", "trade"):
                book.apply(e)
        out.append(book.nav_cents)
        prev = prices
    return out


@dataclass(frozen=True)
class SchemeComparison:
    schemes: tuple
    expected_return: dict
    volatility: dict
    sharpe: dict
    max_drawdown: dict
    total_return: dict

    ROWS = ("portfolio_expected_return", "portfolio_volatility", "sharpe_ratio",
            "max_drawdown", "total_return")

    def rows(self):
        tables = (self.expected_return, self.volatility, self.sharpe, self.max_drawdown,
                  self.total_return)
        return [[label] + [t[s] for s in self.schemes] for label, t in zip(self.ROWS, tables)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", *self.schemes])
        for row in self.rows():
            w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
        return buf.getvalue()

    def ranking(self, by="sharpe"):
        """Schemes best first; lower is better for volatility and drawdown."""
        table = getattr(self, by)
        sign = -1 if by in ("volatility", "max_drawdown") else 1
        return sorted(self.schemes, key=lambda s: (-_nan_low(sign * table[s]), s))


def _nan_low(x):
    return -np.inf if math.isnan(x) else x


def nav_statistics(unit_prices, benchmark_rate=0.10):
    """Annualized mean log return, volatility, Sharpe, drawdown, total return."""
    p = np.asarray(unit_prices, dtype=float)
    r = np.diff(np.log(p))
    er = float(r.mean() * ANNUALIZATION) if r.size else 0.0
    vol = float(r.std(ddof=1) * math.sqrt(ANNUALIZATION)) if r.size > 1 else 0.0
    return er, vol, sharpe_ratio(er, vol, benchmark_rate), max_drawdown(p), float(p[-1] / p[0] - 1)


def compare_schemes(config, schemes=("vvv", "mvo", "no_short", "erc"), history=None):
    """Backtest each scheme as its own fund on the same data and flows."""
    cfg = dataclasses.replace(config, funds=[{"name": s, "scheme": s} for s in schemes])
    cfg.flows = [{k: v for k, v in f.items() if k != "fund"} for f in config.flows]
    report = run_backtest(cfg, history)
    stats = {s: nav_statistics(report.funds[s].unit_prices(), config.benchmark_rate)
             for s in schemes}
    return SchemeComparison(
        tuple(schemes),
        {s: stats[s][0] for s in schemes},
        {s: stats[s][1] for s in schemes},
        {s: stats[s][2] for s in schemes},
        {s: stats[s][3] for s in schemes},
        {s: stats[s][4] for s in schemes},
    ), report
