"""Trade planning around the waterfall round robin, with per-asset size bounds.

Money is handled in integer cents throughout so that placed buys minus
placed sells equals the placed flow exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ._validation import check_fraction, from_cents, to_cents
from .exceptions import RedemptionError, ValidationError

BUY = "buy"
SELL = "sell"


@dataclass(frozen=True)
class AssetCapacity:
    asset: str
    capacity_cents: int
    current_cents: int = 0

    @property
    def headroom_cents(self):
        return self.capacity_cents - self.current_cents

    @property
    def capacity_usd(self):
        return from_cents(self.capacity_cents)

    @property
    def current_usd(self):
        return from_cents(self.current_cents)

    @property
    def headroom_usd(self):
        return from_cents(self.headroom_cents)


@dataclass(frozen=True)
class CostModel:
    """Per-asset flat gas fee and AMM pool depth, plus global tolerances."""

    gas_fee_usd: dict
    pool_depth_usd: dict
    max_gas_fraction: float = 0.01
    max_slippage: float = 0.005

    def __post_init__(self):
        check_fraction(self.max_gas_fraction, "max_gas_fraction", closed=(False, False))
        check_fraction(self.max_slippage, "max_slippage", closed=(False, False))
        for asset, gas in self.gas_fee_usd.items():
            if gas < 0:
                raise ValidationError(f"gas fee for {asset} is negative")
        for asset, depth in self.pool_depth_usd.items():
            if not depth > 0:
                raise ValidationError(f"pool depth for {asset} must be positive")
        if set(self.gas_fee_usd) != set(self.pool_depth_usd):
            raise ValidationError("gas_fee_usd and pool_depth_usd must cover the same assets")

    @classmethod
    def uniform(cls, assets, gas_fee_usd=0.0, pool_depth_usd=1e7, **kwargs):
        return cls({a: gas_fee_usd for a in assets}, {a: pool_depth_usd for a in assets},
                   **kwargs)

    @property
    def assets(self):
        return tuple(sorted(self.gas_fee_usd))

    def slippage(self, asset, notional_usd):
        """Fractional price impact ``x / (D + x)`` of a constant-product pool."""
        depth = self.pool_depth_usd[asset]
        return notional_usd / (depth + notional_usd)

    def order_cost_usd(self, asset, notional_usd):
        """Gas plus slippage cost of one order, unrounded."""
        return self.gas_fee_usd[asset] + notional_usd * self.slippage(asset, notional_usd)

    def order_cost_cents(self, asset, notional_cents):
        """(gas, slippage) cost of one order, in cents."""
        notional = from_cents(notional_cents)
        gas = to_cents(self.gas_fee_usd[asset])
        slip = to_cents(notional * self.slippage(asset, notional))
        return gas, slip


@dataclass(frozen=True)
class TradeBounds:
    asset: str
    min_trade_cents: int
    max_trade_cents: int

    @property
    def tradeable(self):
        return self.min_trade_cents <= self.max_trade_cents

    @property
    def min_trade_usd(self):
        return from_cents(self.min_trade_cents)

    @property
    def max_trade_usd(self):
        return from_cents(self.max_trade_cents)


@dataclass(frozen=True)
class TradeOrder:
    asset: str
    side: str
    notional_cents: int
    gas_cents: int = 0
    slippage_cents: int = 0
    sequence_index: int = 0

    @property
    def notional_usd(self):
        return from_cents(self.notional_cents)

    @property
    def cost_cents(self):
        return self.gas_cents + self.slippage_cents

    def to_dict(self):
        return {
            "asset": self.asset,
            "side": self.side,
            "notional_usd": from_cents(self.notional_cents),
            "gas_usd": from_cents(self.gas_cents),
            "slippage_usd": from_cents(self.slippage_cents),
            "seq": self.sequence_index,
        }


@dataclass(frozen=True)
class TradePlan:
    orders: tuple = ()
    unallocated_cents: int = 0
    untradeable: tuple = field(default=())

    @property
    def total_cost_cents(self):
        return sum(o.cost_cents for o in self.orders)

    @property
    def bought_cents(self):
        return sum(o.notional_cents for o in self.orders if o.side == BUY)

    @property
    def sold_cents(self):
        return sum(o.notional_cents for o in self.orders if o.side == SELL)

    @property
    def placed_cents(self):
        """Net placed flow: buys minus sells."""
        return self.bought_cents - self.sold_cents

    @property
    def unallocated_usd(self):
        return from_cents(self.unallocated_cents)

    @property
    def total_cost_usd(self):
        return from_cents(self.total_cost_cents)

    def to_dict(self):
        return {
            "orders": [o.to_dict() for o in self.orders],
            "unallocated_usd": self.unallocated_usd,
            "total_cost_usd": self.total_cost_usd,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def asset_capacities(targets, tvl_usd, net_flow_usd, current_usd=None, allow_short=False):
    """Target dollar holding per asset after the pending flow.

    ``targets`` maps asset to weight; ``current_usd`` maps asset to its
    marked-to-market holding (missing assets count as zero). Negative
    weights (short targets) are rejected unless ``allow_short``.
    """
    total_cents = to_cents(tvl_usd) + to_cents(net_flow_usd)
    if total_cents < 0:
        raise RedemptionError(
            f"redemption of {-net_flow_usd:.2f} exceeds fund value {tvl_usd:.2f}"
        )
    current_usd = current_usd or {}
    out = []
    for asset in sorted(targets):
        w = float(targets[asset])
        if w < 0 and not allow_short:
            raise ValidationError(f"negative target weight for {asset}")
        out.append(AssetCapacity(asset, int(round(w * total_cents)),
                                 to_cents(current_usd.get(asset, 0.0))))
    return out


def trade_bounds(cost):
    """Min trade from the gas budget, max trade from the slippage budget.

    ``min = gas / max_gas_fraction`` (rounded up to the cent) keeps gas below
    the allowed fraction of notional. ``max`` solves ``x / (D + x) = s``,
    i.e. ``x = s * D / (1 - s)``, rounded down to the cent.
    """
    out = {}
    s = cost.max_slippage
    for asset in cost.assets:
        gas = cost.gas_fee_usd[asset]
        min_cents = math.ceil(round(gas / cost.max_gas_fraction * 100, 6))
        max_cents = math.floor(round(s * cost.pool_depth_usd[asset] / (1 - s) * 100, 6))
        out[asset] = TradeBounds(asset, min_cents, max_cents)
    return out


def no_trade_filter(current_weights, target_weights, band=0.01):
    """Assets whose weight drift strictly exceeds ``band``."""
    if band < 0:
        raise ValidationError("band must be non-negative")
    assets = set(current_weights) | set(target_weights)
    return {
        a for a in assets
        if abs(current_weights.get(a, 0.0) - target_weights.get(a, 0.0)) > band
    }


def _visit_order(candidates, need):
    return sorted(candidates, key=lambda a: (-need[a], a))


def waterfall_round_robin(capacities, bounds, actionable, net_flow_usd, cost=None):
    """Place ``net_flow_usd`` across assets in a circular, largest-need-first loop.

    Buys (positive flow) go to assets below capacity, ordered by descending
    headroom; redemptions (negative flow) sell assets above capacity, ordered
    by descending excess. Symbols break ties. Each visit places
    ``min(max_trade, remaining need, remaining flow)`` and skips the asset if
    that is below its ``min_trade``. The loop stops when the flow is used up
    or a full pass places nothing.
    """
    return _waterfall(capacities, bounds, actionable, to_cents(net_flow_usd), cost)


def _waterfall(capacities, bounds, actionable, flow_cents, cost=None, start_seq=0):
    side = BUY if flow_cents >= 0 else SELL
    remaining = abs(flow_cents)
    caps = {c.asset: c for c in capacities}
    need = {}
    untradeable = []
    for asset, cap in caps.items():
        if asset not in actionable:
            continue
        b = bounds.get(asset)
        if b is None or not b.tradeable:
            untradeable.append(asset)
            continue
        gap = cap.headroom_cents if side == BUY else -cap.headroom_cents
        if gap > 0:
            need[asset] = gap
    order = _visit_order(need, need)
    orders = []
    seq = start_seq
    progress = True
    while remaining > 0 and progress:
        progress = False
        for asset in order:
            if remaining == 0:
                break
            b = bounds[asset]
            chunk = min(b.max_trade_cents, need[asset], remaining)
            if chunk <= 0 or chunk < b.min_trade_cents:
                continue
            gas, slip = cost.order_cost_cents(asset, chunk) if cost is not None else (0, 0)
            orders.append(TradeOrder(asset, side, chunk, gas, slip, seq))
            seq += 1
            need[asset] -= chunk
            remaining -= chunk
            progress = True
    return TradePlan(tuple(orders), remaining, tuple(sorted(untradeable)))


def rebalance_plan(capacities, bounds, actionable, cash_usd, cost=None):
    """Sell actionable excess, then deploy available cash into headroom.

    Combines two waterfall passes into one plan: a sell pass sized to the
    total excess above capacity, followed by a buy pass funded by cash plus
    the proceeds of those sells. ``unallocated_cents`` reports cash left
    undeployed.
    """
    return _rebalance(capacities, bounds, actionable, to_cents(cash_usd), cost)


def _rebalance(capacities, bounds, actionable, cash_cents, cost=None):
    excess = sum(
        max(0, -c.headroom_cents) for c in capacities if c.asset in actionable
    )
    sells = _waterfall(capacities, bounds, actionable, -excess, cost)
    sold = sells.sold_cents
    after = {c.asset: c for c in capacities}
    for o in sells.orders:
        c = after[o.asset]
        after[o.asset] = AssetCapacity(c.asset, c.capacity_cents, c.current_cents - o.notional_cents)
    budget = max(0, cash_cents + sold)
    buys = _waterfall(list(after.values()), bounds, actionable, budget, cost,
                      start_seq=len(sells.orders))
    return TradePlan(sells.orders + buys.orders, buys.unallocated_cents,
                     tuple(sorted(set(sells.untradeable) | set(buys.untradeable))))


@dataclass(frozen=True)
class CostBreakdown:
    per_order: tuple
    total_cents: int

    @property
    def total_usd(self):
        return from_cents(self.total_cents)


def estimate_plan_cost(plan, cost):
    """Re-price every order with ``cost``: gas plus ``notional * slippage``."""
    rows = []
    for o in plan.orders:
        gas, slip = cost.order_cost_cents(o.asset, o.notional_cents)
        rows.append({"seq": o.sequence_index, "asset": o.asset, "gas_cents": gas,
                     "slippage_cents": slip})
    return CostBreakdown(tuple(rows), sum(r["gas_cents"] + r["slippage_cents"] for r in rows))
