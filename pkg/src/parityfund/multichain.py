"""One fund price across networks, plus bridge transfer planning between them.

Holdings and prices are kept as :class:`~decimal.Decimal` so that moving
units between networks leaves every aggregate exactly unchanged.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal, localcontext

from ._validation import from_cents, to_cents
from .exceptions import DataError, ValidationError

CENT = Decimal("0.01")
DEFAULT_GAS_PROFILES = {"ETH": 15.0, "BSC": 0.3, "POLYGON": 0.05}


def _dec(x):
    return x if isinstance(x, Decimal) else Decimal(str(x))


@dataclass(frozen=True)
class NetworkPortfolio:
    network_id: str
    holdings: dict = field(default_factory=dict)
    tokens_issued: Decimal = Decimal(0)
    gas_fee_usd: float = 0.0

    def tvl(self, prices):
        with localcontext() as ctx:
            ctx.prec = 60
            return sum((_dec(u) * _dec(prices[a]) for a, u in sorted(self.holdings.items())),
                       Decimal(0))


@dataclass(frozen=True)
class GlobalPortfolio:
    networks: tuple
    tvl_usd: Decimal
    tokens_issued: Decimal
    global_unit_price_usd: Decimal
    weights: dict

    @property
    def unit_price_cents(self):
        return int((self.global_unit_price_usd / CENT).to_integral_value(ROUND_HALF_EVEN))


def aggregate_global(networks, prices):
    """Combine network portfolios into one fund with one unit price."""
    networks = tuple(networks)
    if not networks:
        raise ValidationError("need at least one network")
    with localcontext() as ctx:
        ctx.prec = 60
        tvl = sum((n.tvl(prices) for n in networks), Decimal(0))
        supply = sum((_dec(n.tokens_issued) for n in networks), Decimal(0))
        if supply <= 0:
            raise ValidationError("global unit price undefined: zero total token supply")
        by_asset = {}
        for n in networks:
            for a, u in n.holdings.items():
                by_asset[a] = by_asset.get(a, Decimal(0)) + _dec(u) * _dec(prices[a])
        weights = {a: float(v / tvl) if tvl > 0 else 0.0 for a, v in sorted(by_asset.items())}
        return GlobalPortfolio(tuple(n.network_id for n in networks), tvl, supply,
                               tvl / supply, weights)


def transfer_units(networks, source, target, asset, units, fee_units=0):
    """Move ``units`` of ``asset`` from ``source`` to ``target``.

    ``fee_units`` are deducted from ``source`` on top of ``units`` and leave
    the system. Returns a new tuple of networks.
    """
    units, fee_units = _dec(units), _dec(fee_units)
    if units < 0 or fee_units < 0:
        raise ValidationError("transfer amounts must be non-negative")
    by_id = {n.network_id: n for n in networks}
    if source not in by_id or target not in by_id:
        raise ValidationError(f"unknown network in transfer {source}->{target}")
    src = by_id[source]
    held = _dec(src.holdings.get(asset, 0))
    if units + fee_units > held:
        raise ValidationError(f"{source} holds {held} {asset}, cannot send {units + fee_units}")
    src_h = dict(src.holdings)
    src_h[asset] = held - units - fee_units
    by_id[source] = replace(src, holdings=src_h)
    dst = by_id[target]
    dst_h = dict(dst.holdings)
    dst_h[asset] = _dec(dst_h.get(asset, 0)) + units
    by_id[target] = replace(dst, holdings=dst_h)
    return tuple(by_id[n.network_id] for n in networks)


@dataclass(frozen=True)
class BridgeLink:
    from_network: str
    to_network: str
    capacity_usd: float
    fee_usd: float = 0.0

    def __post_init__(self):
        if self.capacity_usd < 0 or self.fee_usd < 0:
            raise ValidationError("bridge capacity and fee must be non-negative")


@dataclass(frozen=True)
class BridgeTransfer:
    from_network: str
    to_network: str
    sent_cents: int
    fee_cents: int
    seq: int

    @property
    def received_cents(self):
        return self.sent_cents - self.fee_cents

    def to_dict(self):
        return {"from": self.from_network, "to": self.to_network,
                "amount_usd": from_cents(self.sent_cents),
                "fee_usd": from_cents(self.fee_cents), "seq": self.seq}


@dataclass(frozen=True)
class BridgePlan:
    transfers: tuple
    residual_deficit_cents: dict
    unreachable: tuple = ()

    @property
    def total_fee_cents(self):
        return sum(t.fee_cents for t in self.transfers)

    def to_dict(self):
        return {
            "transfers": [t.to_dict() for t in self.transfers],
            "unallocated_usd": from_cents(sum(self.residual_deficit_cents.values())),
            "total_cost_usd": from_cents(self.total_fee_cents),
            "residual_deficit_usd": {k: from_cents(v)
                                     for k, v in sorted(self.residual_deficit_cents.items())},
            "unreachable": list(self.unreachable),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def network_imbalances(targets, tvls_usd):
    """Deficit (positive) or surplus (negative) per network, in cents."""
    if abs(sum(targets.values()) - 1.0) > 1e-9:
        raise ValidationError("network exposure targets must sum to 1")
    if set(targets) != set(tvls_usd):
        raise ValidationError("targets and TVLs must name the same networks")
    tvl = {k: to_cents(v) for k, v in tvls_usd.items()}
    total = sum(tvl.values())
    return {k: int(round(targets[k] * total)) - tvl[k] for k in sorted(tvl)}


def plan_bridge_transfers(targets, tvls_usd, links, max_gas_fraction=0.01):
    """Greedy epoch plan moving value from surplus to deficit networks.

    Deficits are served largest first. For each one, linked surplus networks
    are tried starting with those that can reach the fewest other open
    deficits, then by largest surplus. A transfer sends at most the link's
    capacity for the epoch and at least ``fee / max_gas_fraction``; the
    receiver gets the amount sent minus the fee. Deficits left over are
    reported for the next epoch.
    """
    gap = network_imbalances(targets, tvls_usd)
    link_map = {}
    for link in links:
        key = (link.from_network, link.to_network)
        if key in link_map:
            raise ValidationError(f"duplicate bridge link {key}")
        link_map[key] = [to_cents(link.capacity_usd), to_cents(link.fee_usd)]
    deficit = {k: v for k, v in gap.items() if v > 0}
    surplus = {k: -v for k, v in gap.items() if v < 0}
    transfers = []
    unreachable = []
    for dst in sorted(deficit, key=lambda k: (-deficit[k], k)):
        sources = [s for s in surplus if (s, dst) in link_map]
        if not sources:
            unreachable.append(dst)
            continue

        def other_outlets(s, dst=dst):
            return sum(1 for d, v in deficit.items() if d != dst and v > 0 and (s, d) in link_map)

        for src in sorted(sources, key=lambda s: (other_outlets(s), -surplus[s], s)):
            if deficit[dst] <= 0:
                break
            cap, fee = link_map[(src, dst)]
            min_size = math.ceil(fee / max_gas_fraction)
            sent = min(deficit[dst] + fee, surplus[src], cap)
            if sent <= fee or sent < min_size:
                continue
            transfers.append(BridgeTransfer(src, dst, sent, fee, len(transfers)))
            link_map[(src, dst)][0] -= sent
            surplus[src] -= sent
            deficit[dst] -= sent - fee
    residual = {k: v for k, v in deficit.items() if v > 0}
    return BridgePlan(tuple(transfers), residual, tuple(sorted(unreachable)))


def load_network_config(data):
    """Parse the network config list into (gas fees, links).

    Each entry: ``{"network_id", "gas_fee_usd", "links": [{"to", "capacity_usd", "fee_usd"}]}``.
    """
    try:
        gas = {}
        links = []
        for entry in data:
            nid = entry["network_id"]
            gas[nid] = float(entry.get("gas_fee_usd", DEFAULT_GAS_PROFILES.get(nid, 0.0)))
            for link in entry.get("links", []):
                links.append(BridgeLink(nid, link["to"], float(link["capacity_usd"]),
                                        float(link.get("fee_usd", 0.0))))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed network config: {exc}") from None
    return gas, links
