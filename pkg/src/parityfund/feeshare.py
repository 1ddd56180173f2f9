"""Performance fees against a unit-price high-water mark, and the reward pot.

Fees crystallize only when the unit price exceeds the high-water mark; a
share of every fee is credited to a community pot that pays out a fixed
fraction of its balance each epoch (the "trickle"). Rewards go to stakers in
proportion to their staked fund tokens, scaled by how well they meet the
project-token staking ratio. All amounts are integer cents.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from ._validation import check_fraction, from_cents, to_cents
from .exceptions import ValidationError


@dataclass(frozen=True)
class HighWaterMark:
    hwm_unit_price_usd: float = 1.0
    fee_rate: float = 0.20
    community_share: float = 0.50

    def __post_init__(self):
        check_fraction(self.fee_rate, "fee_rate")
        check_fraction(self.community_share, "community_share")
        if not self.hwm_unit_price_usd > 0:
            raise ValidationError("high-water mark must be positive")


@dataclass(frozen=True)
class FeeCrystallization:
    fee_cents: int
    pot_credit_cents: int
    hwm: HighWaterMark

    @property
    def fee_usd(self):
        return from_cents(self.fee_cents)

    @property
    def pot_credit_usd(self):
        return from_cents(self.pot_credit_cents)


def crystallize_fees(hwm, new_unit_price, token_supply):
    """Charge ``fee_rate`` on the gain above the high-water mark.

    >>> r = crystallize_fees(HighWaterMark(1.0), 1.4, 10_000)
    >>> r.fee_usd, r.hwm.hwm_unit_price_usd
    (800.0, 1.4)
    """
    if not new_unit_price > 0:
        raise ValidationError("unit price must be positive")
    if token_supply < 0:
        raise ValidationError("token supply must be non-negative")
    if new_unit_price <= hwm.hwm_unit_price_usd:
        return FeeCrystallization(0, 0, hwm)
    profit_cents = to_cents((new_unit_price - hwm.hwm_unit_price_usd) * token_supply)
    fee = int(round(hwm.fee_rate * profit_cents))
    credit = int(round(hwm.community_share * fee))
    return FeeCrystallization(fee, credit, replace(hwm, hwm_unit_price_usd=new_unit_price))


@dataclass(frozen=True)
class RewardPot:
    """Community reward pot.

    ``residual_cents`` is the exact sub-cent part of the balance that integer
    rounding has not yet paid out or kept, so that ``balance_cents`` is always
    the exact balance rounded half-to-even.
    """

    balance_cents: int = 0
    payout_fraction: float = 0.50
    distribution_threshold_cents: int = 0
    residual_cents: Fraction = Fraction(0)

    def __post_init__(self):
        check_fraction(self.payout_fraction, "payout_fraction")
        if self.balance_cents < 0:
            raise ValidationError("pot balance must be non-negative")

    @property
    def balance_usd(self):
        return from_cents(self.balance_cents)


def trickle_payout(pot, inflow_usd=0.0):
    """Add ``inflow_usd`` to the pot, then pay a fraction of the excess over threshold.

    Returns ``(payout_cents, updated_pot)``. The exact balance is carried as a
    fraction; the payout is whatever keeps ``balance_cents`` equal to that
    exact balance rounded half-to-even, so after ``k`` empty epochs the pot
    holds ``round(b * (1 - f) ** k)`` cents with no drift.

    >>> pay, pot = trickle_payout(RewardPot(10_000_000, 0.5))
    >>> pay, pot.balance_cents
    (5000000, 5000000)
    """
    if inflow_usd < 0:
        raise ValidationError("inflow must be non-negative")
    held = pot.balance_cents + to_cents(inflow_usd)
    exact = held + pot.residual_cents
    excess = exact - pot.distribution_threshold_cents
    if excess > 0:
        exact -= Fraction(pot.payout_fraction) * excess
    kept = min(round(exact), held)  # a half-cent carry never turns into a negative payout
    # sub-cent carry is quantized so the fraction cannot grow without bound
    residual = Fraction(round((exact - kept) * _RESIDUAL_SCALE), _RESIDUAL_SCALE)
    return held - kept, replace(pot, balance_cents=kept, residual_cents=residual)


_RESIDUAL_SCALE = 10**12


@dataclass(frozen=True)
class StakePosition:
    investor_id: str
    project_tokens_staked: float = 0.0
    fund_tokens_staked: float = 0.0
    stake_start: str | None = None

    def __post_init__(self):
        if self.project_tokens_staked < 0 or self.fund_tokens_staked < 0:
            raise ValidationError("staked amounts must be non-negative")


@dataclass(frozen=True)
class EligibilityPolicy:
    """``required_ratio`` is project tokens per fund token (1:1 -> 1.0, 2:3 -> 2/3)."""

    required_ratio: float = 1.0
    whale_minimum_project_tokens: float = float("inf")

    def __post_init__(self):
        if not self.required_ratio > 0:
            raise ValidationError("required_ratio must be positive")


def eligibility_share(position, policy):
    if position.project_tokens_staked <= 0:
        return 0.0
    if position.project_tokens_staked >= policy.whale_minimum_project_tokens:
        return 1.0
    if position.fund_tokens_staked <= 0:
        return 0.0
    needed = policy.required_ratio * position.fund_tokens_staked
    return min(1.0, position.project_tokens_staked / needed)


@dataclass(frozen=True)
class RewardDistribution:
    rewards_cents: dict
    returned_cents: int

    @property
    def distributed_cents(self):
        return sum(self.rewards_cents.values())


def distribute_rewards(payout_cents, positions, policy):
    """Split a payout pro rata to ``share * fund_tokens_staked``.

    Each reward is rounded down to the cent; the rounding remainder, or the
    whole payout when nobody is eligible, is returned to the pot.
    """
    if payout_cents < 0:
        raise ValidationError("payout must be non-negative")
    weights = {
        p.investor_id: eligibility_share(p, policy) * p.fund_tokens_staked for p in positions
    }
    total = sum(weights.values())
    if total <= 0 or payout_cents == 0:
        return RewardDistribution({}, payout_cents)
    rewards = {}
    for investor in sorted(weights):
        if weights[investor] > 0:
            rewards[investor] = int(payout_cents * weights[investor] // total)
    return RewardDistribution(rewards, payout_cents - sum(rewards.values()))


@dataclass
class ProjectTokenSupply:
    """Tracked project-token supply reduced by burns funded from profits."""

    supply: float

    def burn(self, amount):
        if amount < 0 or amount > self.supply:
            raise ValidationError(f"cannot burn {amount} of {self.supply} tokens")
        self.supply -= amount
        return self.supply


FEE_EVENTS = ("fee", "pot_credit", "payout", "reward", "burn")


def fee_event(epoch, fund, event, amount_cents, investor_id=None):
    if event not in FEE_EVENTS:
        raise ValidationError(f"unknown fee event {event!r}")
    record = {"epoch": epoch, "fund": fund, "event": event,
              "amount_usd": from_cents(amount_cents)}
    if investor_id is not None:
        record["investor_id"] = investor_id
    return record


class FeeEventLog:
    """Append-only JSON-lines log of fee, pot and reward events."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.events = []

    def append(self, epoch, fund, event, amount_cents, investor_id=None):
        record = fee_event(epoch, fund, event, amount_cents, investor_id)
        self.events.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record
