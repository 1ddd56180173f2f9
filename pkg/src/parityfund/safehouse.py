"""Custody state machine guarding fund movements.

Operators authenticate with a reverse SHA-256 hash chain: the safe house
stores ``anchor = H^n(seed)`` and accepts a reveal ``r`` iff ``H(r) ==
anchor``, after which ``r`` becomes the new anchor. Each password is used
once and commits to the next one.

Withdrawals are capped per transaction and per calendar day. A bad reveal or
an unknown operator locks the safe house until a quorum of distinct operators
unlocks it. Every decision is appended to a hash-chained audit log.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from ._validation import from_cents, to_cents
from .exceptions import DataError, ValidationError

OPEN = "Open"
LOCKED = "Locked"
GENESIS_DIGEST = "0" * 64
ACTIONS = ("withdraw", "deposit", "lock", "unlock", "reject")


def sha256(data):
    return hashlib.sha256(data).digest()


def iterate_hash(seed, n):
    value = bytes(seed)
    for _ in range(n):
        value = sha256(value)
    return value


@dataclass
class OperatorChain:
    operator_id: str
    anchor: bytes
    chain_length_remaining: int


def init_operator_chain(operator_id, seed, n):
    """Public commitment ``H^n(seed)`` for an operator holding ``seed``."""
    if len(seed) != 32:
        raise ValidationError("seed must be 32 bytes")
    if n < 1:
        raise ValidationError("chain length must be at least 1")
    return OperatorChain(operator_id, iterate_hash(seed, n), n)


class HashChainSigner:
    """Operator-side generator of reveals ``H^(n-1)(seed), H^(n-2)(seed), ..., seed``."""

    def __init__(self, operator_id, seed, n):
        if n < 1:
            raise ValidationError("chain length must be at least 1")
        self.operator_id = operator_id
        chain = [bytes(seed)]
        for _ in range(n):
            chain.append(sha256(chain[-1]))
        self._chain = chain
        self._used = 0
        self.n = n

    @property
    def anchor(self):
        return self._chain[self.n]

    def chain(self):
        return OperatorChain(self.operator_id, self.anchor, self.n)

    @property
    def remaining(self):
        return self.n - self._used

    def peek(self):
        if self._used >= self.n:
            raise ValidationError(f"hash chain of {self.operator_id} is exhausted")
        return self._chain[self.n - self._used - 1]

    def next_reveal(self):
        reveal = self.peek()
        self._used += 1
        return reveal


@dataclass(frozen=True)
class AuditEvent:
    sequence: int
    timestamp: str
    operator_id: str
    action: str
    amount_usd: float
    reveal_digest: str
    reason: str
    prev_digest: str
    event_digest: str = ""

    def body(self):
        d = asdict(self)
        d.pop("event_digest")
        return d

    def compute_digest(self):
        canonical = json.dumps(self.body(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class AuditVerification:
    ok: bool
    n_events: int
    final_digest: str
    error: str = ""
    index: int = -1


def verify_audit_log(events):
    """Replay the digest chain; report the first broken event, if any."""
    prev = GENESIS_DIGEST
    last_seq = -1
    for i, ev in enumerate(events):
        if ev.prev_digest != prev:
            return AuditVerification(False, i, prev, "prev_digest mismatch", i)
        if ev.sequence <= last_seq:
            return AuditVerification(False, i, prev, "sequence not increasing", i)
        if ev.action not in ACTIONS:
            return AuditVerification(False, i, prev, f"unknown action {ev.action!r}", i)
        if ev.compute_digest() != ev.event_digest:
            return AuditVerification(False, i, prev, "event_digest mismatch", i)
        prev = ev.event_digest
        last_seq = ev.sequence
    return AuditVerification(True, len(events), prev)


def read_audit_log(path):
    events = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(AuditEvent(**json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataError(f"line {line_no}: malformed audit event ({exc})") from None
    return events


def write_audit_log(events, path):
    with open(Path(path), "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: str


def _default_clock():
    return dt.datetime.now(dt.timezone.utc)


class SafeHouse:
    """Withdrawal gatekeeper. Mutating calls are serialized by an internal lock.

    Parameters
    ----------
    per_tx_limit_usd : float
        Largest single withdrawal.
    daily_limit_usd : float
        Largest total withdrawn per calendar day of the request timestamp.
    clock : callable, optional
        Returns the current ``datetime``; used when no ``at`` is passed.
    """

    def __init__(self, per_tx_limit_usd, daily_limit_usd=float("inf"), clock=None):
        if not per_tx_limit_usd > 0:
            raise ValidationError("per-transaction limit must be positive")
        self.per_tx_limit_cents = to_cents(per_tx_limit_usd)
        self.daily_limit_cents = (
            None if daily_limit_usd == float("inf") else to_cents(daily_limit_usd)
        )
        self.status = OPEN
        self.operators = {}
        self.audit_log = []
        self._daily = {}
        self._clock = clock or _default_clock
        self._mutex = threading.Lock()

    @classmethod
    def from_trade_bounds(cls, bounds, daily_limit_usd=float("inf"), clock=None):
        """Per-transaction limit equal to the largest allowed trade size."""
        sizes = [b.max_trade_usd for b in bounds.values() if b.tradeable]
        if not sizes:
            raise ValidationError("no tradeable asset to derive a limit from")
        return cls(max(sizes), daily_limit_usd, clock)

    # -- helpers -----------------------------------------------------------

    @property
    def head_digest(self):
        return self.audit_log[-1].event_digest if self.audit_log else GENESIS_DIGEST

    def _log(self, at, operator_id, action, amount_cents, reveal_digest, reason):
        ev = AuditEvent(len(self.audit_log), at.isoformat(), operator_id, action,
                        from_cents(amount_cents), reveal_digest, reason, self.head_digest)
        ev = AuditEvent(**{**asdict(ev), "event_digest": ev.compute_digest()})
        self.audit_log.append(ev)
        return ev

    def _lock(self, at, operator_id, reason):
        self.status = LOCKED
        self._log(at, operator_id, "lock", 0, "", reason)

    @staticmethod
    def _day(at):
        return at.date() if isinstance(at, dt.datetime) else at

    def add_operator(self, chain):
        """Register a chain; replacing one is allowed only once it is exhausted."""
        with self._mutex:
            old = self.operators.get(chain.operator_id)
            if old is not None and old.chain_length_remaining > 0:
                raise ValidationError(f"operator {chain.operator_id} already has a live chain")
            self.operators[chain.operator_id] = OperatorChain(
                chain.operator_id, chain.anchor, chain.chain_length_remaining
            )

    def withdrawn_on(self, day):
        return from_cents(self._daily.get(day, 0))

    # -- operations --------------------------------------------------------

    def request_withdrawal(self, operator_id, amount_usd, reveal, at=None):
        at = at or self._clock()
        cents = to_cents(amount_usd)
        with self._mutex:
            if self.status == LOCKED:
                self._log(at, operator_id, "reject", cents, "", "locked")
                return Decision(False, "locked")
            op = self.operators.get(operator_id)
            if op is None:
                self._log(at, operator_id, "reject", cents, "", "unknown operator")
                self._lock(at, operator_id, "unknown operator")
                return Decision(False, "unknown operator")
            if op.chain_length_remaining <= 0:
                self._log(at, operator_id, "reject", cents, "", "chain exhausted")
                return Decision(False, "chain exhausted")
            if sha256(bytes(reveal)) != op.anchor:
                self._log(at, operator_id, "reject", cents, "", "invalid reveal")
                self._lock(at, operator_id, "invalid reveal")
                return Decision(False, "invalid reveal")
            # amount checks come after authentication so probes cannot dodge the lock
            if cents <= 0:
                self._log(at, operator_id, "reject", cents, "", "non-positive amount")
                return Decision(False, "non-positive amount")
            if cents > self.per_tx_limit_cents:
                self._log(at, operator_id, "reject", cents, "", "per-transaction limit")
                return Decision(False, "per-transaction limit")
            day = self._day(at)
            spent = self._daily.get(day, 0)
            if self.daily_limit_cents is not None and spent + cents > self.daily_limit_cents:
                self._log(at, operator_id, "reject", cents, "", "daily limit")
                return Decision(False, "daily limit")
            op.anchor = bytes(reveal)
            op.chain_length_remaining -= 1
            self._daily[day] = spent + cents
            self._log(at, operator_id, "withdraw", cents, bytes(reveal).hex(), "accepted")
            return Decision(True, "accepted")

    def deposit(self, amount_usd, operator_id="", at=None):
        at = at or self._clock()
        with self._mutex:
            self._log(at, operator_id, "deposit", to_cents(amount_usd), "", "deposit")

    def lock(self, operator_id, reason="manual", at=None):
        at = at or self._clock()
        with self._mutex:
            self._lock(at, operator_id, reason)

    def unlock(self, approvals, required, at=None):
        """Reopen after ``required`` distinct operators present valid reveals.

        ``approvals`` is an iterable of ``(operator_id, reveal)``. Every valid
        reveal consumes a chain link even if the quorum is not reached.
        """
        if required < 1:
            raise ValidationError("quorum must be at least 1")
        at = at or self._clock()
        with self._mutex:
            if self.status != LOCKED:
                raise ValidationError("safe house is not locked")
            approved = []
            for operator_id, reveal in approvals:
                op = self.operators.get(operator_id)
                if op is None or operator_id in (a for a, _ in approved):
                    continue
                if op.chain_length_remaining <= 0 or sha256(bytes(reveal)) != op.anchor:
                    continue
                op.anchor = bytes(reveal)
                op.chain_length_remaining -= 1
                approved.append((operator_id, bytes(reveal).hex()))
            approved.sort()
            who = "+".join(a for a, _ in approved)
            digests = "+".join(r for _, r in approved)
            if len(approved) >= required:
                self.status = OPEN
                self._log(at, who, "unlock", 0, digests, f"quorum {len(approved)}/{required}")
                return Decision(True, "unlocked")
            self._log(at, who, "reject", 0, digests,
                      f"insufficient quorum {len(approved)}/{required}")
            return Decision(False, "insufficient quorum")

    def verify(self):
        return verify_audit_log(self.audit_log)
