"""Collusion and eavesdropping adversaries, plus the schedule-walk oracle.

The coalition's knowledge is tracked as GF(2) combinations of key indices:
a member holding a coalition-owned sequence learns the XOR of every key
encoded on it so far.  The final key is known once the all-ones vector is
in the span of those observations plus the members' own keys.

Knowledge and encoding are ordered inside a period by :class:`Stage`: a
member holding a sequence syncs before anyone encodes, while returned
sequences are only read at the close of the completion period.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from mqka import qstate
from mqka.errors import ConfigurationError, StrategyError
from mqka.protocol import EncodeTurn, SessionState, Strategy, Topology, TravelMessage

STRATEGIES = ("honest", "liu_collusion", "intercept_resend_eve")


def liu_distance_set(n_parties: int) -> frozenset[int]:
    """Ring distances at which two colluders control the baseline protocol."""
    if n_parties < 2:
        raise ConfigurationError("need at least 2 participants")
    if n_parties % 2 == 0:
        return frozenset({n_parties // 2})
    return frozenset({(n_parties - 1) // 2, (n_parties + 1) // 2})


@dataclass(frozen=True)
class CoalitionSpec:
    members: frozenset[int] = frozenset()
    strategy: str = "honest"
    expected_key: np.ndarray | None = None
    # intercept_resend_eve only: attacked (sender, receiver) hops, None = every hop
    channels: frozenset[tuple[int, int]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "liu_collusion":
            if not self.members:
                raise ConfigurationError("liu_collusion needs at least one member")
            if self.expected_key is None:
                raise ConfigurationError("liu_collusion needs an expected key")
            object.__setattr__(self, "expected_key", np.asarray(self.expected_key, dtype=np.uint8))
        elif self.expected_key is not None:
            raise ConfigurationError("expected_key only applies to liu_collusion")
        if self.channels is not None:
            if self.strategy != "intercept_resend_eve":
                raise ConfigurationError("channels only apply to intercept_resend_eve")
            object.__setattr__(self, "channels", frozenset((int(a), int(b)) for a, b in self.channels))

    def validate(self, n_parties: int, key_length: int | None = None) -> None:
        bad = [m for m in self.members if not 0 <= m < n_parties]
        if bad:
            raise ConfigurationError(f"coalition members {sorted(bad)} outside 0..{n_parties - 1}")
        if key_length is not None and self.expected_key is not None and self.expected_key.size != key_length:
            raise ConfigurationError(f"expected key has {self.expected_key.size} bits, key_length is {key_length}")


class Stage(enum.IntEnum):
    RECEIVE = 0
    ENCODE = 1
    RETURN = 2


class Moment(NamedTuple):
    period: int
    stage: Stage


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


# --------------------------------------------------------------------------
# schedule-walk oracle (masks only, no quantum state)


def knowledge_events(topology: Topology, members: frozenset[int]) -> list[tuple[Moment, int]]:
    """Every ``(moment, mask)`` the coalition learns, in time order."""
    events = [(Moment(1, Stage.RECEIVE), 1 << m) for m in sorted(members)]
    for owner in sorted(members):
        for j in range(topology.t):
            enc = topology.encoders(owner, j)
            for pos, holder in enumerate(enc):
                if holder in members:
                    events.append((Moment(pos + 2, Stage.RECEIVE), _mask(enc[:pos])))
            events.append((Moment(topology.completion_period, Stage.RETURN), _mask(enc)))
    events.sort(key=lambda e: e[0])
    return events


def _spans(rows: list[int], target: int) -> bool:
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    for b in sorted(basis, reverse=True):
        target = min(target, target ^ b)
    return target == 0


def known_final_key_moment(topology: Topology, coalition: CoalitionSpec) -> Moment | None:
    members = coalition.members
    if not members:
        return None
    full = (1 << topology.n_parties) - 1
    events = knowledge_events(topology, members)
    rows: list[int] = []
    for moment, group in itertools.groupby(events, key=lambda e: e[0]):
        rows.extend(mask for _, mask in group)
        if _spans(rows, full):
            return moment
    return None


def known_final_key_period(topology: Topology, coalition: CoalitionSpec) -> int | None:
    """First period at which the coalition can compute the final key."""
    moment = known_final_key_moment(topology, coalition)
    return None if moment is None else moment.period


@dataclass(frozen=True)
class FeasibilityReport:
    known_at: int | None
    known_stage: Stage | None
    flip_possible: dict[int, bool]
    # per honest owner: the single turn a simulation would use to flip
    flip_turns: dict[int, EncodeTurn]
    overall: bool


def flip_feasibility(topology: Topology, coalition: CoalitionSpec) -> FeasibilityReport:
    moment = known_final_key_moment(topology, coalition)
    honest = [i for i in range(topology.n_parties) if i not in coalition.members]
    possible = {i: False for i in honest}
    plan: dict[int, EncodeTurn] = {}
    if moment is not None:
        eligible = sorted(
            (turn for turn in topology.turns()
             if turn.holder in coalition.members and turn.owner not in coalition.members
             and Moment(turn.period, Stage.ENCODE) > moment),
            key=lambda turn: (turn.period, turn.holder, turn.arc),
        )
        for turn in eligible:
            possible[turn.owner] = True
            plan.setdefault(turn.owner, turn)
    return FeasibilityReport(
        known_at=None if moment is None else moment.period,
        known_stage=None if moment is None else moment.stage,
        flip_possible=possible,
        flip_turns=plan,
        overall=moment is not None and all(possible.values()),
    )


# --------------------------------------------------------------------------
# coalition memory and quantum-level observation


class XorBasis:
    """Incremental GF(2) elimination over ``(index mask, key value)`` rows."""

    def __init__(self):
        self.rows: list[tuple[int, np.ndarray]] = []

    def add(self, mask: int, value: np.ndarray) -> None:
        value = value.copy()
        for m, v in self.rows:
            if mask ^ m < mask:
                mask ^= m
                value ^= v
        if mask:
            self.rows.append((mask, value))
            self.rows.sort(key=lambda r: r[0], reverse=True)

    def solve(self, target: int, key_length: int) -> np.ndarray | None:
        value = np.zeros(key_length, dtype=np.uint8)
        for m, v in self.rows:
            if target ^ m < target:
                target ^= m
                value ^= v
        return value if target == 0 else None


@dataclass
class CoalitionMemory:
    members: frozenset[int]
    n_parties: int
    key_length: int
    pooled_keys: dict[int, np.ndarray] = field(default_factory=dict)
    learned_segments: dict[tuple[int, int], list[tuple[int, np.ndarray, int]]] = field(default_factory=dict)
    final_key_known_at: int | None = None
    final_key: np.ndarray | None = None
    basis: XorBasis = field(default_factory=XorBasis)

    @classmethod
    def pool(cls, session: SessionState, members: frozenset[int]) -> "CoalitionMemory":
        cfg = session.config
        mem = cls(members, cfg.n_parties, cfg.key_length)
        for m in sorted(members):
            mem.pooled_keys[m] = session.participants[m].key.copy()
            mem.basis.add(1 << m, mem.pooled_keys[m])
        mem._check(period=1)
        return mem

    def _check(self, period: int) -> None:
        if self.final_key_known_at is not None:
            return
        value = self.basis.solve((1 << self.n_parties) - 1, self.key_length)
        if value is not None:
            self.final_key_known_at = period
            self.final_key = value


def coalition_observe(
    memory: CoalitionMemory,
    member: int,
    msg: TravelMessage,
    rng: np.random.Generator,
    period: int,
) -> CoalitionMemory:
    """Member and owner jointly Z-measure the sequence; record the XOR seen so far."""
    if member not in memory.members:
        raise StrategyError(f"P{member} is not a coalition member")
    if msg.owner not in memory.members:
        raise StrategyError(f"home halves of P{msg.owner}'s sequence are not available to the coalition")
    holder = msg.owner if msg.returned else msg.receiver
    if holder != member:
        raise StrategyError(f"P{member} does not hold sequence ({msg.owner}, {msg.arc})")
    r, s, msg.pairs = qstate.measure_pair_z_collapse(msg.pairs, rng)
    value = (r ^ s).astype(np.uint8)
    mask = _mask(msg.schedule[: msg.hop])
    memory.learned_segments.setdefault((msg.owner, msg.arc), []).append((mask, value, period))
    memory.basis.add(mask, value)
    memory._check(period)
    return memory


# --------------------------------------------------------------------------
# strategies


class LiuCollusion(Strategy):
    """Two-stage collusion: steal the final key, then flip every honest owner once."""

    def __init__(self, coalition: CoalitionSpec):
        self.coalition = coalition
        self.memory: CoalitionMemory | None = None
        self.flips: dict[int, tuple[int, int]] = {}

    def _mem(self, session: SessionState) -> CoalitionMemory:
        if self.memory is None:
            self.memory = CoalitionMemory.pool(session, self.coalition.members)
        return self.memory

    def observe(self, session, holder, msg, rng):
        mem = self._mem(session)
        if holder in mem.members and msg.owner in mem.members:
            coalition_observe(mem, holder, msg, rng, session.period)

    def on_return(self, session, msg, rng):
        mem = self._mem(session)
        if msg.owner in mem.members:
            coalition_observe(mem, msg.owner, msg, rng, session.period)

    def encoding_key(self, session, holder, msg):
        mem = self._mem(session)
        key = session.participants[holder].key
        if (
            holder in mem.members
            and msg.owner not in mem.members
            and mem.final_key is not None
            and msg.owner not in self.flips
        ):
            delta = self.coalition.expected_key ^ mem.final_key
            if delta.any():
                self.flips[msg.owner] = (holder, session.period)
                return key ^ delta
        return key

    def reported_key(self, index: int, measured: np.ndarray | None) -> np.ndarray | None:
        if index in self.coalition.members and measured is not None:
            return self.coalition.expected_key.copy()
        return measured


class InterceptResendEve(Strategy):
    """External eavesdropper measuring every qubit on the chosen hops in a random basis."""

    def __init__(self, channels: frozenset[tuple[int, int]] | None = None):
        self.channels = channels
        self.attacked_hops = 0

    def intercept(self, session, msg, rng):
        if self.channels is not None and (msg.sender, msg.receiver) not in self.channels:
            return
        self.attacked_hops += 1
        if len(msg.decoy_positions):
            guess = rng.integers(0, 2, size=len(msg.decoy_positions))
            _, msg.decoys = qstate.intercept_resend(msg.decoys, guess, rng)
        guess = rng.integers(0, 2, size=len(msg.pairs))
        _, msg.pairs = qstate.intercept_resend_travel(msg.pairs, guess, rng)


def execute_strategy(coalition: CoalitionSpec) -> Strategy:
    if coalition.strategy == "liu_collusion":
        return LiuCollusion(coalition)
    if coalition.strategy == "intercept_resend_eve":
        return InterceptResendEve(coalition.channels)
    return Strategy()
