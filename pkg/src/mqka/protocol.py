"""Lock-step engine for the t-arc circle-type key agreement.

Each participant splits the ring into ``t`` arcs and sends one travel
sequence around each.  Within a period every live sequence goes through
receive -> detect -> sync -> encode -> send.  Sequences sent home wait
for the common completion period, ``1 + `` the longest arc's encoder
count, and every owner runs its final check at the close of that period,
after its encodes.  With ``t = 1`` this is the plain single-circle
protocol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from mqka import qstate
from mqka.errors import (
    ConfigurationError,
    DomainError,
    ProtocolViolation,
    ScheduleViolation,
    StateError,
)
from mqka.qstate import Basis, DecoyRecord, PairState, QubitState


@dataclass(frozen=True)
class ProtocolConfig:
    n_parties: int
    t: int
    key_length: int
    decoys_per_hop: int = 0
    seed: int = 0
    error_threshold: float = 0.0

    def __post_init__(self):
        if self.n_parties < 2:
            raise ConfigurationError(f"need at least 2 participants, got {self.n_parties}")
        if not 1 <= self.t < self.n_parties:
            raise ConfigurationError(f"t must satisfy 1 <= t < N, got t={self.t}, N={self.n_parties}")
        if self.key_length < 1:
            raise ConfigurationError("key_length must be >= 1")
        if self.decoys_per_hop < 0:
            raise ConfigurationError("decoys_per_hop must be >= 0")
        if not 0.0 <= self.error_threshold < 1.0:
            raise ConfigurationError("error_threshold must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    @property
    def kappa(self) -> Fraction:
        """Detection rate: decoys per key-carrying qubit on each hop."""
        return Fraction(self.decoys_per_hop, self.key_length)


# --------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class EncodeTurn:
    owner: int
    arc: int
    position: int
    holder: int
    period: int


@dataclass(frozen=True)
class Topology:
    n_parties: int
    t: int
    # arcs[owner][j] is the ordered encoder list of owner's j-th sequence
    arcs: tuple[tuple[tuple[int, ...], ...], ...]

    def encoders(self, owner: int, arc: int) -> tuple[int, ...]:
        return self.arcs[owner][arc]

    def arc_length(self, arc: int) -> int:
        return len(self.arcs[0][arc])

    def last_encode_period(self, arc: int) -> int:
        return self.arc_length(arc) + 1

    @property
    def completion_period(self) -> int:
        """Period whose close brings every sequence back to its owner."""
        return max(self.last_encode_period(j) for j in range(self.t))

    def holder(self, owner: int, arc: int, period: int) -> int | None:
        """Participant that receives and encodes ``(owner, arc)`` in ``period``."""
        enc = self.arcs[owner][arc]
        pos = period - 2
        return enc[pos] if 0 <= pos < len(enc) else None

    def turns(self) -> Iterator[EncodeTurn]:
        for owner, owner_arcs in enumerate(self.arcs):
            for j, enc in enumerate(owner_arcs):
                for pos, holder in enumerate(enc):
                    yield EncodeTurn(owner, j, pos, holder, pos + 2)


def arc_offsets(n_parties: int, t: int, arc: int) -> range:
    """Ring offsets spanned by ``arc``; offset ``N`` is the owner itself."""
    return range(arc * n_parties // t + 1, (arc + 1) * n_parties // t + 1)


def build_topology(n_parties: int, t: int) -> Topology:
    if n_parties < 2 or not 1 <= t < n_parties:
        raise ConfigurationError(f"t must satisfy 1 <= t < N, got t={t}, N={n_parties}")
    arcs = []
    for owner in range(n_parties):
        owner_arcs = []
        for j in range(t):
            enc = tuple((owner + off) % n_parties for off in arc_offsets(n_parties, t, j) if off % n_parties)
            owner_arcs.append(enc)
        arcs.append(tuple(owner_arcs))
    return Topology(n_parties, t, tuple(arcs))


# --------------------------------------------------------------------------
# session state


class Status(enum.Enum):
    RUNNING = "running"
    ACCEPTED = "accepted"
    ABORTED = "aborted"


@dataclass
class ParticipantState:
    """One party.  Its home halves live in the joint pair arrays of its messages."""

    index: int
    key: np.ndarray
    status: Status = Status.RUNNING
    final_key: np.ndarray | None = None


@dataclass
class TravelMessage:
    owner: int
    arc: int
    period: int
    schedule: tuple[int, ...]
    pairs: PairState
    sender: int
    receiver: int
    hop: int = 0
    decoy_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    decoy_bases: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    decoy_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    decoys: QubitState = field(default_factory=lambda: QubitState(np.zeros((0, 2))))
    checked: bool = False
    returned: bool = False

    @property
    def payload_length(self) -> int:
        return len(self.pairs) + len(self.decoy_positions)

    @property
    def pair_positions(self) -> np.ndarray:
        mask = np.ones(self.payload_length, dtype=bool)
        mask[self.decoy_positions] = False
        return np.flatnonzero(mask)

    def payload(self) -> list[tuple[str, int]]:
        """Interleaved view: ``("pair", l)`` or ``("decoy", m)`` per slot."""
        slots: list[tuple[str, int]] = [("", 0)] * self.payload_length
        for m, pos in enumerate(self.decoy_positions):
            slots[pos] = ("decoy", m)
        for l, pos in enumerate(self.pair_positions):
            slots[pos] = ("pair", l)
        return slots

    def announce(self) -> list[DecoyRecord]:
        return [
            DecoyRecord(int(pos), Basis(int(b)), int(v))
            for pos, b, v in zip(self.decoy_positions, self.decoy_bases, self.decoy_bits)
        ]


@dataclass(frozen=True)
class Event:
    kind: str
    period: int
    owner: int = -1
    arc: int = -1
    actor: int = -1
    peer: int = -1
    mismatches: int = -1
    passed: bool | None = None


@dataclass
class Transcript:
    events: list[Event] = field(default_factory=list)

    def log(self, kind: str, period: int, **kw) -> None:
        self.events.append(Event(kind, period, **kw))

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def count(self, kind: str) -> int:
        return sum(e.kind == kind for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class DetectionOutcome:
    passed: bool
    mismatches: int
    checked: int


@dataclass
class SessionState:
    config: ProtocolConfig
    topology: Topology
    participants: list[ParticipantState]
    messages: dict[tuple[int, int], TravelMessage]
    rng: np.random.Generator
    period: int = 1
    transcript: Transcript = field(default_factory=Transcript)
    aborted: bool = False

    @property
    def in_flight(self) -> dict[tuple[int, int], TravelMessage]:
        return {k: m for k, m in self.messages.items() if not m.returned}

    @property
    def complete(self) -> bool:
        return not self.aborted and all(m.returned for m in self.messages.values())

    @property
    def running(self) -> bool:
        return not self.aborted and not self.complete


class Strategy:
    """Behaviour hooks called by :func:`run_period`.  The base class is honest."""

    def intercept(self, session: SessionState, msg: TravelMessage, rng: np.random.Generator) -> None:
        """Tamper with ``msg`` on the quantum channel before it is received."""

    def observe(self, session: SessionState, holder: int, msg: TravelMessage, rng: np.random.Generator) -> None:
        """Classical sync phase, after a passed detection and before encoding."""

    def encoding_key(self, session: SessionState, holder: int, msg: TravelMessage) -> np.ndarray:
        return session.participants[holder].key

    def on_return(self, session: SessionState, msg: TravelMessage, rng: np.random.Generator) -> None:
        """Owner has received and checked its returned sequence."""


HONEST = Strategy()


def _as_key(bits: Sequence[int] | np.ndarray | str, n: int | None = None) -> np.ndarray:
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1 or (arr > 1).any():
        raise ConfigurationError("keys must be flat bit strings")
    if n is not None and arr.size != n:
        raise ConfigurationError(f"key of length {arr.size}, expected {n}")
    return arr


def insert_decoys(msg: TravelMessage, d: int, rng: np.random.Generator) -> None:
    n = len(msg.pairs)
    msg.decoy_positions = np.sort(rng.choice(n + d, size=d, replace=False)) if d else np.zeros(0, dtype=int)
    msg.decoy_bases, msg.decoy_bits, msg.decoys = qstate.random_decoys(d, rng)


def init_session(config: ProtocolConfig, keys: Sequence, seed: int | None = None) -> SessionState:
    N, n = config.n_parties, config.key_length
    if len(keys) != N:
        raise ConfigurationError(f"{len(keys)} keys for {N} participants")
    keys = [_as_key(k, n) for k in keys]
    rng = np.random.default_rng(config.seed if seed is None else seed)
    topo = build_topology(N, config.t)
    session = SessionState(
        config=config,
        topology=topo,
        participants=[ParticipantState(i, k) for i, k in enumerate(keys)],
        messages={},
        rng=rng,
    )
    for owner in range(N):
        for j in range(config.t):
            sched = topo.encoders(owner, j)
            msg = TravelMessage(owner, j, 1, sched, qstate.prepare_pair(n), sender=owner, receiver=sched[0])
            insert_decoys(msg, config.decoys_per_hop, rng)
            session.messages[(owner, j)] = msg
            session.transcript.log("Send", 1, owner=owner, arc=j, actor=owner, peer=sched[0])
    return session


def detect_hop(
    msg: TravelMessage,
    announcement: Sequence[DecoyRecord],
    rng: np.random.Generator,
    error_threshold: float = 0.0,
) -> DetectionOutcome:
    """Receiver measures the announced decoys and strips them from the payload."""
    positions = np.array([r.position for r in announcement], dtype=int)
    lookup = {int(p): m for m, p in enumerate(msg.decoy_positions)}
    if len(set(positions.tolist())) != len(positions):
        raise ProtocolViolation("duplicate decoy position in announcement")
    try:
        rows = np.array([lookup[int(p)] for p in positions], dtype=int)
    except KeyError as exc:
        raise ProtocolViolation(f"announced position {exc.args[0]} is not a decoy") from None
    if len(rows):
        bases = np.array([r.basis for r in announcement])
        expected = np.array([r.bit for r in announcement])
        seen = qstate.measure_qubit(QubitState(msg.decoys.amplitudes[rows]), bases, rng)
        mismatches = int(np.count_nonzero(seen != expected))
    else:
        mismatches = 0
    checked = len(rows)
    passed = checked == 0 or mismatches / checked <= error_threshold
    msg.decoy_positions = np.zeros(0, dtype=int)
    msg.decoy_bases = msg.decoy_bits = np.zeros(0, dtype=int)
    msg.decoys = QubitState(np.zeros((0, 2)))
    msg.checked = passed
    return DetectionOutcome(passed, mismatches, checked)


def encode_hop(
    p: ParticipantState,
    msg: TravelMessage,
    rng: np.random.Generator,
    decoys_per_hop: int = 0,
    key: np.ndarray | None = None,
) -> TravelMessage:
    """Encode ``key`` (default: the participant's own) and forward with fresh decoys."""
    if msg.returned or msg.hop >= len(msg.schedule) or msg.schedule[msg.hop] != p.index:
        raise ScheduleViolation(f"P{p.index} is not scheduled to encode sequence ({msg.owner}, {msg.arc}) at hop {msg.hop}")
    if not msg.checked:
        raise StateError("encode_hop before a passed detection")
    bits = p.key if key is None else key
    msg.pairs = qstate.encode_bits(msg.pairs, bits)
    msg.hop += 1
    msg.sender = p.index
    msg.receiver = msg.schedule[msg.hop] if msg.hop < len(msg.schedule) else msg.owner
    msg.checked = False
    insert_decoys(msg, decoys_per_hop, rng)
    return msg


def _abort(session: SessionState, who: int) -> None:
    session.aborted = True
    for part in session.participants:
        part.status = Status.ABORTED
        part.final_key = None
    session.transcript.log("Abort", session.period, actor=who)


def _receive(session: SessionState, msg: TravelMessage, strategy: Strategy) -> bool:
    cfg = session.config
    strategy.intercept(session, msg, session.rng)
    session.transcript.log("Announce", session.period, owner=msg.owner, arc=msg.arc, actor=msg.sender, peer=msg.receiver)
    out = detect_hop(msg, msg.announce(), session.rng, cfg.error_threshold)
    session.transcript.log(
        "Detect", session.period, owner=msg.owner, arc=msg.arc, actor=msg.receiver,
        peer=msg.sender, mismatches=out.mismatches, passed=out.passed,
    )
    if not out.passed:
        _abort(session, msg.receiver)
    return out.passed


def run_period(session: SessionState, strategy: Strategy | None = None) -> SessionState:
    if not session.running:
        raise StateError("session is not running")
    strategy = strategy or HONEST
    session.period += 1
    k = session.period
    live = [
        msg for key, msg in sorted(session.messages.items())
        if not msg.returned and msg.hop < len(msg.schedule)
    ]

    for msg in live:
        if not _receive(session, msg, strategy):
            return session
    for msg in live:
        strategy.observe(session, msg.receiver, msg, session.rng)
    for msg in sorted(live, key=lambda m: (m.receiver, m.owner, m.arc)):
        holder = session.participants[msg.receiver]
        key = _as_key(strategy.encoding_key(session, holder.index, msg), session.config.key_length)
        encode_hop(holder, msg, session.rng, session.config.decoys_per_hop, key)
        msg.period = k
        session.transcript.log("Encode", k, owner=msg.owner, arc=msg.arc, actor=holder.index)
        session.transcript.log("Send", k, owner=msg.owner, arc=msg.arc, actor=holder.index, peer=msg.receiver)

    if k < session.topology.completion_period:
        return session
    for _, msg in sorted(session.messages.items()):
        if not _receive(session, msg, strategy):
            return session
        msg.returned = True
        strategy.on_return(session, msg, session.rng)
    return session


def run_session(
    config: ProtocolConfig,
    keys: Sequence,
    strategy: Strategy | None = None,
    seed: int | None = None,
) -> SessionState:
    """Initialise, run every period, and finalise when nobody aborted."""
    session = init_session(config, keys, seed)
    while session.running:
        run_period(session, strategy)
    if session.complete:
        finalize_keys(session, session.rng)
    return session


def finalize_keys(session: SessionState, rng: np.random.Generator) -> list[tuple[int, np.ndarray | None]]:
    if session.aborted:
        return [(p.index, None) for p in session.participants]
    if not session.complete:
        raise StateError("finalize_keys before every sub-circle has returned")
    out = []
    for part in session.participants:
        acc = part.key.copy()
        for j in range(session.config.t):
            msg = session.messages[(part.index, j)]
            r, s, msg.pairs = qstate.measure_pair_z_collapse(msg.pairs, rng)
            acc ^= (r ^ s).astype(np.uint8)
        part.final_key = acc
        part.status = Status.ACCEPTED
        session.transcript.log("FinalMeasure", session.period, actor=part.index)
        out.append((part.index, acc))
    return out


def xor_keys(keys: Sequence[np.ndarray]) -> np.ndarray:
    return np.bitwise_xor.reduce(np.asarray(keys, dtype=np.uint8), axis=0)


# --------------------------------------------------------------------------
# efficiency


def _rational(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def qubit_efficiency(n_parties: int, t: int, kappa) -> Fraction:
    """Shared-key bits per transmitted qubit: ``1 / ((kappa + 1) t N)``."""
    kappa = _rational(kappa)
    if n_parties < 2 or t < 1 or kappa < 0:
        raise DomainError(f"qubit_efficiency undefined for N={n_parties}, t={t}, kappa={kappa}")
    return 1 / ((kappa + 1) * t * n_parties)


def cabello_efficiency(c, q, b) -> Fraction:
    """Cabello's ratio ``c / (q + b)``."""
    denom = _rational(q) + _rational(b)
    if denom == 0:
        raise DomainError("q + b must be positive")
    return _rational(c) / denom


def protocol_qubit_count(n_parties: int, t: int, key_length: int, kappa) -> Fraction:
    """Qubits spent by all parties for one ``key_length``-bit key."""
    kappa = _rational(kappa)
    return (t * key_length + kappa * t * key_length) * n_parties
