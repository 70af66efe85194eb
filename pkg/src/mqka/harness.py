"""Scenario files, repetition driver, parameter sweeps and report emission."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import itertools
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mqka.adversary import CoalitionSpec, LiuCollusion, execute_strategy, known_final_key_period
from mqka.errors import ConfigurationError, ResourceError, UsageError
from mqka.protocol import ProtocolConfig, build_topology, qubit_efficiency, run_session, xor_keys

EXPECTATIONS = ("agreement", "secure", "broken", "detected")
DEFAULT_MAX_POINTS = 5000


@dataclass(frozen=True)
class Scenario:
    config: ProtocolConfig
    coalition: CoalitionSpec = field(default_factory=CoalitionSpec)
    repetitions: int = 1
    label: str = ""
    expect: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.expect is not None and self.expect not in EXPECTATIONS:
            raise ConfigurationError(f"unknown expectation {self.expect!r}; expected one of {EXPECTATIONS}")
        self.coalition.validate(self.config.n_parties, self.config.key_length)

    @property
    def adversarial(self) -> bool:
        return self.coalition.strategy == "liu_collusion"


@dataclass(frozen=True)
class Verdict:
    reported_keys: tuple[np.ndarray | None, ...]
    true_key: np.ndarray
    aborted: bool
    honest_agreement: bool
    coalition_success: bool | None
    coincidence: bool | None
    detection_events: int
    mismatches: int
    known_at: int | None
    completion_period: int
    flips: int


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    verdicts: list[Verdict]

    def _rate(self, values: Iterable[bool]) -> float:
        values = list(values)
        return sum(values) / len(values)

    @property
    def honest_agreement_rate(self) -> float:
        return self._rate(v.honest_agreement for v in self.verdicts)

    @property
    def coalition_success_rate(self) -> float | None:
        if not self.scenario.adversarial:
            return None
        return self._rate(bool(v.coalition_success) for v in self.verdicts)

    @property
    def coincidence_rate(self) -> float | None:
        if not self.scenario.adversarial:
            return None
        return self._rate(bool(v.coincidence) for v in self.verdicts)

    @property
    def detection_rate(self) -> float:
        return self._rate(v.detection_events > 0 for v in self.verdicts)

    @property
    def detection_events(self) -> int:
        return sum(v.detection_events for v in self.verdicts)


def derive_seed(master: int, *labels: int | str) -> int:
    """Keyed hash of ``labels`` under ``master``, as an unsigned 64-bit seed."""
    h = hashlib.blake2b(key=master.to_bytes(8, "little"), digest_size=8)
    for label in labels:
        h.update(str(label).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def run_repetition(scenario: Scenario, rep: int) -> Verdict:
    cfg = scenario.config
    rng = np.random.default_rng(derive_seed(cfg.seed, rep, "keys"))
    keys = rng.integers(0, 2, size=(cfg.n_parties, cfg.key_length), dtype=np.uint8)
    strategy = execute_strategy(scenario.coalition)
    session = run_session(cfg, keys, strategy, seed=derive_seed(cfg.seed, rep, "session"))

    true_key = xor_keys(keys)
    measured = [p.final_key for p in session.participants]
    if isinstance(strategy, LiuCollusion):
        reported = tuple(strategy.reported_key(i, k) for i, k in enumerate(measured))
    else:
        reported = tuple(measured)
    members = scenario.coalition.members if scenario.adversarial else frozenset()
    honest = [i for i in range(cfg.n_parties) if i not in members]
    honest_agreement = not session.aborted and all(np.array_equal(reported[i], true_key) for i in honest)

    coalition_success = coincidence = None
    known_at = None
    flips = 0
    if scenario.adversarial:
        expected = scenario.coalition.expected_key
        coincidence = bool(np.array_equal(expected, true_key))
        forced = not session.aborted and all(np.array_equal(reported[i], expected) for i in honest)
        coalition_success = forced and not coincidence
        known_at = strategy.memory.final_key_known_at if strategy.memory else None
        flips = len(strategy.flips)

    failed = [e for e in session.transcript.events if e.kind == "Detect" and not e.passed]
    return Verdict(
        reported_keys=reported,
        true_key=true_key,
        aborted=session.aborted,
        honest_agreement=honest_agreement,
        coalition_success=coalition_success,
        coincidence=coincidence,
        detection_events=len(failed),
        mismatches=sum(max(e.mismatches, 0) for e in session.transcript.events if e.kind == "Detect"),
        known_at=known_at,
        completion_period=session.period,
        flips=flips,
    )


def run_scenario(s: Scenario) -> ScenarioResult:
    return ScenarioResult(s, [run_repetition(s, rep) for rep in range(s.repetitions)])


# --------------------------------------------------------------------------
# report rows


def _fmt_fraction(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


COLUMNS = (
    "label",
    "N",
    "t",
    "kappa",
    "kappa_decimal",
    "repetitions",
    "honest_agreement_rate",
    "coalition_success_rate",
    "coincidence_rate",
    "detection_rate",
    "qubit_efficiency",
    "qubit_efficiency_decimal",
    "seed",
)


@dataclass(frozen=True)
class ReportRow:
    label: str
    N: int
    t: int
    kappa: Fraction
    repetitions: int
    honest_agreement_rate: float
    coalition_success_rate: float | None
    coincidence_rate: float | None
    detection_rate: float
    qubit_efficiency: Fraction
    seed: int

    def __post_init__(self):
        for name in ("honest_agreement_rate", "coalition_success_rate", "coincidence_rate", "detection_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_result(cls, result: ScenarioResult) -> "ReportRow":
        cfg = result.scenario.config
        return cls(
            label=result.scenario.label,
            N=cfg.n_parties,
            t=cfg.t,
            kappa=cfg.kappa,
            repetitions=result.scenario.repetitions,
            honest_agreement_rate=result.honest_agreement_rate,
            coalition_success_rate=result.coalition_success_rate,
            coincidence_rate=result.coincidence_rate,
            detection_rate=result.detection_rate,
            qubit_efficiency=qubit_efficiency(cfg.n_parties, cfg.t, cfg.kappa),
            seed=cfg.seed,
        )

    def record(self) -> dict:
        return {
            "label": self.label,
            "N": self.N,
            "t": self.t,
            "kappa": _fmt_fraction(self.kappa),
            "kappa_decimal": float(self.kappa),
            "repetitions": self.repetitions,
            "honest_agreement_rate": self.honest_agreement_rate,
            "coalition_success_rate": self.coalition_success_rate,
            "coincidence_rate": self.coincidence_rate,
            "detection_rate": self.detection_rate,
            "qubit_efficiency": _fmt_fraction(self.qubit_efficiency),
            "qubit_efficiency_decimal": float(self.qubit_efficiency),
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ReportRow":
        def opt_float(v):
            return None if v in (None, "") else float(v)

        return cls(
            label=str(rec["label"]),
            N=int(rec["N"]),
            t=int(rec["t"]),
            kappa=Fraction(rec["kappa"]),
            repetitions=int(rec["repetitions"]),
            honest_agreement_rate=float(rec["honest_agreement_rate"]),
            coalition_success_rate=opt_float(rec["coalition_success_rate"]),
            coincidence_rate=opt_float(rec["coincidence_rate"]),
            detection_rate=float(rec["detection_rate"]),
            qubit_efficiency=Fraction(rec["qubit_efficiency"]),
            seed=int(rec["seed"]),
        )


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_records(records: Sequence[dict], fmt: str) -> bytes:
    """Serialise flat records; column order follows the first record."""
    if fmt in ("json", "jsonl", "json-lines"):
        text = "".join(json.dumps(r, separators=(", ", ": "), ensure_ascii=False) + "\n" for r in records)
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if records:
            writer.writerow(list(records[0]))
        for r in records:
            writer.writerow([_csv_cell(v) for v in r.values()])
        text = buf.getvalue()
    else:
        raise UsageError(f"unknown report format {fmt!r}; use json or csv")
    return text.encode("utf-8")


def emit_report(rows: Sequence[ReportRow], fmt: str = "json") -> bytes:
    if fmt == "csv" and not rows:
        return (",".join(COLUMNS) + "\n").encode("utf-8")
    return emit_records([r.record() for r in rows], fmt)


def parse_report(data: bytes, fmt: str = "json") -> list[ReportRow]:
    text = data.decode("utf-8")
    if fmt in ("json", "jsonl", "json-lines"):
        return [ReportRow.from_record(json.loads(line)) for line in text.splitlines() if line]
    if fmt == "csv":
        return [ReportRow.from_record(rec) for rec in csv.DictReader(io.StringIO(text))]
    raise UsageError(f"unknown report format {fmt!r}; use json or csv")


def check_expectation(result: ScenarioResult, expect: str | None) -> bool:
    """Whether the security property a scenario asserts actually held."""
    if expect is None:
        return True
    if expect == "agreement":
        return result.honest_agreement_rate == 1.0
    if expect == "secure":
        return not result.coalition_success_rate
    if expect == "broken":
        return result.coalition_success_rate == 1.0
    if expect == "detected":
        return result.detection_rate > 0.0
    raise ConfigurationError(f"unknown expectation {expect!r}")


# --------------------------------------------------------------------------
# scenario / grid files


def parse_hex_key(text: str, key_length: int) -> np.ndarray:
    text = text.strip().lower().removeprefix("0x")
    if not re.fullmatch(r"[0-9a-f]+", text):
        raise ConfigurationError(f"expected key {text!r} is not hex")
    value = int(text, 16)
    if value >> key_length:
        raise ConfigurationError(f"expected key 0x{text} does not fit in {key_length} bits")
    return np.array([(value >> (key_length - 1 - i)) & 1 for i in range(key_length)], dtype=np.uint8)


def parse_members(text: str) -> frozenset[int]:
    text = text.strip()
    if not text:
        return frozenset()
    try:
        return frozenset(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad member list {text!r}") from None


def parse_channels(text: str) -> frozenset[tuple[int, int]] | None:
    text = text.strip()
    if text in ("", "all"):
        return None
    out = set()
    for item in text.split(","):
        a, sep, b = item.strip().partition("-")
        if not sep:
            raise ConfigurationError(f"channel {item!r} must look like sender-receiver")
        out.add((int(a), int(b)))
    return frozenset(out)


def parse_range(text: str) -> list[int]:
    """``"3..8"`` or ``"1,2,4"`` or ``"5"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        lo, sep, hi = part.partition("..")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(part)])
        except ValueError:
            raise ConfigurationError(f"bad integer range {text!r}") from None
    return out


_SCENARIO_KEYS = {
    "protocol": {"parties", "t", "key_length", "decoys_per_hop", "error_threshold"},
    "adversary": {"strategy", "members", "expected", "channels"},
    "run": {"label", "repetitions", "seed", "expect"},
}


def _read_ini(text: str, allowed: dict[str, set[str]]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from None
    for section in cp.sections():
        if section not in allowed:
            raise ConfigurationError(f"unknown section [{section}]")
        unknown = set(cp[section]) - allowed[section]
        if unknown:
            raise ConfigurationError(f"unknown key(s) {sorted(unknown)} in [{section}]")
    return cp


def _get_int(cp, section, key, default=None) -> int:
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigurationError(f"missing [{section}] {key}")
        return default
    try:
        return int(cp.get(section, key), 0)
    except ValueError:
        raise ConfigurationError(f"[{section}] {key} must be an integer") from None


def parse_scenario(text: str) -> Scenario:
    cp = _read_ini(text, _SCENARIO_KEYS)
    n = _get_int(cp, "protocol", "key_length", 32)
    config = ProtocolConfig(
        n_parties=_get_int(cp, "protocol", "parties"),
        t=_get_int(cp, "protocol", "t", 1),
        key_length=n,
        decoys_per_hop=_get_int(cp, "protocol", "decoys_per_hop", 0),
        seed=_get_int(cp, "run", "seed", 0),
        error_threshold=float(cp.get("protocol", "error_threshold", fallback="0")),
    )
    strategy = cp.get("adversary", "strategy", fallback="honest")
    expected = cp.get("adversary", "expected", fallback=None)
    coalition = CoalitionSpec(
        members=parse_members(cp.get("adversary", "members", fallback="")),
        strategy=strategy,
        expected_key=None if expected is None else parse_hex_key(expected, n),
        channels=parse_channels(cp.get("adversary", "channels", fallback=""))
        if strategy == "intercept_resend_eve" else None,
    )
    return Scenario(
        config=config,
        coalition=coalition,
        repetitions=_get_int(cp, "run", "repetitions", 1),
        label=cp.get("run", "label", fallback=""),
        expect=cp.get("run", "expect", fallback=None),
    )


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# sweeps


_GRID_KEYS = {
    "grid": {
        "parties", "t", "key_length", "decoys_per_hop", "error_threshold",
        "coalition_size", "placements", "strategy", "expected",
        "repetitions", "seed", "label", "max_points",
    },
}


@dataclass(frozen=True)
class SweepGrid:
    parties: tuple[int, ...]
    ts: tuple[int, ...]
    key_length: int = 32
    decoys_per_hop: int = 0
    error_threshold: float = 0.0
    # empty means an honest-only grid
    coalition_sizes: tuple[int, ...] = ()
    # "all" enumerates every placement, "anchored" only those containing P0
    placements: str = "all"
    expected: str | None = None
    repetitions: int = 1
    seed: int = 0
    label: str = "sweep"
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        if not self.parties or not self.ts:
            raise ConfigurationError("sweep grid needs at least one N and one t")
        if self.placements not in ("all", "anchored"):
            raise ConfigurationError("placements must be 'all' or 'anchored'")


def parse_grid(text: str) -> SweepGrid:
    cp = _read_ini(text, _GRID_KEYS)
    if not cp.has_section("grid"):
        raise ConfigurationError("grid file needs a [grid] section")
    g = cp["grid"]
    strategy = g.get("strategy", "liu_collusion" if "coalition_size" in g else "honest")
    if strategy not in ("honest", "liu_collusion"):
        raise ConfigurationError("sweeps support strategy honest or liu_collusion")
    sizes = tuple(parse_range(g["coalition_size"])) if strategy == "liu_collusion" and "coalition_size" in g else ()
    if strategy == "liu_collusion" and not sizes:
        raise ConfigurationError("liu_collusion sweep needs coalition_size")
    return SweepGrid(
        parties=tuple(parse_range(g.get("parties", ""))) if "parties" in g else (),
        ts=tuple(parse_range(g["t"])) if "t" in g else (1,),
        key_length=int(g.get("key_length", "32")),
        decoys_per_hop=int(g.get("decoys_per_hop", "0")),
        error_threshold=float(g.get("error_threshold", "0")),
        coalition_sizes=sizes,
        placements=g.get("placements", "all"),
        expected=g.get("expected"),
        repetitions=int(g.get("repetitions", "1")),
        seed=int(g.get("seed", "0"), 0),
        label=g.get("label", "sweep"),
        max_points=int(g.get("max_points", str(DEFAULT_MAX_POINTS))),
    )


def load_grid(path: str | Path) -> SweepGrid:
    return parse_grid(Path(path).read_text(encoding="utf-8"))


def _placements(n_parties: int, size: int, mode: str) -> Iterable[tuple[int, ...]]:
    for combo in itertools.combinations(range(n_parties), size):
        if mode == "all" or 0 in combo:
            yield combo


def grid_scenarios(grid: SweepGrid) -> list[Scenario]:
    """Expand a grid into scenarios in deterministic order (N, t, size, placement)."""
    out: list[Scenario] = []
    for N in grid.parties:
        for t in grid.ts:
            if not 1 <= t < N:
                continue
            config = ProtocolConfig(N, t, grid.key_length, grid.decoys_per_hop, grid.seed, grid.error_threshold)
            if not grid.coalition_sizes:
                out.append(Scenario(config, CoalitionSpec(), grid.repetitions, f"{grid.label} N={N} t={t}"))
            for size in grid.coalition_sizes:
                if not 1 <= size <= N:
                    continue
                for combo in _placements(N, size, grid.placements):
                    if grid.expected is not None:
                        expected = parse_hex_key(grid.expected, grid.key_length)
                    else:
                        erng = np.random.default_rng(derive_seed(grid.seed, "expected", N, t, *combo))
                        expected = erng.integers(0, 2, grid.key_length, dtype=np.uint8)
                    members = "{" + ",".join(map(str, combo)) + "}"
                    out.append(Scenario(
                        config,
                        CoalitionSpec(frozenset(combo), "liu_collusion", expected),
                        grid.repetitions,
                        f"{grid.label} N={N} t={t} members={members}",
                    ))
            if len(out) > grid.max_points:
                raise ResourceError(f"grid expands past max_points={grid.max_points}")
    return out


def _row_for(s: Scenario) -> ReportRow:
    return ReportRow.from_result(run_scenario(s))


def sweep(grid: SweepGrid, workers: int = 1) -> list[ReportRow]:
    scenarios = grid_scenarios(grid)
    if not scenarios:
        raise ConfigurationError("sweep grid contains no valid (N, t) point")
    if workers <= 1:
        return [_row_for(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_row_for, scenarios, chunksize=4))


def with_overrides(
    s: Scenario,
    seed: int | None = None,
    repetitions: int | None = None,
    error_threshold: float | None = None,
) -> Scenario:
    cfg = s.config
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if error_threshold is not None:
        cfg = replace(cfg, error_threshold=error_threshold)
    return replace(s, config=cfg, repetitions=s.repetitions if repetitions is None else repetitions)


def attack_scenario(
    n_parties: int,
    t: int,
    members: frozenset[int],
    expected_hex: str,
    key_length: int | None = None,
    decoys_per_hop: int = 8,
    repetitions: int = 1,
    seed: int = 0,
    error_threshold: float = 0.0,
) -> Scenario:
    n = key_length or 4 * len(expected_hex.strip().lower().removeprefix("0x"))
    config = ProtocolConfig(n_parties, t, n, decoys_per_hop, seed, error_threshold)
    coalition = CoalitionSpec(members, "liu_collusion", parse_hex_key(expected_hex, n))
    label = f"attack N={n_parties} t={t} members={{{','.join(map(str, sorted(members)))}}}"
    return Scenario(config, coalition, repetitions, label)


def oracle_known_at(s: Scenario) -> int | None:
    return known_final_key_period(build_topology(s.config.n_parties, s.config.t), s.coalition)
