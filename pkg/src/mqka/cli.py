"""Command-line entry point.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when a
security property asserted by the scenario (or ``--expect``) is violated.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from mqka import adversary, harness
from mqka.errors import MQKAError
from mqka.protocol import build_topology, qubit_efficiency

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master RNG seed (unsigned 64-bit)")
    p.add_argument("--reps", type=int, default=None, help="repetitions per scenario")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format (json = JSON lines)")
    p.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    p.add_argument("--threshold", type=float, default=None, help="tolerated decoy mismatch fraction per hop")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="mqka", description="Circle-type multiparty quantum key agreement simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run one scenario file")
    p.add_argument("scenario", type=Path)

    p = sub.add_parser("sweep", parents=[common], help="run every point of a grid file")
    p.add_argument("grid", type=Path)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("attack", parents=[common], help="simulate Liu's collusion attack")
    p.add_argument("--n", type=int, required=True, dest="n_parties")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--members", required=True, help="comma-separated participant indices")
    p.add_argument("--expected", required=True, help="key the coalition wants to force, in hex")
    p.add_argument("--key-length", type=int, default=None, help="default: 4 bits per hex digit")
    p.add_argument("--decoys", type=int, default=8, help="decoys per hop")
    p.add_argument("--expect", choices=("secure", "broken"), default=None)

    p = sub.add_parser("efficiency", parents=[common], help="qubit efficiency 1/((kappa+1) t N)")
    p.add_argument("--n", type=int, required=True, dest="n_parties")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--kappa", type=Fraction, required=True, help="detection rate, e.g. 1/2")

    p = sub.add_parser("positions", parents=[common], help="colluder distances that break t = 1")
    p.add_argument("--n", type=int, required=True, dest="n_parties")
    return parser


def _write(data: bytes, out: Path | None) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        out.write_bytes(data)


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _run(args) -> int:
    scenario = harness.with_overrides(harness.load_scenario(args.scenario), args.seed, args.reps, args.threshold)
    result = harness.run_scenario(scenario)
    _write(harness.emit_report([harness.ReportRow.from_result(result)], args.format), args.out)
    if not harness.check_expectation(result, scenario.expect):
        print(f"security property '{scenario.expect}' violated", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _sweep(args) -> int:
    grid = harness.load_grid(args.grid)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["repetitions"] = args.reps
    if args.threshold is not None:
        overrides["error_threshold"] = args.threshold
    if overrides:
        grid = harness.replace(grid, **overrides)
    rows = harness.sweep(grid, workers=args.workers)
    _write(harness.emit_report(rows, args.format), args.out)
    return EXIT_OK


def _attack(args) -> int:
    scenario = harness.attack_scenario(
        args.n_parties,
        args.t,
        harness.parse_members(args.members),
        args.expected,
        key_length=args.key_length,
        decoys_per_hop=args.decoys,
        repetitions=args.reps or 1,
        seed=args.seed or 0,
        error_threshold=args.threshold or 0.0,
    )
    topo = build_topology(args.n_parties, args.t)
    report = adversary.flip_feasibility(topo, scenario.coalition)
    result = harness.run_scenario(scenario)
    _write(harness.emit_report([harness.ReportRow.from_result(result)], args.format), args.out)
    print(
        f"oracle: known_at={report.known_at} completion={topo.completion_period} "
        f"flip_feasible={report.overall}",
        file=sys.stderr,
    )
    expect = {"secure": "secure", "broken": "broken", None: None}[args.expect]
    if not harness.check_expectation(result, expect):
        print(f"security property '{args.expect}' violated", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _efficiency(args) -> int:
    eta = qubit_efficiency(args.n_parties, args.t, args.kappa)
    rec = {
        "N": args.n_parties,
        "t": args.t,
        "kappa": _fmt(args.kappa),
        "kappa_decimal": float(args.kappa),
        "qubit_efficiency": _fmt(eta),
        "qubit_efficiency_decimal": float(eta),
    }
    _write(harness.emit_records([rec], args.format), args.out)
    return EXIT_OK


def _positions(args) -> int:
    dists = sorted(adversary.liu_distance_set(args.n_parties))
    recs = [{"N": args.n_parties, "distance": d} for d in dists]
    _write(harness.emit_records(recs, args.format), args.out)
    return EXIT_OK


COMMANDS = {
    "run": _run,
    "sweep": _sweep,
    "attack": _attack,
    "efficiency": _efficiency,
    "positions": _positions,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (MQKAError, ValueError, OSError) as exc:
        print(f"mqka {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
