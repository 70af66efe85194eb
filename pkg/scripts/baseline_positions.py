"""Sweep every two-member coalition against the single-circle protocol.

Prints one row per (N, distance) with the simulated success rate next to
the distances at which the attack is predicted to work.
"""

import argparse

from mqka import harness
from mqka.adversary import liu_distance_set


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--parties", default="3..10")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = harness.SweepGrid(
        parties=tuple(harness.parse_range(args.parties)), ts=(1,), coalition_sizes=(2,),
        placements="anchored", repetitions=args.reps, seed=args.seed,
    )
    print(f"{'N':>3} {'dist':>4} {'success':>8} {'predicted':>9}")
    for row in harness.sweep(grid):
        dist = int(row.label.split("members={0,")[1].rstrip("}"))
        predicted = dist in liu_distance_set(row.N)
        print(f"{row.N:>3} {dist:>4} {row.coalition_success_rate:>8.2f} {str(predicted):>9}")


if __name__ == "__main__":
    main()
