"""Check every coalition of at most t members against the sub-circle protocol.

The schedule-walk oracle covers all placements; a random subset is also
simulated end to end.
"""

import argparse
import itertools

import numpy as np

from mqka import harness
from mqka.adversary import CoalitionSpec, flip_feasibility, known_final_key_period
from mqka.protocol import ProtocolConfig, build_topology


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--parties", default="3..8")
    ap.add_argument("--fraction", type=float, default=0.2)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    placements = [
        (N, t, frozenset(m))
        for N in harness.parse_range(args.parties)
        for t in range(2, N // 2 + 1)
        for size in range(1, t + 1)
        for m in itertools.combinations(range(N), size)
    ]
    flippable = [p for p in placements if flip_feasibility(build_topology(p[0], p[1]), CoalitionSpec(p[2])).overall]
    print(f"oracle: {len(placements)} placements, {len(flippable)} can force the key")

    rng = np.random.default_rng(args.seed)
    k = round(args.fraction * len(placements))
    for i in sorted(rng.choice(len(placements), size=k, replace=False)):
        N, t, members = placements[i]
        expected = rng.integers(0, 2, 32, dtype=np.uint8)
        s = harness.Scenario(
            ProtocolConfig(N, t, 32, 8, seed=harness.derive_seed(args.seed, i)),
            CoalitionSpec(members, "liu_collusion", expected),
            args.reps,
        )
        res = harness.run_scenario(s)
        known = known_final_key_period(build_topology(N, t), s.coalition)
        print(f"N={N} t={t} members={sorted(members)} known_at={known} success={res.coalition_success_rate:.2f}")


if __name__ == "__main__":
    main()
