"""Tabulate exact qubit efficiency over N, t and the detection rate."""

import argparse
from fractions import Fraction

from mqka import harness
from mqka.protocol import qubit_efficiency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--parties", default="2..12")
    ap.add_argument("--kappa", default="0,1/2,1,2")
    args = ap.parse_args()

    kappas = [Fraction(k) for k in args.kappa.split(",")]
    print("N,t," + ",".join(f"kappa={k}" for k in kappas))
    for N in harness.parse_range(args.parties):
        for t in range(1, N):
            cells = [str(qubit_efficiency(N, t, k)) for k in kappas]
            print(f"{N},{t}," + ",".join(cells))


if __name__ == "__main__":
    main()
