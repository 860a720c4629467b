#!/usr/bin/env python3
"""Verify the strand-decomposition sandwich over a parameter sweep and
print the relative slack (upper - lower) / value by depth.

Usage: python scripts/sandwich_sweep.py [--d 3] [--n 4096] [--paths 200]
"""

import argparse
import math

from walklab.analytic import dyadic_ladder
from walklab.decomposition import build_strand_tree, sandwich_profile
from walklab.lattice import increments_for


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--L", type=int, default=6)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--q", type=float, nargs="+", default=[1.5, 2.0, 2.5, 3.0])
    args = ap.parse_args()

    sub = dyadic_ladder(args.n)
    slack = {(q, L): [] for q in args.q for L in range(1, args.L + 1)}
    violations = 0
    for i in range(args.paths):
        tree = build_strand_tree(increments_for(args.seed, i, args.d, args.n), args.L)
        for q in args.q:
            for rep in sandwich_profile(tree, q, sub)[1:]:
                violations += not rep.holds()
                slack[(q, rep.depth)].append(
                    (float(rep.upper) - float(rep.lower)) / float(rep.value)
                )
    print(f"d={args.d} n={args.n} paths={args.paths}: violations={violations}")
    print(f"{'q':>5} " + " ".join(f"L={L:<8d}" for L in range(1, args.L + 1)))
    for q in args.q:
        means = [math.fsum(slack[(q, L)]) / len(slack[(q, L)]) for L in range(1, args.L + 1)]
        print(f"{q:5.2f} " + " ".join(f"{m:<10.4f}" for m in means))
    return 0 if violations == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
