#!/usr/bin/env python3
"""Scan the shape-transition diagnostic across q for a fixed dimension.

For each q on a grid straddling the critical exponent d/(d-2), report
the ladder level contributing most of the q-norm among the top-1% of
sampled q-norm values.  Below the critical point the excess lives in
the low bands (confinement); above it the maximal band climbs
(pile-up).

Usage: python scripts/shape_transition.py [--d 5] [--n 10000] [--samples 4000]
"""

import argparse

from walklab.analytic import critical_q
from walklab.montecarlo import level_profile


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--top-percent", type=float, default=1.0)
    args = ap.parse_args()

    qc = critical_q(args.d)
    qs = sorted({round(float(qc) * f, 3) for f in (0.6, 0.8, 0.95, 1.0, 1.1, 1.4, 1.8, 2.4)})
    print(f"d={args.d}  critical q = {qc} = {float(qc):.4f}  n={args.n} samples={args.samples}")
    print(f"{'q':>8} {'q/qc':>6} {'argmax (all)':>13} {'argmax (top %)':>15}")
    for q in qs:
        prof = level_profile(q, args.d, args.n, args.samples, args.seed,
                             top_percent=args.top_percent)
        print(f"{q:8.3f} {q / float(qc):6.2f} {prof.argmax_unconditional:13d} "
              f"{prof.argmax_conditional:15d}")


if __name__ == "__main__":
    main()
