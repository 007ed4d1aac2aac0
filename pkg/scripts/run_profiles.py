#!/usr/bin/env python3
"""Two-point and one-arm profiles at criticality, with exponent fits.

Prints the profiles as a table and the fitted power-law exponents.  At desk
scales the d=2 exponents sit visibly away from their asymptotic values;
the point of this script is the shape of the decay and the stability of
the fit under the drop-low/drop-high windowing, not the third digit.
"""

import argparse

from percolab.engine import PercolationConfig
from percolab.estimators import fit_exponent, one_arm_profile, two_point_profile
from percolab.lattice import LatticeSpec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n-samples", type=int, default=2000)
    ap.add_argument("--radii", type=int, nargs="+", default=[2, 4, 8, 16, 32])
    args = ap.parse_args()

    cfg = PercolationConfig(LatticeSpec(d=args.d), args.p, args.seed)
    targets = [(r,) + (0,) * (args.d - 1) for r in args.radii]

    print(f"# d={args.d} p={args.p} seed={args.seed} n={args.n_samples}")
    print("r  two_point +- err      one_arm +- err")
    tp = two_point_profile(cfg, targets, args.n_samples)
    oa = one_arm_profile(cfg, args.radii, args.n_samples)
    for (site, e2), (r, e1) in zip(tp, oa):
        print(f"{r:<3d} {e2.value:.4f} +- {e2.stderr:.4f}    "
              f"{e1.value:.4f} +- {e1.stderr:.4f}")

    pairs2 = [(max(abs(c) for c in s), e) for s, e in tp]
    for name, pairs in (("two-point", pairs2), ("one-arm", oa)):
        fit = fit_exponent(pairs)
        print(f"{name}: value ~ {fit.amplitude:.3f} * r^({fit.exponent:.3f}"
              f" +- {fit.exponent_stderr:.3f})  [window {fit.window},"
              f" {fit.n_points} pts]")


if __name__ == "__main__":
    main()
