#!/usr/bin/env python3
"""Grid-refinement audit of the ruin estimator against the exact 1-D formula."""
import argparse
import sys

from brisk.asymptotics import exact_ruin_1d
from brisk.gaussian import build_model
from brisk.simulator import RuinScenario, convergence_sweep
from brisk.trend import PointMass


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--u", type=float, default=1.0)
    ap.add_argument("--c", type=float, default=0.0)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--paths", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    exact = exact_ruin_1d(args.u, args.c, args.sigma, 1.0)
    sc = RuinScenario(build_model([[args.sigma]]), [1.0], PointMass([args.c]), 1.0, args.u, 256, args.paths,
                      args.seed)
    print("n_steps,estimate,stderr,exact,bias")
    for n, est, se in convergence_sweep(sc, [2**k for k in range(8, 19, 2)]):
        print(f"{n},{est!r},{se!r},{exact!r},{est - exact!r}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
