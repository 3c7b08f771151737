#!/usr/bin/env python3
"""I_a(Lambda) on a doubling horizon schedule and at several grid resolutions.

The horizon rows share paths, so they are monotone up to pruning tolerance;
the grid rows show the one-sided discretization bias.
"""
import argparse
import sys

import numpy as np

from brisk.asymptotics import estimate_ia, estimate_ia_quadrature
from brisk.gaussian import build_model
from brisk.qp import solve_qp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mixing", default="1,0;0,1", help="rows separated by ';'")
    ap.add_argument("--barrier", default="1,1")
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quadrature", action="store_true", help="also run the tensor-grid method at Lambda = 20")
    args = ap.parse_args()

    model = build_model([[float(x) for x in r.split(",")] for r in args.mixing.split(";")])
    qp = solve_qp(model, np.array([float(x) for x in args.barrier.split(",")]))
    print(f"# I = {[i + 1 for i in qp.active_set]}, lambda = {qp.lam.tolist()}")
    print("kind,lambda_horizon,n_steps,estimate,stderr")
    for lam in (2.5, 5.0, 10.0, 20.0, 40.0):
        e = estimate_ia(qp, model, lam, 4096, args.paths, args.seed)
        print(f"horizon,{lam},4096,{e.point!r},{e.stderr!r}", flush=True)
    for n in (256, 1024, 4096, 16384):
        e = estimate_ia(qp, model, 20.0, n, args.paths, args.seed)
        print(f"grid,20.0,{n},{e.point!r},{e.stderr!r}", flush=True)
    if args.quadrature:
        e = estimate_ia_quadrature(qp, model, 20.0, inner_paths=min(args.paths, 2000), seed=args.seed)
        print(f"quadrature,20.0,4096,{e.point!r},{e.stderr!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
