#!/usr/bin/env python3
"""Simulation / asymptotic ratio over a level sweep for one scenario file.

Path counts grow geometrically with u so the relative error stays roughly
flat; print CSV to stdout.
"""
import argparse
import math
import sys

from brisk.asymptotics import AsymptoticBudgets, asymptotic_psi, compute_ia, rescaled
from brisk.qp import solve_qp
from brisk.scenario import load
from brisk.simulator import simulate_ruin


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario")
    ap.add_argument("--levels", default=None, help="comma-separated levels (default: the scenario's)")
    ap.add_argument("--hits", type=float, default=2000, help="target expected crossings per level")
    ap.add_argument("--max-paths", type=int, default=10**9)
    ap.add_argument("--ia-paths", type=int, default=20_000)
    args = ap.parse_args()

    scen = load(args.scenario)
    levels = [float(x) for x in args.levels.split(",")] if args.levels else scen.levels
    b = scen.budgets
    budgets = AsymptoticBudgets(ia_paths=args.ia_paths, tail_budget=b["tail_budget"])
    a, _ = rescaled(scen.model, scen.barrier, scen.trend, scen.horizon)
    ia = compute_ia(solve_qp(scen.model, a), scen.model, b["ia_lambda"], budgets, scen.seed)
    print("u,n_paths,psi_hat,psi_hat_stderr,psi_asym,ratio,ratio_stderr")
    for u in levels:
        asym = asymptotic_psi(scen.ruin_scenario(u), b["ia_lambda"], budgets, ia=ia)
        n = int(min(args.max_paths, max(b["n_paths"], args.hits / max(asym.psi_approx.point, 1e-300))))
        sim = simulate_ruin(scen.ruin_scenario(u).replace(n_paths=n))
        r = sim.point / asym.psi_approx.point
        se = r * math.hypot(sim.rel_stderr() if sim.point else math.inf, asym.psi_approx.rel_stderr())
        print(f"{u!r},{n},{sim.point!r},{sim.stderr!r},{asym.psi_approx.point!r},{r!r},{se!r}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
