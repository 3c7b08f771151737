"""Command-line front end: ``brisk qp|simulate|asym|validate|tail|cache``.

Exit codes: 0 success, 2 parse error, 3 domain error, 4 configuration
error, 5 I/O error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__, cache
from .asymptotics import AsymptoticBudgets, asymptotic_psi, compute_ia, exact_ruin_1d, rescaled, tail_term
from .errors import BriskError, SpanTooNarrow
from .qp import solve_qp
from .scenario import ScenarioParseError, digest, load
from .simulator import simulate_ruin
from .trend import UniformBox

EXIT_OK, EXIT_PARSE, EXIT_DOMAIN, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4, 5
IA_STEPS = 4096
DEFAULT_BAND = (0.75, 1.25)
BIAS_CONST = 0.5826  # expected overshoot of a discretely monitored Brownian maximum, in sigma sqrt(dt)
BIAS_SAFETY = 1.5

HEADERS = {
    "simulate": ["u", "psi_hat", "stderr", "n_paths", "n_steps", "seed"],
    "asym": ["u", "lambda_product", "ia", "ia_stderr", "tail", "tail_stderr", "psi_asym"],
    "tail": ["u", "tail", "tail_stderr", "method"],
    "validate": ["u", "psi_hat", "psi_hat_stderr", "psi_ref", "psi_ref_stderr", "ratio", "ratio_stderr",
                 "reference"],
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(command, rows) -> str:
    out = io.StringIO()
    cols = HEADERS[command]
    out.write(",".join(cols) + "\n")
    for r in rows:
        out.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    return out.getvalue()


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, command, scen, rows, extra=None):
    if args.csv:
        _atomic_write(args.csv, _csv_text(command, rows))
    if args.json:
        rec = {"command": command, "scenario_hash": scen.hash, "tool_version": __version__, "rows": rows}
        if extra:
            rec.update(extra)
        sys.stdout.write(json.dumps(rec, sort_keys=True, indent=2) + "\n")
    elif not args.csv:
        sys.stdout.write(_csv_text(command, rows))


def _timed(args, row, t0):
    if args.timing:
        row["wall_time_ms"] = round((time.perf_counter() - t0) * 1e3, 3)
    return row


def _scenario(args):
    scen = load(args.scenario)
    levels = None
    if args.levels:
        try:
            levels = [float(x) for x in args.levels.split(",")]
        except ValueError as exc:
            raise ScenarioParseError(f"--levels: {exc}") from exc
    return scen.with_overrides(levels=levels, seed=args.seed)


def cmd_qp(args) -> int:
    scen = _scenario(args)
    a, _ = rescaled(scen.model, scen.barrier, scen.trend, scen.horizon)
    sol = solve_qp(scen.model, a).as_dict(one_based=True)
    if args.json:
        sys.stdout.write(json.dumps({"command": "qp", "scenario_hash": scen.hash, "tool_version": __version__,
                                     "solution": sol}, sort_keys=True, indent=2) + "\n")
        return EXIT_OK
    for key in ("a_tilde", "I", "J", "U", "lambda", "objective"):
        sys.stdout.write(f"{key}: {json.dumps(sol[key])}\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scen = _scenario(args)
    rows = []
    for u in scen.levels:
        t0 = time.perf_counter()
        sc = scen.ruin_scenario(u)
        est = simulate_ruin(sc)
        rows.append(_timed(args, {"u": u, "psi_hat": est.point, "stderr": est.stderr, "n_paths": sc.n_paths,
                                  "n_steps": sc.n_steps, "seed": sc.master_seed, "method": est.meta}, t0))
    _emit(args, "simulate", scen, rows)
    return EXIT_OK


def _budgets(scen) -> AsymptoticBudgets:
    b = scen.budgets
    return AsymptoticBudgets(ia_paths=b["ia_paths"], ia_steps=IA_STEPS, tail_budget=b["tail_budget"])


def _ia_cached(scen, budgets: AsymptoticBudgets):
    a, _ = rescaled(scen.model, scen.barrier, scen.trend, scen.horizon)
    qp = solve_qp(scen.model, a)
    ia_budgets = {"ia_paths": budgets.ia_paths, "ia_steps": budgets.ia_steps, "ia_lambda": scen.budgets["ia_lambda"],
                  "seed": scen.seed}
    key = digest({"sigma": scen.model.sigma.tolist(), "a": a.tolist(), "budgets": ia_budgets,
                  "tool_version": __version__})
    hit = None
    try:
        hit = cache.read(key, ia_budgets, __version__)
    except OSError as exc:
        print(f"warning: cache unavailable: {exc}", file=sys.stderr)
    if hit is not None:
        print(f"cache hit: {cache.entry_path(key).name}", file=sys.stderr)
        return hit
    ia = compute_ia(qp, scen.model, scen.budgets["ia_lambda"], budgets, scen.seed)
    cache.write(key, ia, ia_budgets, __version__)
    return ia


def _asym_rows(args, scen):
    budgets = _budgets(scen)
    ia = _ia_cached(scen, budgets)
    rows = []
    for u in scen.levels:
        t0 = time.perf_counter()
        res = asymptotic_psi(scen.ruin_scenario(u), scen.budgets["ia_lambda"], budgets, ia=ia)
        rows.append(_timed(args, {"u": u, "lambda_product": res.lambda_product, "ia": res.ia_estimate.point,
                                  "ia_stderr": res.ia_estimate.stderr, "tail": res.tail_term.point,
                                  "tail_stderr": res.tail_term.stderr, "psi_asym": res.psi_approx.point,
                                  "psi_asym_stderr": res.psi_approx.stderr, "method": res.tail_term.meta}, t0))
    return rows


def cmd_asym(args) -> int:
    scen = _scenario(args)
    _emit(args, "asym", scen, _asym_rows(args, scen))
    return EXIT_OK


def cmd_tail(args) -> int:
    scen = _scenario(args)
    a, trend = rescaled(scen.model, scen.barrier, scen.trend, scen.horizon)
    rows = []
    for u in scen.levels:
        t0 = time.perf_counter()
        est = tail_term(scen.model, a, u, trend, scen.budgets["tail_budget"], scen.seed)
        rows.append(_timed(args, {"u": u, "tail": est.point, "tail_stderr": est.stderr, "method": est.meta}, t0))
    _emit(args, "tail", scen, rows)
    return EXIT_OK


def _exact_1d(scen, u) -> float | None:
    """Exact psi for one-dimensional scenarios, averaged over the trend law."""
    sigma = math.sqrt(scen.model.sigma[0, 0])
    b, T = float(scen.barrier[0]) * u, scen.horizon
    atoms = scen.trend.atoms()
    if atoms is not None:
        vals, probs = atoms
        return float(sum(p * exact_ruin_1d(b, float(v[0]), sigma, T) for v, p in zip(vals, probs)))
    if isinstance(scen.trend, UniformBox):
        lo, hi = float(scen.trend.lo[0]), float(scen.trend.hi[0])
        val, _ = integrate.quad(lambda c: exact_ruin_1d(b, c, sigma, T), lo, hi, epsabs=1e-14, epsrel=1e-10)
        return val / (hi - lo)
    return None


def _bias_allowance(scen, u, exact_fn) -> float:
    # a grid of step dt behaves like the continuous maximum with the barrier
    # raised by BIAS_CONST sigma sqrt(dt)
    sigma = math.sqrt(scen.model.sigma[0, 0])
    shift = BIAS_CONST * sigma * math.sqrt(1.0 / scen.budgets["n_steps"])
    du = shift / float(scen.barrier[0])
    return BIAS_SAFETY * abs(exact_fn(u) - exact_fn(u + du))


def cmd_validate(args) -> int:
    scen = _scenario(args)
    lv = scen.levels
    if len(lv) < 2 or lv[-1] < 2.0 * lv[0]:
        raise SpanTooNarrow("validate needs levels spanning at least a factor 2")
    band = DEFAULT_BAND
    if args.band:
        try:
            band = tuple(float(x) for x in args.band.split(","))
        except ValueError as exc:
            raise ScenarioParseError(f"--band: {exc}") from exc
        if len(band) != 2 or not band[0] < 1.0 < band[1]:
            raise ScenarioParseError("--band: expected lo,hi with lo < 1 < hi")
    exact_ok = scen.model.dim == 1 and scen.barrier[0] > 0 and _exact_1d(scen, lv[0]) is not None
    rows, within = [], []
    ref_rows = None if exact_ok else _asym_rows(args, scen)
    for i, u in enumerate(lv):
        t0 = time.perf_counter()
        est = simulate_ruin(scen.ruin_scenario(u))
        if exact_ok:
            ref, ref_se, kind = _exact_1d(scen, u), 0.0, "exact"
            allow = 3.0 * est.stderr + _bias_allowance(scen, u, lambda v: _exact_1d(scen, v))
            within.append(abs(est.point - ref) <= allow)
        else:
            ref, ref_se, kind = ref_rows[i]["psi_asym"], ref_rows[i]["psi_asym_stderr"], "asymptotic"
        ratio = est.point / ref if ref > 0 else math.inf
        rel = math.hypot(est.rel_stderr() if est.point else 0.0, ref_se / ref if ref > 0 else 0.0)
        rows.append(_timed(args, {"u": u, "psi_hat": est.point, "psi_hat_stderr": est.stderr, "psi_ref": ref,
                                  "psi_ref_stderr": ref_se, "ratio": ratio, "ratio_stderr": abs(ratio) * rel,
                                  "reference": kind}, t0))
    if exact_ok:
        passed = all(within)
        reason = "simulation within 3 se + discretization allowance of the exact value at every level"
    else:
        first, last = rows[0]["ratio"], rows[-1]["ratio"]
        passed = abs(last - 1) < abs(first - 1) and band[0] <= last <= band[1]
        reason = f"|ratio-1| {abs(first - 1):.4g} -> {abs(last - 1):.4g}, last ratio {last:.4g}, band {list(band)}"
    verdict = "PASS" if passed else "INCONCLUSIVE"
    _emit(args, "validate", scen, rows, {"verdict": verdict, "verdict_reason": reason})
    if not args.json:
        sys.stdout.write(f"verdict: {verdict} ({reason})\n")
    return EXIT_OK


def cmd_cache(args) -> int:
    if args.action == "path":
        sys.stdout.write(f"{cache.cache_dir()}\n")
    elif args.action == "list":
        for p in cache.entries():
            sys.stdout.write(f"{p.name}\n")
    else:
        n = cache.clear()
        sys.stdout.write(f"removed {n} cache entr{'y' if n == 1 else 'ies'}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brisk", description="Simultaneous ruin probabilities: QP, simulation, asymptotics")
    p.add_argument("--version", action="version", version=f"brisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in [("qp", cmd_qp, "solve the barrier QP"),
                          ("simulate", cmd_simulate, "Monte Carlo ruin probability per level"),
                          ("asym", cmd_asym, "asymptotic approximation per level"),
                          ("validate", cmd_validate, "simulation / asymptotics ratio and verdict"),
                          ("tail", cmd_tail, "E_eta P(W(1) > a u + eta) per level")]:
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("scenario", help="scenario JSON file (schema version 1)")
        sp.add_argument("--csv", metavar="PATH", help="write CSV here (atomically) instead of stdout")
        sp.add_argument("--json", action="store_true", help="print a JSON result record")
        sp.add_argument("--levels", metavar="U1,U2,...", help="override the scenario levels")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--timing", action="store_true", help="add wall_time_ms to JSON rows")
        if name == "validate":
            sp.add_argument("--band", metavar="LO,HI", help="accepted ratio band at the largest level")
        sp.set_defaults(func=fn)
    cp = sub.add_parser("cache", help="inspect or clear the I_a cache")
    cp.add_argument("action", choices=["list", "clear", "path"])
    cp.set_defaults(func=cmd_cache)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SpanTooNarrow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BriskError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
