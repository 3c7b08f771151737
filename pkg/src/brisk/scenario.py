"""Strict JSON scenario files (schema version 1) and canonical hashing."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BriskError, RhoOutOfRange
from .gaussian import CovarianceModel, build_model, equicorrelated_model
from .simulator import RuinScenario
from .trend import Bernoulli, Discrete, PointMass, TrendDistribution, UniformBox

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "model", "barrier", "trend", "horizon", "levels", "budgets", "master_seed"}
REQUIRED = {"schema_version", "model", "barrier", "levels"}
BUDGET_DEFAULTS = {"n_steps": 1024, "n_paths": 10_000, "tail_budget": 100_000, "ia_paths": 10_000,
                   "ia_lambda": 20.0}
INT_BUDGETS = {"n_steps", "n_paths", "tail_budget", "ia_paths"}


class ScenarioParseError(BriskError):
    """Malformed scenario file; the message names the offending field."""


def _num(x, where) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioParseError(f"{where}: expected a number, got {type(x).__name__}")
    v = float(x)
    if not math.isfinite(v):
        raise ScenarioParseError(f"{where}: must be finite")
    return v


def _int(x, where, lo=0, hi=None) -> int:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or float(x) != int(x):
        raise ScenarioParseError(f"{where}: expected an integer")
    v = int(x)
    if v < lo or (hi is not None and v >= hi):
        raise ScenarioParseError(f"{where}: out of range")
    return v


def _vec(x, where) -> list[float]:
    if not isinstance(x, list) or not x:
        raise ScenarioParseError(f"{where}: expected a nonempty array of numbers")
    return [_num(v, f"{where}[{i}]") for i, v in enumerate(x)]


def _keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ScenarioParseError(f"{where}: expected an object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ScenarioParseError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ScenarioParseError(f"{where}: missing field(s) {', '.join(missing)}")


def _model(obj) -> dict:
    _keys(obj, {"mixing", "equicorr"}, set(), "model")
    if len(obj) != 1:
        raise ScenarioParseError("model: give exactly one of mixing, equicorr")
    if "mixing" in obj:
        rows = obj["mixing"]
        if not isinstance(rows, list) or not rows:
            raise ScenarioParseError("model.mixing: expected an array of rows")
        return {"mixing": [_vec(r, f"model.mixing[{i}]") for i, r in enumerate(rows)]}
    eq = obj["equicorr"]
    _keys(eq, {"dim", "rho"}, {"dim", "rho"}, "model.equicorr")
    return {"equicorr": {"dim": _int(eq["dim"], "model.equicorr.dim", 1), "rho": _num(eq["rho"], "model.equicorr.rho")}}


def _trend(obj) -> dict:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ScenarioParseError("trend: expected an object with a kind field")
    kind = obj["kind"]
    if kind == "point_mass":
        _keys(obj, {"kind", "c"}, {"c"}, "trend")
        return {"kind": kind, "c": _vec(obj["c"], "trend.c")}
    if kind == "bernoulli":
        _keys(obj, {"kind", "p"}, {"p"}, "trend")
        return {"kind": kind, "p": _vec(obj["p"], "trend.p")}
    if kind == "uniform_box":
        _keys(obj, {"kind", "lo", "hi"}, {"lo", "hi"}, "trend")
        return {"kind": kind, "lo": _vec(obj["lo"], "trend.lo"), "hi": _vec(obj["hi"], "trend.hi")}
    if kind == "discrete":
        _keys(obj, {"kind", "atoms"}, {"atoms"}, "trend")
        atoms = obj["atoms"]
        if not isinstance(atoms, list) or not atoms:
            raise ScenarioParseError("trend.atoms: expected a nonempty array")
        out = []
        for i, at in enumerate(atoms):
            _keys(at, {"value", "prob"}, {"value", "prob"}, f"trend.atoms[{i}]")
            out.append({"value": _vec(at["value"], f"trend.atoms[{i}].value"),
                        "prob": _num(at["prob"], f"trend.atoms[{i}].prob")})
        return {"kind": kind, "atoms": out}
    raise ScenarioParseError(f"trend.kind: unknown kind {kind!r}")


def normalize(doc) -> dict:
    """Validate a parsed document and fill defaults; raises ScenarioParseError."""
    _keys(doc, TOP_KEYS, REQUIRED, "scenario")
    if _int(doc["schema_version"], "schema_version") != SCHEMA_VERSION:
        raise ScenarioParseError(f"schema_version: only version {SCHEMA_VERSION} is supported")
    model = _model(doc["model"])
    barrier = _vec(doc["barrier"], "barrier")
    levels = _vec(doc["levels"], "levels")
    if any(u <= 0 for u in levels):
        raise ScenarioParseError("levels: every level must be > 0")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ScenarioParseError("levels: must be strictly increasing")
    trend = _trend(doc["trend"]) if "trend" in doc else {"kind": "point_mass", "c": [0.0] * len(barrier)}
    horizon = _num(doc.get("horizon", 1.0), "horizon")
    if horizon <= 0:
        raise ScenarioParseError("horizon: must be > 0")
    raw_budgets = doc.get("budgets", {})
    _keys(raw_budgets, set(BUDGET_DEFAULTS), set(), "budgets")
    budgets = {}
    for k, default in BUDGET_DEFAULTS.items():
        v = raw_budgets.get(k, default)
        budgets[k] = _int(v, f"budgets.{k}", 1) if k in INT_BUDGETS else _num(v, f"budgets.{k}")
    if budgets["ia_lambda"] <= 0:
        raise ScenarioParseError("budgets.ia_lambda: must be > 0")
    seed = _int(doc.get("master_seed", 0), "master_seed", 0, 2**64)
    return {"schema_version": SCHEMA_VERSION, "model": model, "barrier": barrier, "trend": trend,
            "horizon": horizon, "levels": levels, "budgets": budgets, "master_seed": seed}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario document plus the library objects it describes."""

    doc: dict
    model: CovarianceModel
    barrier: np.ndarray
    trend: TrendDistribution

    @property
    def hash(self) -> str:
        return digest(self.doc)

    @property
    def levels(self) -> list[float]:
        return list(self.doc["levels"])

    @property
    def budgets(self) -> dict:
        return dict(self.doc["budgets"])

    @property
    def seed(self) -> int:
        return self.doc["master_seed"]

    @property
    def horizon(self) -> float:
        return self.doc["horizon"]

    def ruin_scenario(self, u: float) -> RuinScenario:
        b = self.budgets
        return RuinScenario(self.model, self.barrier, self.trend, self.horizon, u, b["n_steps"], b["n_paths"],
                            self.seed)

    def with_overrides(self, levels=None, seed=None) -> "Scenario":
        doc = json.loads(canonical_json(self.doc))
        if levels is not None:
            doc["levels"] = list(levels)
        if seed is not None:
            doc["master_seed"] = seed
        return from_document(doc)


def build_trend(spec: dict) -> TrendDistribution:
    kind = spec["kind"]
    if kind == "point_mass":
        return PointMass(spec["c"])
    if kind == "bernoulli":
        return Bernoulli(spec["p"])
    if kind == "uniform_box":
        return UniformBox(spec["lo"], spec["hi"])
    return Discrete([a["value"] for a in spec["atoms"]], [a["prob"] for a in spec["atoms"]])


def from_document(doc) -> Scenario:
    """Normalize a parsed document and build the model and trend.

    Structural problems raise ScenarioParseError; mathematical ones (singular
    mixing matrix, rho out of range, bad trend) raise the library's domain
    errors.
    """
    doc = normalize(doc)
    m = doc["model"]
    if "mixing" in m:
        if len({len(r) for r in m["mixing"]}) != 1:
            raise ScenarioParseError("model.mixing: rows must have equal length")
        model = build_model(m["mixing"])
    else:
        eq = m["equicorr"]
        d, rho = eq["dim"], eq["rho"]
        if d >= 2 and not -1.0 / (d - 1) < rho < 1.0:
            raise RhoOutOfRange(f"model.equicorr.rho={rho} outside (-1/(d-1), 1)")
        model = equicorrelated_model(d, rho)
    if len(doc["barrier"]) != model.dim:
        raise ScenarioParseError(f"barrier: length {len(doc['barrier'])} does not match model dim {model.dim}")
    trend = build_trend(doc["trend"])
    if trend.dim != model.dim:
        raise ScenarioParseError("trend: dimension does not match the model")
    return Scenario(doc, model, np.array(doc["barrier"]), trend)


def load(path) -> Scenario:
    """Read and validate a scenario file.  A missing or unreadable file is a
    parse failure (there is no scenario to run)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_document(doc)


def _reject_constant(name):
    raise ScenarioParseError(f"non-finite number {name} is not allowed")
