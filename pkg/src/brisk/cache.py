"""Content-addressed on-disk cache for I_a estimates."""
from __future__ import annotations

import json
import os
import sys
import tempfile
from pathlib import Path

from .results import EstimateWithCI

SUFFIX = "-ia.json"


def cache_dir() -> Path:
    env = os.environ.get("BRISK_CACHE_DIR")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "brisk"


def entry_path(key: str) -> Path:
    return cache_dir() / f"{key}{SUFFIX}"


def read(key: str, budgets: dict, tool_version: str) -> EstimateWithCI | None:
    """Cached estimate for ``key``, or None when missing, stale or unreadable."""
    path = entry_path(key)
    if not path.exists():
        return None
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
        if rec.get("tool_version") != tool_version or rec.get("budgets") != budgets:
            return None
        return EstimateWithCI(float(rec["estimate"]), float(rec["stderr"]), int(rec["n"]), rec.get("seed"),
                              rec.get("meta", ""), dict(rec.get("extra", {})))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"warning: ignoring unreadable cache entry {path.name}: {exc}", file=sys.stderr)
        return None


def write(key: str, est: EstimateWithCI, budgets: dict, tool_version: str) -> Path:
    """Atomic write: temp file in the cache directory, then rename."""
    d = cache_dir()
    d.mkdir(parents=True, exist_ok=True)
    rec = {"estimate": est.point, "stderr": est.stderr, "n": est.n, "seed": est.seed, "meta": est.meta,
           "extra": _jsonable(est.extra), "budgets": budgets, "tool_version": tool_version}
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, sort_keys=True)
        os.replace(tmp, entry_path(key))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return entry_path(key)


def entries() -> list[Path]:
    d = cache_dir()
    return sorted(d.glob(f"*{SUFFIX}")) if d.is_dir() else []


def clear() -> int:
    n = 0
    for p in entries():
        p.unlink()
        n += 1
    return n


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj
