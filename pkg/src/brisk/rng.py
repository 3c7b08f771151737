"""Reproducible randomness.

Two layers:

* ``child_generator(seed, tag, chunk)`` -- numpy ``Generator`` over a Philox
  bit generator keyed by ``SeedSequence(seed, spawn_key=(tag, chunk))``.  Used
  for bulk sampling split into fixed-size chunks, so results never depend on
  how chunks are scheduled.
* ``philox4x32`` / ``counter_normals`` -- a numba implementation of the
  Philox4x32-10 counter-based generator.  Path engines address every normal
  variate by (path id, node id, component pair), which makes the simulated
  paths independent of pruning decisions, barrier level and worker count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numba as nb
import numpy as np

# domain-separation tags for derived streams
TAG_PATH = 1
TAG_TREND = 2
TAG_TAIL = 3
TAG_IA = 4
TAG_SAMPLE = 5
TAG_ETA_TAIL = 6

CHUNK = 4096

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)


def as_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def child_seedseq(seed, tag: int, chunk: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(as_seed(seed), spawn_key=(int(tag), int(chunk)))


def child_generator(seed, tag: int, chunk: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(child_seedseq(seed, tag, chunk)))


def philox_key(seed, tag: int) -> tuple[int, int]:
    """Two 32-bit key words for the counter-based generator."""
    words = np.random.SeedSequence(as_seed(seed), spawn_key=(int(tag),)).generate_state(2, np.uint32)
    return int(words[0]), int(words[1])


def worker_count() -> int:
    raw = os.environ.get("BRISK_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("BRISK_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def map_chunks(fn, items):
    """Apply ``fn`` to every item, in threads if BRISK_THREADS allows.

    Output order always follows input order, so reductions are reproducible.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_ranges(n: int, size: int = CHUNK):
    return [(c, c * size, min(size, n - c * size)) for c in range((n + size - 1) // size)]


@nb.njit(cache=True, inline="always")
def _mulhilo(m, x):
    p = m * x
    return p >> _SH32, p & _MASK32


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block function on 32-bit words held in uint64."""
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        hi0, lo0 = _mulhilo(_PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(_PHILOX_M1, c2)
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & _MASK32, lo1, (hi0 ^ c3 ^ k1) & _MASK32, lo0
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _to_open_unit(hi, lo):
    # 53 random bits, mapped strictly inside (0, 1)
    return ((hi >> np.uint64(5)) * 67108864.0 + (lo >> np.uint64(6)) + 0.5) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def counter_uniforms(path, seg, node, pair, k0, k1):
    """Two uniforms on (0, 1) addressed by (path, seg, node, pair)."""
    path = np.uint64(path)
    x0, x1, x2, x3 = philox4x32(path & _MASK32, path >> _SH32, np.uint64(seg) & _MASK32,
                                (np.uint64(node) & np.uint64(0xFFFFFF)) | (np.uint64(pair) << np.uint64(24)),
                                k0, k1)
    return _to_open_unit(x0, x1), _to_open_unit(x2, x3)


# AS241 (PPND16) rational approximations, relative accuracy about 1e-16
_A = (3.387132872796366608, 133.14166789178437745, 1971.5909503065514427, 13731.693765509461125,
      45921.953931549871457, 67265.770927008700853, 33430.575583588128105, 2509.0809287301226727)
_B = (1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
      21213.794301586595867, 39307.89580009271061, 28729.085735721942674, 5226.495278852545925)
_C = (1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055, 3.64784832476320460504,
      1.27045825245236838258, 0.24178072517745061177, 0.0227238449892691845833, 7.7454501427834140764e-4)
_D = (1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
      0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4, 1.05075007164441684324e-9)
_E = (6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358, 0.29656057182850489123,
      0.026532189526576123093, 0.0012426609473880784386, 2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
      7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7, 2.04426310338993978564e-15)


@nb.njit(cache=True, inline="always")
def _horner(coef, r):
    acc = coef[7]
    for i in range(6, -1, -1):
        acc = acc * r + coef[i]
    return acc


@nb.njit(cache=True)
def ndtri(p):
    """Inverse standard normal CDF for p in (0, 1)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _horner(_A, r) / _horner(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _horner(_C, r) / _horner(_D, r)
    else:
        r -= 5.0
        val = _horner(_E, r) / _horner(_F, r)
    return -val if q < 0.0 else val


@nb.njit(cache=True)
def counter_normals(path, seg, node, dim, k0, k1, out):
    """Fill ``out[:dim]`` with standard normals addressed by (path, seg, node)."""
    for pair in range((dim + 1) // 2):
        u0, u1 = counter_uniforms(path, seg, node, pair, k0, k1)
        out[2 * pair] = ndtri(u0)
        if 2 * pair + 1 < dim:
            out[2 * pair + 1] = ndtri(u1)
