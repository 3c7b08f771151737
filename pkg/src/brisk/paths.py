"""Brownian path engines.

Paths are built by midpoint (Levy) refinement: a base random walk with step
``h0`` and ``K`` dyadic refinement levels inside every base step.  Each
normal is addressed by (path id, base step j, heap node h) through the
counter-based generator, so the same path comes out regardless of which
segments get refined, of the barrier level and of chunking.  Coarser grids
are exact sub-grids of finer ones.

Refinement is breadth first and skips a segment when the Brownian bridge
between its endpoints provably (up to probability ``tol``) cannot produce a
point that matters:

* ruin scan: some component stays below its barrier with probability
  >= 1 - tol, using P(bridge max > 0) = exp(-2 y_l y_r / (s^2 len));
* frontier scan: the bridge cannot escape the orthant below a current
  Pareto point, or stays where exp(<lam, x>) is negligible.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import counter_normals, counter_uniforms

MAX_LEVELS = 23
PRUNE_TOL = 1e-12
LOG_TOL = -math.log(PRUNE_TOL)


def split_steps(n: int) -> tuple[int, int]:
    """n = m * 2**K with m odd."""
    if n < 1:
        raise ValueError("need at least one step")
    k = 0
    while n % 2 == 0:
        n //= 2
        k += 1
    return n, k


@nb.njit(cache=True, inline="always")
def _bridge_mid(yl, yr, seglen, chol, z, out):
    d = out.shape[0]
    s = math.sqrt(0.25 * seglen)
    for i in range(d):
        acc = 0.0
        for k in range(i + 1):
            acc += chol[i, k] * z[k]
        out[i] = 0.5 * (yl[i] + yr[i]) + s * acc


@nb.njit(cache=True, nogil=True)
def ruin_scan(path0, npaths, k0, k1, chol, sig_diag, m, K, horizon, eta, barrier, windows,
              log_tol, fast_u0, wdir, wvar, hist, combo, slack):
    """Scan paths for simultaneous crossings Y(t) = W(t) - eta t - barrier > 0.

    ``hist[w, k]`` counts paths whose first crossing inside window ``w``
    appears at refinement level ``k`` (``k = K + 1``: none); ``combo[mask]``
    counts the joint window-crossing patterns.  ``wdir`` (nonnegative, with
    variance rate ``wvar``) adds the bound for the combination sum_i w_i Y_i,
    which must be positive wherever every component is.  ``slack[0]``
    accumulates the crossing-probability bounds of all skipped segments, an
    upper bound on the expected number of crossings lost to pruning.
    """
    d = chol.shape[0]
    nw = windows.shape[0]
    h0 = horizon / m
    sq0 = math.sqrt(h0)
    cap = 256
    q_seg = np.empty(cap, np.int64)
    q_node = np.empty(cap, np.int64)
    q_dep = np.empty(cap, np.int64)
    q_tl = np.empty(cap)
    q_len = np.empty(cap)
    q_yl = np.empty((cap, d))
    q_yr = np.empty((cap, d))
    ybase = np.empty((m + 1, d))
    z = np.empty(d)
    ym = np.empty(d)
    best = np.empty(nw, np.int64)
    eta_rows = eta.shape[0]
    none = K + 1
    tol = math.exp(-log_tol)
    n_fast = 0

    for p in range(npaths):
        pid = path0 + p
        if fast_u0 > 0.0:
            u0, _ = counter_uniforms(pid, 0, 0, 0, k0, k1)
            if u0 < fast_u0:
                n_fast += 1
                continue
        e = eta[min(p, eta_rows - 1)]
        for w in range(nw):
            best[w] = none
        for i in range(d):
            ybase[0, i] = -barrier[i]
        for j in range(m):
            counter_normals(pid, j, 0, d, k0, k1, z)
            t = (j + 1) * h0
            hit = True
            for i in range(d):
                acc = 0.0
                for k in range(i + 1):
                    acc += chol[i, k] * z[k]
                ybase[j + 1, i] = ybase[j, i] + sq0 * acc - e[i] * h0
                if ybase[j + 1, i] <= 0.0:
                    hit = False
            if hit:
                for w in range(nw):
                    if windows[w, 0] <= t <= windows[w, 1]:
                        best[w] = 0

        head = 0
        tail = 0
        if K > 0:
            if m > cap:
                cap = 2 * m
                q_seg = np.empty(cap, np.int64)
                q_node = np.empty(cap, np.int64)
                q_dep = np.empty(cap, np.int64)
                q_tl = np.empty(cap)
                q_len = np.empty(cap)
                q_yl = np.empty((cap, d))
                q_yr = np.empty((cap, d))
            for j in range(m):
                q_seg[tail] = j
                q_node[tail] = 1
                q_dep[tail] = 0
                q_tl[tail] = j * h0
                q_len[tail] = h0
                q_yl[tail] = ybase[j]
                q_yr[tail] = ybase[j + 1]
                tail += 1

        while head < tail:
            dep = q_dep[head]
            tl = q_tl[head]
            ln = q_len[head]
            tr = tl + ln
            needed = False
            for w in range(nw):
                if best[w] > dep + 1 and windows[w, 0] < tr and windows[w, 1] > tl:
                    needed = True
            if needed:
                for i in range(d):
                    a = q_yl[head, i]
                    b = q_yr[head, i]
                    if a < 0.0 and b < 0.0 and 2.0 * a * b > log_tol * sig_diag[i] * ln:
                        slack[0] += math.exp(-2.0 * a * b / (sig_diag[i] * ln))
                        needed = False
                        break
            if needed and wvar > 0.0:
                a = 0.0
                b = 0.0
                for i in range(d):
                    a += wdir[i] * q_yl[head, i]
                    b += wdir[i] * q_yr[head, i]
                if a < 0.0 and b < 0.0 and 2.0 * a * b > log_tol * wvar * ln:
                    slack[0] += math.exp(-2.0 * a * b / (wvar * ln))
                    needed = False
            if not needed:
                head += 1
                continue
            seg = q_seg[head]
            node = q_node[head]
            counter_normals(pid, seg, node, d, k0, k1, z)
            _bridge_mid(q_yl[head], q_yr[head], ln, chol, z, ym)
            tm = tl + 0.5 * ln
            hit = True
            for i in range(d):
                if ym[i] <= 0.0:
                    hit = False
            if hit:
                for w in range(nw):
                    if windows[w, 0] <= tm <= windows[w, 1] and best[w] > dep + 1:
                        best[w] = dep + 1
            if dep + 1 < K:
                if tail + 2 > cap:
                    live = tail - head
                    if head > 0 and live + 2 <= cap // 2:
                        q_seg[:live] = q_seg[head:tail]
                        q_node[:live] = q_node[head:tail]
                        q_dep[:live] = q_dep[head:tail]
                        q_tl[:live] = q_tl[head:tail]
                        q_len[:live] = q_len[head:tail]
                        q_yl[:live] = q_yl[head:tail]
                        q_yr[:live] = q_yr[head:tail]
                    else:
                        cap = 2 * cap
                        ns = np.empty(cap, np.int64)
                        nn = np.empty(cap, np.int64)
                        nd = np.empty(cap, np.int64)
                        nt = np.empty(cap)
                        nl = np.empty(cap)
                        nyl = np.empty((cap, d))
                        nyr = np.empty((cap, d))
                        ns[:live] = q_seg[head:tail]
                        nn[:live] = q_node[head:tail]
                        nd[:live] = q_dep[head:tail]
                        nt[:live] = q_tl[head:tail]
                        nl[:live] = q_len[head:tail]
                        nyl[:live] = q_yl[head:tail]
                        nyr[:live] = q_yr[head:tail]
                        q_seg, q_node, q_dep, q_tl, q_len, q_yl, q_yr = ns, nn, nd, nt, nl, nyl, nyr
                    head = 0
                    tail = live
                half = 0.5 * ln
                q_seg[tail] = seg
                q_node[tail] = 2 * node
                q_dep[tail] = dep + 1
                q_tl[tail] = tl
                q_len[tail] = half
                q_yl[tail] = q_yl[head]
                q_yr[tail] = ym
                tail += 1
                q_seg[tail] = seg
                q_node[tail] = 2 * node + 1
                q_dep[tail] = dep + 1
                q_tl[tail] = tm
                q_len[tail] = half
                q_yl[tail] = ym
                q_yr[tail] = q_yr[head]
                tail += 1
            head += 1

        mask = 0
        for w in range(nw):
            hist[w, best[w]] += 1
            if best[w] <= K:
                mask |= 1 << w
        combo[mask] += 1
    for w in range(nw):
        hist[w, none] += n_fast
    combo[0] += n_fast
    slack[0] += n_fast * tol


@nb.njit(cache=True)
def dense_paths(path0, npaths, k0, k1, chol, m, K, horizon):
    """Full grid W(t_k), k = 0..m 2^K, built with the same addressing as the
    scanning engines (no pruning).  For tests and small diagnostics."""
    d = chol.shape[0]
    n = m * (1 << K)
    h0 = horizon / m
    out = np.zeros((npaths, n + 1, d))
    z = np.empty(d)
    ym = np.empty(d)
    for p in range(npaths):
        pid = path0 + p
        for j in range(m):
            counter_normals(pid, j, 0, d, k0, k1, z)
            for i in range(d):
                acc = 0.0
                for k in range(i + 1):
                    acc += chol[i, k] * z[k]
                out[p, (j + 1) << K, i] = out[p, j << K, i] + math.sqrt(h0) * acc
            for dep in range(K):
                span = 1 << (K - dep)
                ln = h0 / (1 << dep)
                for node in range(1 << dep, 1 << (dep + 1)):
                    left = (j << K) + (node - (1 << dep)) * span
                    counter_normals(pid, j, node, d, k0, k1, z)
                    _bridge_mid(out[p, left], out[p, left + span], ln, chol, z, ym)
                    out[p, left + span // 2] = ym
    return out


@nb.njit(cache=True)
def pareto_filter(points):
    """Rows of ``points`` not weakly dominated by another row (duplicates kept once)."""
    n, d = points.shape
    keep = np.ones(n, np.bool_)
    for i in range(n):
        for j in range(n):
            if i == j or not keep[j]:
                continue
            dom = True
            for k in range(d):
                if points[j, k] < points[i, k]:
                    dom = False
                    break
            if dom:
                keep[i] = False
                break
    return points[keep]


@nb.njit(cache=True)
def _area2(a, b):
    # union area of boxes [0, a_i] x [0, b_i]
    order = np.argsort(-a)
    area = 0.0
    top = 0.0
    for idx in order:
        if b[idx] > top:
            area += a[idx] * (b[idx] - top)
            top = b[idx]
    return area


@nb.njit(cache=True)
def frontier_integral(points, lam):
    """Integral of exp(<lam, x>) over the union of orthants {x < v} for rows v.

    With y_i = exp(lam_i x_i) the weight becomes Lebesgue measure / prod(lam),
    so the value is a dominated-volume computation of boxes [0, y].
    """
    n, d = points.shape
    scale = 1.0
    for i in range(d):
        scale *= lam[i]
    if d == 1:
        best = points[0, 0]
        for k in range(1, n):
            if points[k, 0] > best:
                best = points[k, 0]
        return math.exp(lam[0] * best) / scale
    y = np.empty((n, d))
    for k in range(n):
        for i in range(d):
            y[k, i] = math.exp(lam[i] * points[k, i])
    if d == 2:
        # frontier sorted by first coordinate descending: telescoping sum
        return _area2(y[:, 0], y[:, 1]) / scale
    order = np.argsort(-y[:, 2])
    vol = 0.0
    for r in range(n):
        sel = order[: r + 1]
        nxt = y[order[r + 1], 2] if r + 1 < n else 0.0
        h = y[order[r], 2] - nxt
        if h > 0.0:
            vol += _area2(y[sel, 0], y[sel, 1]) * h
    return vol / scale


@nb.njit(cache=True, inline="always")
def _pareto_insert(front, nf, pt):
    d = pt.shape[0]
    for f in range(nf):
        dom = True
        for i in range(d):
            if front[f, i] < pt[i]:
                dom = False
                break
        if dom:
            return nf
    w = 0
    for f in range(nf):
        below = True
        for i in range(d):
            if front[f, i] > pt[i]:
                below = False
                break
        if not below:
            if w != f:
                front[w] = front[f]
            w += 1
    front[w] = pt
    return w + 1


@nb.njit(cache=True, nogil=True)
def frontier_scan(path0, npaths, k0, k1, chol, sig_diag, drift, lam, nbase, h0, K, log_tol,
                  log_rel, values, keep, pts, offsets):
    """Per-path Pareto frontier of v(t_k) = W(t_k) - drift t_k on [0, nbase h0]
    and the exact exponential-orthant integral over it.

    When ``keep`` is set the frontier rows are written to ``pts`` starting at
    ``offsets[p]`` (capacity permitting) and their count to ``offsets[p + 1]``.
    """
    d = chol.shape[0]
    q = 0.0
    for i in range(d):
        acc = 0.0
        for k in range(d):
            s_ik = 0.0
            for r in range(d):
                s_ik += chol[i, r] * chol[k, r]
            acc += s_ik * lam[k]
        q += lam[i] * acc
    fcap = 64
    front = np.empty((fcap, d))
    cap = max(256, 2 * nbase)
    q_seg = np.empty(cap, np.int64)
    q_node = np.empty(cap, np.int64)
    q_dep = np.empty(cap, np.int64)
    q_yl = np.empty((cap, d))
    q_yr = np.empty((cap, d))
    z = np.empty(d)
    ym = np.empty(d)
    yb = np.empty(d)
    yn = np.empty(d)
    sq0 = math.sqrt(h0)
    cursor = 0
    for p in range(npaths):
        pid = path0 + p
        for i in range(d):
            front[0, i] = 0.0
            yb[i] = 0.0
        nf = 1
        head = 0
        tail = 0
        for j in range(nbase):
            counter_normals(pid, j, 0, d, k0, k1, z)
            for i in range(d):
                acc = 0.0
                for k in range(i + 1):
                    acc += chol[i, k] * z[k]
                yn[i] = yb[i] + sq0 * acc - drift[i] * h0
            if nf + 1 > fcap:
                fcap *= 2
                nfront = np.empty((fcap, d))
                nfront[:nf] = front[:nf]
                front = nfront
            nf = _pareto_insert(front, nf, yn)
            if K > 0:
                q_seg[tail] = j
                q_node[tail] = 1
                q_dep[tail] = 0
                q_yl[tail] = yb
                q_yr[tail] = yn
                tail += 1
            yb[:] = yn

        while head < tail:
            dep = q_dep[head]
            ln = h0 / (1 << dep)
            yl = q_yl[head]
            yr = q_yr[head]
            # negligible weight region
            n_int = (1 << (K - dep)) - 1
            s_star = log_rel - math.log(n_int)
            sl = 0.0
            sr = 0.0
            for i in range(d):
                sl += lam[i] * yl[i]
                sr += lam[i] * yr[i]
            skip = sl < s_star and sr < s_star and 2.0 * (s_star - sl) * (s_star - sr) > log_tol * q * ln
            if not skip:
                for f in range(nf):
                    bound = 0.0
                    for i in range(d):
                        gl = front[f, i] - yl[i]
                        gr = front[f, i] - yr[i]
                        if gl <= 0.0 or gr <= 0.0:
                            bound = 1.0
                            break
                        bound += math.exp(-2.0 * gl * gr / (sig_diag[i] * ln))
                    if bound < math.exp(-log_tol):
                        skip = True
                        break
            if skip:
                head += 1
                continue
            seg = q_seg[head]
            node = q_node[head]
            counter_normals(pid, seg, node, d, k0, k1, z)
            _bridge_mid(yl, yr, ln, chol, z, ym)
            if nf + 1 > fcap:
                fcap *= 2
                nfront = np.empty((fcap, d))
                nfront[:nf] = front[:nf]
                front = nfront
            nf = _pareto_insert(front, nf, ym)
            if dep + 1 < K:
                if tail + 2 > cap:
                    live = tail - head
                    newcap = cap if live + 2 <= cap // 2 else 2 * cap
                    ns = np.empty(newcap, np.int64)
                    nn = np.empty(newcap, np.int64)
                    nd = np.empty(newcap, np.int64)
                    nyl = np.empty((newcap, d))
                    nyr = np.empty((newcap, d))
                    ns[:live] = q_seg[head:tail]
                    nn[:live] = q_node[head:tail]
                    nd[:live] = q_dep[head:tail]
                    nyl[:live] = q_yl[head:tail]
                    nyr[:live] = q_yr[head:tail]
                    q_seg, q_node, q_dep, q_yl, q_yr = ns, nn, nd, nyl, nyr
                    cap = newcap
                    tail = live
                    head = 0
                    yl = q_yl[head]
                    yr = q_yr[head]
                q_seg[tail] = seg
                q_node[tail] = 2 * node
                q_dep[tail] = dep + 1
                q_yl[tail] = yl
                q_yr[tail] = ym
                tail += 1
                q_seg[tail] = seg
                q_node[tail] = 2 * node + 1
                q_dep[tail] = dep + 1
                q_yl[tail] = ym
                q_yr[tail] = yr
                tail += 1
            head += 1

        if d <= 3:
            values[p] = frontier_integral(front[:nf], lam)
        if keep:
            start = offsets[p]
            room = min(nf, pts.shape[0] - start)
            if room > 0:
                pts[start:start + room] = front[:room]
            offsets[p + 1] = start + nf


@nb.njit(cache=True)
def grid_hit_weight(front, xnodes, cellw, counts, idx):
    """Sum of cell weights over tensor-grid nodes x strictly dominated by some
    row of ``front``.  ``xnodes[:, i]`` is increasing; ``cellw[:, i]`` holds
    the per-axis cell weights.  ``counts``/``idx`` are scratch arrays."""
    nf, d = front.shape
    g = xnodes.shape[0]
    for f in range(nf):
        for i in range(d):
            c = 0
            while c < g and xnodes[c, i] < front[f, i]:
                c += 1
            counts[f, i] = c
    for i in range(d):
        idx[i] = 0
    total = 0.0
    while True:
        hit = False
        for f in range(nf):
            inside = True
            for i in range(d):
                if idx[i] >= counts[f, i]:
                    inside = False
                    break
            if inside:
                hit = True
                break
        if hit:
            w = 1.0
            for i in range(d):
                w *= cellw[idx[i], i]
            total += w
        i = 0
        while i < d:
            idx[i] += 1
            if idx[i] < g:
                break
            idx[i] = 0
            i += 1
        if i == d:
            break
    return total
