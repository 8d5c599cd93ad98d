"""Pure-numpy versions of the compiled path loops.

Paths are advanced together, one time step per iteration, with the same
per-path counter streams (grid normals, step-indexed extremes, refinement,
zero-atom coin) and the same floating-point expressions as the
compiled kernel.  Library ``log`` implementations may differ in the last
ulp, so the two backends agree path by path except for rare ties.
"""
from __future__ import annotations

import numpy as np

from . import _ziggurat as _zig

GAMMA = np.uint64(0x9E3779B97F4A7C15)
PATH_SALT = np.uint64(0x632BE59BD9B4E019)
MAX_SALT = np.uint64(0xD1B54A32D192ED03)
MIN_SALT = np.uint64(0xABC98388FB8FAC03)
MID_SALT = np.uint64(0x8CB92BA72F3D8DD7)
ZERO_SALT = np.uint64(0xDB4F0B9175AE2165)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK52 = np.uint64(_zig.MASK52)
TWO_M53 = 1.0 / 9007199254740992.0
NEAR = 20.0
REFINE_REACH = 3.0
REFINE_TOL = 0.05
MAX_DEPTH = 24

AY_STOP, PLUS_STOP, MINUS_STOP, ZERO_STOP, TRUNC_STOP, EXIT_STOP = range(6)

def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed: int, paths) -> np.ndarray:
    s = mix64(np.array([seed], dtype=np.uint64))[0]
    return mix64(s ^ (np.asarray(paths, dtype=np.uint64) * GAMMA + PATH_SALT))


def unif_at(keys, j):
    """Uniform number j of each stream, without a counter."""
    j = np.asarray(j).astype(np.uint64)
    return ((mix64(keys + j * GAMMA) >> np.uint64(11)).astype(float) + 0.5) * TWO_M53


def unif(keys, ctr, idx=None):
    """Next uniform of each selected stream; advances the selected counters in place."""
    if idx is None:
        ctr += np.uint64(1)
        c, k = ctr, keys
    else:
        ctr[idx] += np.uint64(1)
        c, k = ctr[idx], keys[idx]
    return ((mix64(k + c * GAMMA) >> np.uint64(11)).astype(float) + 0.5) * TWO_M53


def znorm(keys, ctr, idx=None):
    """Ziggurat normals for the selected streams, consuming draws exactly as the kernel does."""
    sel = np.arange(keys.size) if idx is None else np.asarray(idx)
    out = np.empty(sel.size)
    pending = np.arange(sel.size)
    while pending.size:
        p = sel[pending]
        ctr[p] += np.uint64(1)
        r = mix64(keys[p] + ctr[p] * GAMMA)
        li = (r & np.uint64(0xFF)).astype(np.intp)
        r = r >> np.uint64(8)
        neg = (r & np.uint64(1)).astype(bool)
        rabs = (r >> np.uint64(1)) & _MASK52
        x = rabs.astype(float) * _zig.W[li]
        x = np.where(neg, -x, x)
        ok = rabs < _zig.K[li]
        out[pending[ok]] = x[ok]
        retry = []
        wedge = np.flatnonzero(~ok & (li != 0))
        if wedge.size:
            lw = li[wedge]
            u = unif(keys, ctr, p[wedge])
            acc = (_zig.F[lw - 1] - _zig.F[lw]) * u + _zig.F[lw] < np.exp(-0.5 * x[wedge] * x[wedge])
            out[pending[wedge[acc]]] = x[wedge[acc]]
            retry.append(pending[wedge[~acc]])
        tail = np.flatnonzero(~ok & (li == 0))
        while tail.size:
            xx = -np.log1p(-unif(keys, ctr, p[tail])) / _zig.R
            yy = -np.log1p(-unif(keys, ctr, p[tail]))
            acc = yy + yy > xx * xx
            t = tail[acc]
            out[pending[t]] = np.where(neg[t], -(_zig.R + xx[acc]), _zig.R + xx[acc])
            tail = tail[~acc]
        pending = np.concatenate(retry) if retry else pending[:0]
    return out


def normals(seed: int, path: int, n: int) -> np.ndarray:
    keys = path_keys(seed, [path])
    ctr = np.zeros(1, dtype=np.uint64)
    return np.array([znorm(keys, ctr)[0] for _ in range(n)])


def table_at(xs, ys, x):
    j = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 1)
    out = ys[j].copy()
    inner = j + 1 < xs.size
    ji = j[inner]
    out[inner] = ys[ji] + (ys[ji + 1] - ys[ji]) * (x[inner] - xs[ji]) / (xs[ji + 1] - xs[ji])
    return out


def cost_at(cost, s):
    kind, a, sigma, e, cap, xs, ys = cost
    s = np.asarray(s, dtype=float)
    if kind == 1:
        return np.full(s.shape, a)
    if kind == 2:
        v = a + sigma * s
        with np.errstate(all="ignore"):
            g = np.where(v > 0, np.power(np.where(v > 0, v, 1.0), -e), cap)
        return np.minimum(g, cap)
    if kind == 3:
        return table_at(xs, ys, s)
    return np.zeros(s.shape)


def _near(lvl, x0, x1, dt):
    return (lvl - x0) * (lvl - x1) < NEAR * dt


def _bridge(x0, x1, dt, u, sign):
    return 0.5 * (x0 + x1 + sign * np.sqrt((x1 - x0) * (x1 - x0) - 2.0 * dt * np.log(u)))


class _Paths:
    """Struct of arrays for the live paths plus the finished outputs."""

    def __init__(self, n, seed, first_path):
        self.n = n
        self.idx = np.arange(n)
        self.keys = path_keys(seed, np.arange(first_path, first_path + n))
        self.ctr = np.zeros(n, dtype=np.uint64)
        self.kmax = mix64(self.keys ^ MAX_SALT)
        self.kmin = mix64(self.keys ^ MIN_SALT)
        self.kmid = mix64(self.keys ^ MID_SALT)
        self.cmid = np.zeros(n, dtype=np.uint64)
        z = np.zeros(n)
        self.w, self.S, self.I, self.integ = z.copy(), z.copy(), z.copy(), z.copy()
        self.steps = np.zeros(n, dtype=np.int64)
        self.out = [np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n),
                    np.empty(n, dtype=np.int8), np.empty(n, dtype=np.int64)]
        self.extra = {}

    def finish(self, mask, w, code, dt):
        if not mask.any():
            return
        i = self.idx[mask]
        wv = np.asarray(w, dtype=float)[mask] if np.ndim(w) else np.full(mask.sum(), w)
        self.out[0][i] = wv
        self.out[1][i] = self.S[mask]
        self.out[2][i] = self.I[mask]
        self.out[3][i] = self.steps[mask] * dt
        self.out[4][i] = self.integ[mask]
        self.out[5][i] = code
        self.out[6][i] = self.steps[mask]

    def keep(self, mask):
        for name in ("idx", "keys", "ctr", "kmax", "kmin", "kmid", "cmid", "w", "S", "I", "integ", "steps"):
            setattr(self, name, getattr(self, name)[mask])
        for k, v in self.extra.items():
            self.extra[k] = v[mask]


def _step(P, dt, bridge, up_lvl, lo_lvl):
    """One Gaussian step with optional bridge extremes; returns (w1, M, m)."""
    w, sq = P.w, np.sqrt(dt)
    w1 = w + sq * znorm(P.keys, P.ctr)
    P.steps += 1
    M = np.maximum(w, w1)
    m = np.minimum(w, w1)
    if bridge:
        nm = np.flatnonzero(_near(up_lvl, w, w1, dt))
        if nm.size:
            M[nm] = _bridge(w[nm], w1[nm], dt, unif_at(P.kmax[nm], P.steps[nm]), 1.0)
        lo = lo_lvl(M)
        nn = np.flatnonzero(_near(lo, w, w1, dt))
        if nn.size:
            m[nn] = _bridge(w[nn], w1[nn], dt, unif_at(P.kmin[nn], P.steps[nn]), -1.0)
    return w1, M, m


def run_ay(bx, by, x_hat, cost, n_paths, dt, seed, level_cap, max_steps, bridge, first_path=0):
    P = _Paths(n_paths, seed, first_path)
    P.extra["b"] = table_at(bx, by, np.zeros(n_paths))
    P.extra["g0"] = cost_at(cost, np.zeros(n_paths))
    while P.idx.size:
        out_of_steps = P.steps >= max_steps
        P.finish(out_of_steps, P.w, TRUNC_STOP, dt)
        P.keep(~out_of_steps)
        if not P.idx.size:
            break
        b, g0 = P.extra["b"], P.extra["g0"]
        w1, M, m = _step(P, dt, bridge, P.S, lambda M: np.maximum(P.I, b))
        P.I = np.minimum(P.I, m)
        done = np.zeros(P.idx.size, dtype=bool)
        wstop = w1.copy()
        if bridge:
            early = m <= b
            P.integ[early] += g0[early] * dt
            wstop[early] = b[early]
            P.finish(early, wstop, AY_STOP, dt)
            done |= early
        g1 = g0.copy()
        new = ~done & (M > P.S)
        P.S[new] = M[new]
        top = new & (P.S >= x_hat)
        if top.any():
            P.S[top] = x_hat
            P.integ[top] += 0.5 * (g0[top] + cost_at(cost, P.S[top])) * dt
            P.finish(top, np.full(P.idx.size, x_hat), AY_STOP, dt)
            done |= top
        cap = new & ~top & (P.S > level_cap)
        if cap.any():
            P.integ[cap] += g0[cap] * dt
            P.finish(cap, w1, TRUNC_STOP, dt)
            done |= cap
        upd = new & ~top & ~cap
        if upd.any():
            b[upd] = table_at(bx, by, P.S[upd])
            g1[upd] = cost_at(cost, P.S[upd])
        live = ~done
        P.integ[live] += 0.5 * (g0[live] + g1[live]) * dt
        g0[live] = g1[live]
        hit = live & (w1 <= b)
        P.finish(hit, b, AY_STOP, dt)
        done |= hit
        low = ~done & (P.I < -level_cap)
        P.finish(low, w1, TRUNC_STOP, dt)
        done |= low
        P.w = w1
        P.keep(~done)
    o = P.out
    o[2] = np.minimum(o[2], o[0])
    return tuple(o)


def seg_slope(xs, ys, x):
    """Slope of the table segment that contains each x (0 past the last node)."""
    j = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 1)
    out = np.zeros(np.shape(x))
    inner = j + 1 < xs.size
    ji = j[inner]
    out[inner] = (ys[ji + 1] - ys[ji]) / (xs[ji + 1] - xs[ji])
    return out


class _PkTables:
    def __init__(self, px, py, mx, my, cost, dt, bridge):
        self.px, self.py, self.mx, self.my, self.cost = px, py, mx, my, cost
        self.tol = REFINE_TOL * np.sqrt(dt)
        self.bridge = bridge


def _pk_refine(P, T, sel, w, w1, h):
    r = REFINE_REACH * np.sqrt(h)
    S, I, ap, am = P.S[sel], P.I[sel], P.extra["ap"][sel], P.extra["am"][sel]
    lo = _near(I, w, w1, h) & _near(am, w, w1, h) & (np.abs(seg_slope(T.mx, T.my, -I)) * r > T.tol)
    hi = _near(S, w, w1, h) & _near(ap, w, w1, h) & (np.abs(seg_slope(T.px, T.py, S)) * r > T.tol)
    return lo | hi


def _pk_leaf(P, T, sel, w, w1, h, sub=False):
    """Unrefined (sub)step for the paths in ``sel``; returns (stopped, w_after, code)."""
    S, I = P.S[sel], P.I[sel]
    ap, am, g0 = P.extra["ap"][sel], P.extra["am"][sel], P.extra["g0"][sel]
    M = np.maximum(w, w1)
    m = np.minimum(w, w1)
    if T.bridge:
        nm = np.flatnonzero(_near(S, w, w1, h))
        if nm.size:
            u = unif(P.kmid, P.cmid, sel[nm]) if sub else unif_at(P.kmax[sel[nm]], P.steps[sel[nm]])
            M[nm] = _bridge(w[nm], w1[nm], h, u, 1.0)
        nn = np.flatnonzero(_near(np.maximum(I, ap), w, w1, h))
        if nn.size:
            u = unif(P.kmid, P.cmid, sel[nn]) if sub else unif_at(P.kmin[sel[nn]], P.steps[sel[nn]])
            m[nn] = _bridge(w[nn], w1[nn], h, u, -1.0)
    s_old, i_old = S.copy(), I.copy()
    g1 = g0.copy()
    up = M > S
    S[up] = M[up]
    ap[up] = table_at(T.px, T.py, M[up])
    g1[up] = cost_at(T.cost, M[up])
    dn = m < I
    I[dn] = m[dn]
    am[dn] = table_at(T.mx, T.my, -m[dn])
    P.integ[sel] += 0.5 * (g0 + g1) * h
    dplus = ap - m
    dminus = M - am
    stop = (dplus >= 0) | (dminus >= 0)
    plus = stop & (dplus >= dminus)
    minus = stop & ~plus
    w_after = w1.copy()
    w_after[plus] = ap[plus]
    I[plus] = np.where(ap < i_old, ap, i_old)[plus]
    w_after[minus] = am[minus]
    S[minus] = np.where(am > s_old, am, s_old)[minus]
    code = np.where(plus, PLUS_STOP, MINUS_STOP)
    P.S[sel], P.I[sel] = S, I
    P.extra["ap"][sel], P.extra["am"][sel], P.extra["g0"][sel] = ap, am, g1
    return stop, w_after, code


def _pk_split(P, T, k, w, w1, h, depth):
    # one path (k is a length-1 index array), refined by bridge midpoints
    if T.bridge and depth < MAX_DEPTH and _pk_refine(P, T, k, w, w1, h)[0]:
        wm = 0.5 * (w + w1) + np.sqrt(0.25 * h) * znorm(P.kmid, P.cmid, k)
        res = _pk_split(P, T, k, w, wm, 0.5 * h, depth + 1)
        if res[0][0]:
            return res
        return _pk_split(P, T, k, wm, w1, 0.5 * h, depth + 1)
    return _pk_leaf(P, T, k, w, w1, h, sub=depth > 0)


def run_perkins(px, py, mx, my, zero_mass, cost, n_paths, dt, seed, level_cap, max_steps, bridge,
                first_path=0):
    P = _Paths(n_paths, seed, first_path)
    T = _PkTables(px, py, mx, my, cost, dt, bridge)
    z = unif_at(mix64(P.keys ^ ZERO_SALT), 0) <= zero_mass
    P.finish(z, 0.0, ZERO_STOP, dt)
    P.keep(~z)
    n = P.idx.size
    P.extra["ap"] = table_at(px, py, np.zeros(n))
    P.extra["am"] = table_at(mx, my, np.zeros(n))
    P.extra["g0"] = cost_at(cost, np.zeros(n))
    sq = np.sqrt(dt)
    while P.idx.size:
        out_of_steps = P.steps >= max_steps
        if out_of_steps.any():
            P.finish(out_of_steps, P.w, TRUNC_STOP, dt)
            P.keep(~out_of_steps)
            if not P.idx.size:
                break
        w = P.w
        w1 = w + sq * znorm(P.keys, P.ctr)
        P.steps += 1
        stop = np.zeros(w.size, dtype=bool)
        w_after = w1.copy()
        code = np.zeros(w.size, dtype=np.int8)
        split = _pk_refine(P, T, np.arange(w.size), w, w1, dt) if bridge else stop.copy()
        plain = np.flatnonzero(~split)
        if plain.size:
            stop[plain], w_after[plain], code[plain] = _pk_leaf(P, T, plain, w[plain], w1[plain], dt)
        for k in np.flatnonzero(split):
            kk = np.array([k])
            st, wa, cd = _pk_split(P, T, kk, w[kk], w1[kk], dt, 0)
            stop[k], w_after[k], code[k] = st[0], wa[0], cd[0]
        trunc = ~stop & ((P.S > level_cap) | (P.I < -level_cap))
        for mask, c in ((stop & (code == PLUS_STOP), PLUS_STOP), (stop & (code == MINUS_STOP), MINUS_STOP),
                        (trunc, TRUNC_STOP)):
            if mask.any():
                P.S[mask] = np.maximum(P.S[mask], w_after[mask])
                P.I[mask] = np.minimum(P.I[mask], w_after[mask])
                P.finish(mask, w_after, c, dt)
        P.w = w_after
        P.keep(~(stop | trunc))
    return tuple(P.out)


def run_cw(nx, left, right, cost, n_paths, dt, seed, level_cap, max_steps, bridge, first_path=0):
    P = _Paths(n_paths, seed, first_path)
    P.w[:] = nx[0]
    P.S[:] = max(nx[0], 0.0)
    P.I[:] = min(nx[0], 0.0)
    P.extra["node"] = np.zeros(n_paths, dtype=np.int64)
    P.extra["g0"] = cost_at(cost, P.S)
    leaf = left[0] < 0
    if leaf:
        P.finish(np.ones(n_paths, dtype=bool), P.w, EXIT_STOP, dt)
        return tuple(P.out)
    while P.idx.size:
        node, g0 = P.extra["node"], P.extra["g0"]
        out_of_steps = P.steps >= max_steps
        if out_of_steps.any():
            P.finish(out_of_steps, P.w, TRUNC_STOP, dt)
            P.keep(~out_of_steps)
            if not P.idx.size:
                break
            node, g0 = P.extra["node"], P.extra["g0"]
        a = nx[left[node]]
        b = nx[right[node]]
        w1, M, m = _step(P, dt, bridge, np.minimum(P.S, b), lambda M: np.maximum(P.I, a))
        da = a - m
        db = M - b
        ex = (da >= 0) | (db >= 0)
        lo_exit = ex & (da >= db)
        hi_exit = ex & ~lo_exit
        w1[lo_exit] = a[lo_exit]
        w1[hi_exit] = b[hi_exit]
        node[lo_exit] = left[node[lo_exit]]
        node[hi_exit] = right[node[hi_exit]]
        M[ex] = np.minimum(M[ex], b[ex])
        m[ex] = np.maximum(m[ex], a[ex])
        g1 = g0.copy()
        up = M > P.S
        P.S[up] = M[up]
        g1[up] = cost_at(cost, P.S[up])
        P.I = np.minimum(P.I, m)
        P.integ += 0.5 * (g0 + g1) * dt
        g0[:] = g1
        P.w = w1
        trunc = (P.S > level_cap) | (P.I < -level_cap)
        fin = ~trunc & (left[node] < 0)
        P.finish(trunc, w1, TRUNC_STOP, dt)
        P.finish(fin, w1, EXIT_STOP, dt)
        P.keep(~(trunc | fin))
    return tuple(P.out)
