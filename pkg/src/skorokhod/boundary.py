"""Azema-Yor and Perkins stopping boundaries.

Both boundaries come from tangent constructions on the call/put curves, and
both reduce to locating the sign change of a monotone residual:

* AY:       beta(s)   = sup{y : E[X | X >= y] <= s}
* Perkins:  alpha+(s) = inf{y < 0 : C(s) - P(y) - P'(y+)(s - y) <= 0}
            alpha-(i) = -alpha+(-i) computed on the reflected measure

For purely atomic measures the answer is always an atom and is found by a
search over precomputed atom thresholds; otherwise a vectorised bisection
is run to float resolution and snapped onto any atom inside the bracket.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateDelta0, NoMassBelow, NonIntegrableBoundary
from .measure import TargetMeasure
from .quadrature import integrate

BISECT_ITERS = 110


def _arr(x):
    return np.asarray(x, dtype=float)


def _solve(g, lo, hi, strict: bool, iters: int = BISECT_ITERS):
    """Bracket the switch point of a non-decreasing residual.

    ``g(x, idx)`` evaluates the residual of elements ``idx`` at ``x``.
    Keeps ``pred(lo)`` False and ``pred(hi)`` True, where pred is ``g > 0``
    (strict) or ``g >= 0``.  Each round takes an Illinois regula-falsi
    point and probes it two ulps either side, so a smooth root is pinned
    in a handful of rounds; every third round bisects, which keeps jumps
    and flat stretches converging.  Only unconverged elements are evaluated.
    """
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    allidx = np.arange(lo.size)
    glo = np.asarray(g(lo, allidx), dtype=float).copy()
    ghi = np.asarray(g(hi, allidx), dtype=float).copy()
    last = np.zeros(lo.shape, dtype=np.int8)
    for it in range(iters):
        width = hi - lo
        idx = np.flatnonzero((width > 1e-15 * np.maximum(np.abs(lo), np.abs(hi))) & (width > 1e-300))
        if idx.size == 0:
            break
        l, h, gl, gh, ls = lo[idx], hi[idx], glo[idx], ghi[idx], last[idx]
        with np.errstate(all="ignore"):
            x = l - gl * (h - l) / (gh - gl)
        mid = 0.5 * (l + h)
        x = np.where(~np.isfinite(x) | (it % 3 == 2), mid, x)
        d = 4e-16 * np.maximum(np.abs(x), 1e-290)
        # a zero residual at an end puts the secant point on it; pull inside
        x = np.clip(x, np.minimum(l + 2 * d, mid), np.maximum(h - 2 * d, mid))
        for probe in (x - d, x + d):
            probe = np.where((probe > l) & (probe < h), probe, mid)
            gp = np.asarray(g(probe, idx), dtype=float)
            up = (gp > 0) if strict else (gp >= 0)
            move_hi = up & (probe < h)
            move_lo = ~up & (probe > l)
            # Illinois: damp the stale end when the same side moves twice
            gl = np.where(move_hi & (ls == 1), 0.5 * gl, gl)
            gh = np.where(move_lo & (ls == -1), 0.5 * gh, gh)
            h = np.where(move_hi, probe, h)
            gh = np.where(move_hi, gp, gh)
            l = np.where(move_lo, probe, l)
            gl = np.where(move_lo, gp, gl)
            ls = np.where(move_hi, 1, np.where(move_lo, -1, ls)).astype(np.int8)
        lo[idx], hi[idx], glo[idx], ghi[idx], last[idx] = l, h, gl, gh, ls
    return lo, hi


def _expand(ok, start, step_sign):
    """Push ``start`` outward (doubling) until ok(start) holds everywhere."""
    x = start.copy()
    for _ in range(2000):
        bad = ~ok(x)
        if not bad.any():
            return x
        x = np.where(bad, x + step_sign * np.maximum(1.0, np.abs(x)), x)
    raise NonIntegrableBoundary("could not bracket the boundary root")


def _snap(value, lo, hi, atoms, accept):
    """Replace bisection results by an atom lying in [lo, hi] when one qualifies."""
    if atoms.size == 0:
        return value
    k = np.searchsorted(atoms, lo, side="left")
    k = np.minimum(k, atoms.size - 1)
    a = atoms[k]
    inside = (a >= lo) & (a <= hi)
    if inside.any():
        ok = inside.copy()
        ok[inside] = accept(a[inside], inside)
        value = np.where(ok, a, value)
    return value


def tabulate(f, lo: float, hi: float, breakpoints=(), tol: float = 1e-10, n0: int = 257,
             max_nodes: int = 400_000, min_width: float = 1e-13):
    """Piecewise-linear table of a monotone, right-continuous f on [lo, hi].

    Intervals are bisected until linear interpolation is within ``tol`` at
    the midpoint or they are narrower than ``min_width`` (relative to
    max(1, |x|)); jumps end up bracketed by nodes that close.
    """
    pts = np.concatenate([np.linspace(lo, hi, n0), [p for p in breakpoints if lo < p < hi]])
    xs = np.unique(pts)
    ys = np.asarray(f(xs), dtype=float)
    # only intervals created in the previous round are re-examined
    xl, xr, yl, yr = xs[:-1], xs[1:], ys[:-1], ys[1:]
    new_x, new_y = [xs], [ys]
    count = xs.size
    for _ in range(200):
        if xl.size == 0 or count > max_nodes:
            break
        mid = 0.5 * (xl + xr)
        ym = np.asarray(f(mid), dtype=float)
        err = np.abs(ym - 0.5 * (yl + yr))
        bad = (err > tol) & (xr - xl > min_width * np.maximum(1.0, np.abs(mid)))
        new_x.append(mid[bad])
        new_y.append(ym[bad])
        count += int(bad.sum())
        m, ymb = mid[bad], ym[bad]
        xl, xr = np.concatenate([xl[bad], m]), np.concatenate([m, xr[bad]])
        yl, yr = np.concatenate([yl[bad], ymb]), np.concatenate([ymb, yr[bad]])
    xs = np.concatenate(new_x)
    ys = np.concatenate(new_y)
    order = np.argsort(xs, kind="stable")
    return xs[order], ys[order]


def table_eval(xs, ys, x):
    """Right-continuous evaluation of a table produced by ``tabulate``."""
    x = _arr(x)
    p = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 1)
    q = np.minimum(p + 1, xs.size - 1)
    dx = xs[q] - xs[p]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dx > 0, (x - xs[p]) / dx, 0.0)
    return ys[p] + (ys[q] - ys[p]) * np.clip(t, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Azema-Yor


class AyBoundary:
    """beta, the barycentre b, and the law of the maximum under tau_beta."""

    kind = "ay"

    def __init__(self, m: TargetMeasure):
        self.measure = m
        self.x_hat = m.support_hi
        self.x_check = m.support_lo
        ax = m.atom_x
        if ax.size:
            mass = m.mass_ge(ax)
            self._atom_s1 = ax + m.call(ax) / mass
        else:
            self._atom_s1 = ax

    # barycentres -------------------------------------------------------------
    def b(self, x):
        """E[X | X > x] for x < x_hat and x otherwise (right-continuous)."""
        x = _arr(x)
        m = self.measure
        with np.errstate(divide="ignore", invalid="ignore"):
            v = x + m.call(x) / m.mass_gt(x)
        return np.where(x < self.x_hat, v, x)

    def b_left(self, x):
        """E[X | X >= x] (left-continuous version of b)."""
        x = _arr(x)
        m = self.measure
        with np.errstate(divide="ignore", invalid="ignore"):
            v = x + m.call(x) / m.mass_ge(x)
        return np.where(x <= self.x_hat, v, x)

    # beta ------------------------------------------------------------------------
    def beta(self, s):
        s = _arr(s)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.where(s >= self.x_hat, s, self.x_check)
        live = (s > 0) & (s < self.x_hat)
        if live.any():
            out[live] = self._beta_inner(s[live])
        return out[0] if scalar else out

    def _beta_inner(self, s):
        m = self.measure
        if m.is_atomic:
            j = np.searchsorted(self._atom_s1, s, side="right") - 1
            return m.atom_x[np.clip(j, 0, m.atom_x.size - 1)]
        if np.isfinite(self.x_check):
            lo = np.full_like(s, self.x_check)
        else:
            lo = _expand(lambda y: self.b_left(y) <= s, -np.ones_like(s), -1.0)
        hi = np.minimum(s, self.x_hat)
        lo, hi = _solve(lambda y, i: self.b_left(y) - s[i], lo, hi, strict=True)
        return _snap(lo, lo, hi, m.atom_x, lambda a, sel: self.b_left(a) <= s[sel])

    # structure -------------------------------------------------------------------
    def jumps(self) -> np.ndarray:
        """Levels s in (0, x_hat] at which beta is discontinuous."""
        m = self.measure
        pts = [float(self.b(lo)) for lo, hi in m.gaps()]
        if m.atom_x.size and m.atom_x[-1] == self.x_hat:
            pts.append(self.x_hat)
        return np.unique([p for p in pts if 0 < p <= self.x_hat])

    def breakpoints(self) -> np.ndarray:
        """Levels where beta may jump or change slope."""
        k = self.measure.kinks()
        pts = np.concatenate([self.b(k), self.b_left(k)])
        pts = pts[np.isfinite(pts) & (pts > 0) & (pts < self.x_hat)]
        return np.unique(pts)

    def table(self, s_max: float | None = None, tol: float = 1e-10, min_width: float = 1e-13):
        """(xs, ys) piecewise-linear right-continuous table of beta on [0, s_max]."""
        s_max = self.x_hat if s_max is None else min(s_max, self.x_hat)
        m = self.measure
        if m.is_atomic:
            s1 = self._atom_s1
            ax = m.atom_x
            keep = s1 < s_max
            xs = [0.0]
            ys = [ax[0]]
            for a, t in zip(ax[keep][1:], s1[keep][1:]):
                xs += [t, t]
                ys += [ys[-1], a]
            xs.append(s_max)
            ys.append(ys[-1])
            return np.array(xs), np.array(ys)
        return tabulate(self.beta, 0.0, s_max, self.breakpoints(), tol=tol, min_width=min_width)

    # law of the maximum --------------------------------------------------------------
    def max_survival(self, s):
        """P(S_tau >= s) = exp(-int_0^s dr / (r - beta(r)))."""
        return _exp_survival(self.beta, self.x_hat, self.breakpoints(), s,
                             atom_at_top=self.measure.atom_x.size > 0 and self.measure.atom_x[-1] == self.x_hat,
                             top_mass=float(self.measure.atom_p[-1]) if self.measure.atom_x.size else 0.0)


def _exp_survival(boundary, x_hat, points, s, atom_at_top=False, top_mass=0.0):
    s_arr = np.atleast_1d(_arr(s))
    if np.any(s_arr > x_hat):
        raise NonIntegrableBoundary("no mass above the requested level: s exceeds the support")
    out = np.empty_like(s_arr)
    for k, sv in enumerate(s_arr):
        if sv <= 0:
            out[k] = 1.0
            continue
        if sv == x_hat and not atom_at_top:
            out[k] = 0.0
            continue
        r = integrate(lambda r: 1.0 / (r - boundary(r)), 0.0, sv, points=points, tol=1e-12)
        out[k] = 0.0 if r.diverged else math.exp(-r.value)
    return out[0] if np.ndim(s) == 0 else out


# ---------------------------------------------------------------------------
# Perkins


class _AlphaPlus:
    """alpha+ and its inverse a+ for a measure with no atom at zero."""

    def __init__(self, m: TargetMeasure):
        self.m = m
        self.x_hat = m.support_hi
        self.x_check = m.support_lo
        neg = m.atom_x[m.atom_x < 0]
        self.neg_atoms = neg
        if m.is_atomic and neg.size:
            # threshold level from which each negative atom satisfies k_R <= 0
            t = self.a_plus(neg, side=1)
            self._rev_t = t[::-1]
        else:
            self._rev_t = None

    def k_right(self, y, s):
        """C(s) - P(y) - P'(y+)(s - y), using C(s) = P(s) - s."""
        return self.m.put_bregman(y, s, 1) - s

    def alpha_plus(self, s):
        s = _arr(s)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.where(s >= self.x_hat, self.x_check, 0.0)
        live = (s >= 0) & (s < self.x_hat)
        if live.any():
            out[live] = self._inner(s[live])
        return out[0] if scalar else out

    def _inner(self, s):
        m = self.m
        if self._rev_t is not None:
            count = np.searchsorted(self._rev_t, s, side="right")
            j = self.neg_atoms.size - count
            return self.neg_atoms[np.clip(j, 0, self.neg_atoms.size - 1)]
        if np.isfinite(self.x_check):
            lo = np.full_like(s, self.x_check - 1.0)
        else:
            lo = _expand(lambda y: self.k_right(y, s) > 0, -np.ones_like(s), -1.0)
        hi = np.zeros_like(s)
        lo, hi = _solve(lambda y, i: -self.k_right(y, s[i]), lo, hi, strict=False)
        return _snap(hi, lo, hi, self.neg_atoms, lambda a, sel: self.k_right(a, s[sel]) <= 0)

    def a_plus(self, w, side: int = 1):
        """Level t > 0 where the tangent to P at w (slope P'(w+/-)) meets C."""
        w = np.atleast_1d(_arr(w)).astype(float)
        m = self.m
        gap = lambda t: m.put_bregman(w, t, side) - t
        lo = np.zeros_like(w)
        if np.isfinite(self.x_hat):
            hi = np.full_like(w, self.x_hat)
        else:
            hi = _expand(lambda t: gap(t) <= 0, np.ones_like(w), 1.0)
        lo, hi = _solve(lambda t, i: t - m.put_bregman(w[i], t, side), lo, hi, strict=False)
        return np.where(w >= 0, np.nan, hi)


class PerkinsBoundary:
    """alpha+ (of the running max), alpha- (of the running min) and inverses.

    Computed on the measure with its atom at zero removed; the removed mass
    is kept in ``zero_mass`` for the randomisation at time zero.
    """

    kind = "perkins"

    def __init__(self, m: TargetMeasure):
        star, z = m.star()
        self.measure = m
        self.star = star
        self.zero_mass = z
        self.x_hat = star.support_hi
        self.x_check = star.support_lo
        self._plus = _AlphaPlus(star)
        self._minus = _AlphaPlus(star.reflect())

    def alpha_plus(self, s):
        return self._plus.alpha_plus(s)

    def alpha_minus(self, i):
        return -self._minus.alpha_plus(-_arr(i))

    def a_plus(self, w, side: int = 1):
        out = self._plus.a_plus(w, side)
        return out[0] if np.ndim(w) == 0 else out

    def a_minus(self, w, side: int = 1):
        out = -self._minus.a_plus(-_arr(w), side)
        return out[0] if np.ndim(w) == 0 else out

    def a_bar(self, w):
        """w for w >= 0, a+(w) for w < 0."""
        w = _arr(w)
        out = np.array(w, dtype=float, copy=True)
        neg = w < 0
        if np.any(neg):
            if out.ndim == 0:
                return float(self.a_plus(float(w)))
            out[neg] = self._plus.a_plus(w[neg])
        return out

    # structure -------------------------------------------------------------------
    def breakpoints_plus(self) -> np.ndarray:
        m = self.star
        k = m.kinks()
        neg = k[k < 0]
        pts = [k[(k > 0) & (k < self.x_hat)]]
        if neg.size:
            pts += [self._plus.a_plus(neg, 1), self._plus.a_plus(neg, -1)]
        pts = np.concatenate(pts)
        pts = pts[np.isfinite(pts) & (pts > 0) & (pts < self.x_hat)]
        return np.unique(pts)

    def breakpoints_minus(self) -> np.ndarray:
        """Breakpoints of u -> alpha-(-u) on u > 0."""
        m = self.star.reflect()
        k = m.kinks()
        neg = k[k < 0]
        pts = [k[(k > 0) & (k < -self.x_check)]]
        if neg.size:
            pts += [self._minus.a_plus(neg, 1), self._minus.a_plus(neg, -1)]
        pts = np.concatenate(pts)
        pts = pts[np.isfinite(pts) & (pts > 0) & (pts < -self.x_check)]
        return np.unique(pts)

    def jumps_plus(self) -> np.ndarray:
        """Levels s > 0 where alpha+ is discontinuous."""
        pts = [float(self._plus.a_plus(hi)[0]) for lo, hi in self.star.gaps() if hi < 0]
        return np.array(sorted(p for p in pts if 0 < p < self.x_hat))

    def jumps_minus(self) -> np.ndarray:
        """Levels i < 0 where alpha- is discontinuous."""
        pts = [float(self.a_minus(lo)) for lo, hi in self.star.gaps() if lo > 0]
        return np.array(sorted(p for p in pts if self.x_check < p < 0))

    def table_plus(self, s_max=None, tol=1e-10, min_width=1e-13):
        s_max = self.x_hat if s_max is None else min(s_max, self.x_hat)
        return tabulate(self.alpha_plus, 0.0, s_max, self.breakpoints_plus(), tol=tol, min_width=min_width)

    def table_minus(self, u_max=None, tol=1e-10, min_width=1e-13):
        """Table of u -> alpha-(-u) for u in [0, u_max]."""
        u_max = -self.x_check if u_max is None else min(u_max, -self.x_check)
        return tabulate(lambda u: self.alpha_minus(-u), 0.0, u_max, self.breakpoints_minus(), tol=tol,
                        min_width=min_width)

    # law of the maximum ----------------------------------------------------------------
    def alpha_plus_survival(self, s):
        """exp(-int_0^s dr / (r - alpha+(r))): survival of S against the alpha+ rule alone."""
        return _exp_survival(self.alpha_plus, self.x_hat, self.breakpoints_plus(), s)

    def flat_survival(self, w, t, s):
        """P(S_tau >= s) for s in a stretch [t, s] on which alpha+ equals w."""
        m = self.star
        q_t = m.mass_ge(t) + m.mass_le(w)
        # int_[t, s) (r - w) mu(dr) written with C and tail masses
        integ = (m.call(t) - m.call(s) + t * m.mass_ge(t) - s * m.mass_ge(s)
                 - w * (m.mass_ge(t) - m.mass_ge(s)))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = (q_t * (t - w) - integ) / (s - w)
        return (1.0 - self.zero_mass) * np.clip(q, 0.0, 1.0)

    def max_survival(self, s):
        """P(S_tau >= s) for the Perkins embedding.

        Along a stretch where alpha+ = w, paths are killed at rate
        dr/(r - w) and by the alpha- rule exactly where mu has mass, which
        integrates to

            Q(s)(s - w) = Q(t)(t - w) - int_[t, s) (r - w) mu(dr)

        with t the first level at which alpha+ = w.
        """
        s_arr = np.atleast_1d(_arr(s))
        if np.any(s_arr > self.x_hat):
            raise NonIntegrableBoundary("no mass above the requested level: s exceeds the support")
        out = np.ones_like(s_arr)
        pos = s_arr > 0
        if pos.any():
            sv = s_arr[pos]
            w = self.alpha_plus(sv)
            # first level at which alpha+ reaches w
            t = np.minimum(self._plus.a_plus(w, 1), sv)
            out[pos] = self.flat_survival(w, t, sv)
        return out[0] if np.ndim(s) == 0 else out


# ---------------------------------------------------------------------------
# module-level conveniences


def ay_boundary(m: TargetMeasure) -> AyBoundary:
    return AyBoundary(m)


def perkins_boundary(m: TargetMeasure) -> PerkinsBoundary:
    if m.zero_mass >= 1.0:
        raise DegenerateDelta0("the target measure is a point mass at 0")
    return PerkinsBoundary(m)


def max_survival(bd: AyBoundary | PerkinsBoundary, s):
    return bd.max_survival(s)


def reverse_barycentre(m: TargetMeasure, x):
    """E[X | X <= x]."""
    x = _arr(x)
    below = m.mass_le(x)
    if np.any(below <= 0):
        raise NoMassBelow("no mass at or below the requested level")
    return x - m.put(x) / below
