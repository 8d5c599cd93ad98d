"""Lagrangian certificates and extremal bounds for E[F(W_tau, S_tau)].

For a boundary eta (beta or alpha+) the dual objects are

    lambda(r)  = F_s(eta(r), r) / (r - eta(r))
    Lambda(s)  = int_0^s lambda,   Lambda1(s) = int_0^s r lambda
    Phi(w, s)  = Lambda1(s) - w Lambda(s)
    xi(w)      = F(w, e(w)) - Phi(w, e(w))

with e = b (AY) or e = a-bar (Perkins).  Phi(W, S) is a martingale, and
xi(W) + Phi(W, S) sandwiches F pathwise, which is what makes the two
embeddings extremal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary import AyBoundary, PerkinsBoundary, ay_boundary, perkins_boundary
from .errors import InequalityViolation, NonIntegrableCertificate, UnclassifiedPayoff, ValidationError
from .measure import TargetMeasure
from .quadrature import PanelAntiderivative, integrate

QUAD_TOL = 1e-11

# ---------------------------------------------------------------------------
# payoff families


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff F(w, s) on {w <= s, s >= 0}.

    Families: ``power`` (s-w)^c, ``dom`` (s-w)^2/s^c, ``reldd`` (1-w/s)^2,
    ``custom`` (callables ``func`` and ``func_s``, optional declared class).
    """

    family: str
    c: float = 1.0
    func: Callable | None = field(default=None, compare=False)
    func_s: Callable | None = field(default=None, compare=False)
    declared: str | None = None
    label: str | None = None

    def __post_init__(self):
        if self.family not in ("power", "dom", "reldd", "custom"):
            raise ValidationError(f"unknown payoff family {self.family!r}")
        if self.family == "custom" and (self.func is None or self.func_s is None):
            raise ValidationError("custom payoffs need func and func_s")

    def __call__(self, w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        d = np.maximum(s - w, 0.0)
        with np.errstate(all="ignore"):
            if self.family == "power":
                return d ** self.c
            if self.family == "dom":
                return np.where(d == 0.0, 0.0, d * d / s ** self.c)
            if self.family == "reldd":
                return np.where(d == 0.0, 0.0, (d / s) ** 2)
            return np.asarray(self.func(w, s), dtype=float)

    def F_s(self, w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        d = np.maximum(s - w, 0.0)
        c = self.c
        with np.errstate(all="ignore"):
            if self.family == "power":
                return c * d ** (c - 1.0) if c != 0 else np.zeros_like(d)
            if self.family == "dom":
                return 2.0 * d / s**c - c * d * d / s ** (c + 1.0)
            if self.family == "reldd":
                return 2.0 * d * w / s**3
            return np.asarray(self.func_s(w, s), dtype=float)

    def analytic_class(self) -> str | None:
        c = self.c
        if self.family == "power":
            if c == 2.0 or c == 0.0:
                return "both"
            return "up" if 0.0 < c < 2.0 else "down"
        if self.family == "dom":
            return "both" if c == 0.0 else ("up" if c > 0 else "down")
        if self.family == "reldd":
            return "up"
        return self.declared

    def describe(self) -> str:
        if self.label:
            return self.label
        return {"power": f"(s-w)^{self.c:g}", "dom": f"(s-w)^2/s^{self.c:g}",
                "reldd": "(1-w/s)^2"}.get(self.family, "custom")


def power(c: float) -> Payoff:
    return Payoff("power", c)


def drawdown_over_max(c: float) -> Payoff:
    return Payoff("dom", c)


def relative_drawdown() -> Payoff:
    return Payoff("reldd", 2.0)


@dataclass(frozen=True)
class RunningCost:
    """Positive running cost g(s) of the maximum.

    Families: ``power`` s^-c, ``shifted`` 1/(c+s), ``constant`` c,
    ``power-shift`` (a + sigma s)^-c capped at ``cap``, ``custom``.
    """

    family: str
    c: float = 1.0
    a: float = 0.0
    sigma: float = 1.0
    cap: float = math.inf
    func: Callable | None = field(default=None, compare=False)
    deriv: Callable | None = field(default=None, compare=False)
    monotone: str | None = None

    def __post_init__(self):
        if self.family not in ("power", "shifted", "constant", "power-shift", "custom"):
            raise ValidationError(f"unknown running-cost family {self.family!r}")
        if self.family == "custom" and (self.func is None or self.deriv is None or self.monotone is None):
            raise ValidationError("custom running costs need func, deriv and a declared monotone direction")

    def _params(self):
        """(a, sigma, exponent) with g = (a + sigma s)^-exponent."""
        if self.family == "power":
            return 0.0, 1.0, self.c
        if self.family == "shifted":
            return self.c, 1.0, 1.0
        if self.family == "power-shift":
            return self.a, self.sigma, self.c
        return None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "constant":
            return np.full_like(s, self.c)
        if self.family == "custom":
            return np.asarray(self.func(s), dtype=float)
        a, sg, e = self._params()
        with np.errstate(all="ignore"):
            base = a + sg * s
            v = np.where(base > 0, base ** (-e), np.inf if e > 0 else 0.0)
        return np.minimum(v, self.cap)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "constant":
            return np.zeros_like(s)
        if self.family == "custom":
            return np.asarray(self.deriv(s), dtype=float)
        a, sg, e = self._params()
        with np.errstate(all="ignore"):
            base = a + sg * s
            d = -e * sg * base ** (-e - 1.0)
            capped = base ** (-e) >= self.cap
        return np.where(capped, 0.0, d)

    def direction(self) -> str:
        """'increasing', 'decreasing' or 'constant'."""
        if self.family == "constant":
            return "constant"
        if self.family == "custom":
            return self.monotone
        a, sg, e = self._params()
        if e == 0:
            return "constant"
        return "decreasing" if e * sg > 0 else "increasing"

    def as_payoff(self) -> Payoff:
        """G(w, s) = (s - w)^2 g(s)."""
        g, dg = self.__call__, self.derivative

        def G(w, s):
            d = np.maximum(s - w, 0.0)
            with np.errstate(all="ignore"):
                return np.where(d == 0.0, 0.0, d * d * g(s))

        def G_s(w, s):
            d = np.maximum(s - w, 0.0)
            with np.errstate(all="ignore"):
                return 2.0 * d * g(s) + d * d * dg(s)

        cls = {"increasing": "down", "decreasing": "up", "constant": "both"}[self.direction()]
        return Payoff("custom", func=G, func_s=G_s, declared=cls, label=f"(s-w)^2 g(s), g={self.describe()}")

    def describe(self) -> str:
        if self.family == "power":
            return f"s^-{self.c:g}"
        if self.family == "shifted":
            return f"1/({self.c:g}+s)"
        if self.family == "constant":
            return f"{self.c:g}"
        if self.family == "power-shift":
            return f"({self.a:g}{self.sigma:+g}s)^-{self.c:g}"
        return "custom"

    def kernel_params(self):
        """(kind, a, sigma, exponent, cap) consumed by the simulation kernels."""
        if self.family == "constant":
            return 1, self.c, 0.0, 0.0, math.inf
        if self.family == "custom":
            return 3, 0.0, 0.0, 0.0, self.cap
        a, sg, e = self._params()
        return 2, a, sg, e, self.cap


# ---------------------------------------------------------------------------
# F-MON classification


def classify_fmon(F: Payoff, m: TargetMeasure | None = None, n: int = 64, slack: float = 1e-10,
                  numeric: bool = False) -> str:
    """'up', 'down', 'both' or 'neither' for w -> F_s(w, s)/(s - w)."""
    if not numeric:
        known = F.analytic_class()
        if known is not None:
            return known
    lo, hi = (-1.0, 1.0) if m is None else (m.support_lo, m.support_hi)
    lo = max(lo, -50.0) if np.isfinite(lo) else -50.0
    hi = min(hi, 50.0) if np.isfinite(hi) else 50.0
    s = np.linspace(max(hi, 1e-3) / n, max(hi, 1e-3), n)
    inc = dec = True
    flat = True
    for sv in s:
        w = np.linspace(lo, sv, n + 1)[:-1]
        with np.errstate(all="ignore"):
            r = F.F_s(w, sv) / (sv - w)
        r = r[np.isfinite(r)]
        if r.size < 2:
            continue
        d = np.diff(r)
        scale = slack * max(1.0, float(np.max(np.abs(r))))
        inc &= bool(np.all(d >= -scale))
        dec &= bool(np.all(d <= scale))
        flat &= bool(np.all(np.abs(d) <= scale))
    if flat:
        return "both"
    if inc:
        return "up"
    if dec:
        return "down"
    return "neither"


# ---------------------------------------------------------------------------
# certificate bundle


def _power_tail(f, end: float, e: float, s):
    """Integral of f from s to e (signed) with f ~ A |r - end|**p fitted on (end, e]."""
    d0 = abs(e - end)
    r = np.array([e, end + 0.1 * (e - end)])
    y = np.asarray(f(r), dtype=float)
    with np.errstate(all="ignore"):
        p = math.log(abs(y[1] / y[0])) / math.log(0.1) if y[0] != 0 and y[1] != 0 else 0.0
        A = y[0] / d0**p
        ds = np.abs(np.asarray(s, dtype=float) - end)
        if abs(p + 1.0) < 1e-9:
            val = A * (math.log(d0) - np.log(ds))
        else:
            val = A * (d0 ** (p + 1.0) - ds ** (p + 1.0)) / (p + 1.0)
    # val is the integral over the part between s and e nearer to end
    return val if e > end else -val


class CertificateBundle:
    """Tabulated lambda, Lambda, Lambda1 with Phi and xi for one boundary."""

    def __init__(self, F: Payoff, bd: AyBoundary | PerkinsBoundary, s_top: float | None = None,
                 tol: float = QUAD_TOL):
        self.F = F
        self.boundary = bd
        self.kind = bd.kind
        atoms = bd.measure.atom_x
        if isinstance(bd, AyBoundary):
            self.eta = bd.beta
            seg = lambda w: (bd.b_left(w), bd.b(w))
            self._pair = bd.b
            points = bd.breakpoints()
        else:
            self.eta = bd.alpha_plus
            seg = lambda w: (bd.a_plus(w, 1), bd.a_plus(w, -1))
            self._pair = bd.a_bar
            atoms = atoms[atoms < 0]
            points = bd.breakpoints_plus()
        # F - Phi is constant along a flat stretch of the boundary; its
        # midpoint keeps xi away from singular ends of the stretch
        self._atoms = atoms
        self._seg = seg
        x_hat = bd.x_hat
        self.s_top = x_hat if s_top is None else min(s_top, x_hat)
        self.points = points

        # one table per component: lambda and r * lambda
        self._tables = []
        err = 0.0
        for k in range(2):
            f = self.lam if k == 0 else (lambda r: r * self.lam(r))
            res = integrate(f, 0.0, self.s_top, points=points, tol=tol, return_panels=True)
            edges = res.edges
            cum = np.concatenate([[0.0], np.cumsum(res.panel_values[0])])
            self._tables.append((edges, cum, res.diverged, PanelAntiderivative(f, edges)))
            err += res.error if np.isfinite(res.error) else 0.0
        self.error = err
        # Lambda is anchored at s0 > 0 when lambda is not integrable at 0;
        # Lambda1 must be integrable at 0 so that Phi(0, 0) = 0.
        self.anchor = 0.0
        s_half = 0.5 * self.s_top if np.isfinite(self.s_top) else 1.0
        if integrate(lambda r: r * self.lam(r), 0.0, s_half, points=points, tol=tol).diverged:
            raise NonIntegrableCertificate("r * lambda(r) is not integrable near zero")
        if integrate(self.lam, 0.0, s_half, points=points, tol=tol).diverged:
            self.anchor = s_half
        self._top_div = [integrate(f, s_half, self.s_top, points=points, tol=tol).diverged
                         for f in (self.lam, lambda r: r * self.lam(r))]
        self._anchor_val = self._raw(np.array([self.anchor]), 0)[0] if self.anchor > 0 else 0.0
        self.lam_bar_finite = not self._top_div[0]
        self.lam_bar = float(self.Lambda(self.s_top)) if self.lam_bar_finite else math.inf

    def lam(self, r):
        r = np.asarray(r, dtype=float)
        e = self.eta(r)
        with np.errstate(all="ignore"):
            out = self.F.F_s(e, r) / (r - e)
        return np.where(r - e > 0, out, 0.0)

    def _raw(self, s, k):
        """Cumulative table value of component k at each s (from 0)."""
        edges, cum, _, anti = self._tables[k]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        j = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, edges.size - 2)
        out = cum[j].copy()
        L = edges[j]
        f = self.lam if k == 0 else (lambda r: r * self.lam(r))
        inner = (s > L) & (s <= edges[-1])
        finite = inner & np.isfinite(edges[j + 1])
        if finite.any():
            out[finite] += anti.partial(j[finite], s[finite])
        # outside the tabulated range (ends trimmed at a divergence): the
        # integrand follows a power law there, integrate that in closed form
        below = s < edges[0]
        if below.any():
            out[below] = cum[0] - _power_tail(f, 0.0, edges[0], s[below])
        above = s > edges[-1]
        if above.any():
            out[above] = cum[-1] + _power_tail(f, self.s_top, edges[-1], s[above])
            if self._top_div[k]:
                out[above & (s >= self.s_top)] = math.inf
        return out

    def _partial(self, s):
        """(Lambda(s), Lambda1(s)) for an array of s in [0, s_top]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        lam = self._raw(s, 0) - self._anchor_val
        return np.vstack([lam, self._raw(s, 1)])

    def Lambda(self, s):
        v = self._partial(s)[0]
        return v[0] if np.ndim(s) == 0 else v

    def Lambda1(self, s):
        v = self._partial(s)[1]
        return v[0] if np.ndim(s) == 0 else v

    def Phi(self, w, s):
        w, s = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(s, dtype=float))
        shape = w.shape
        w = w.ravel()
        s = s.ravel()
        P = self._partial(s)
        with np.errstate(invalid="ignore"):
            # w = 0 drops the Lambda term even where Lambda is infinite
            out = P[1] - np.where(w == 0, 0.0, w * P[0])
        bad = ~np.isfinite(out) & (w != 0)
        for j in np.flatnonzero(bad):
            # Phi may be finite at the top of the support although Lambda is not
            lo = min(self.anchor, s[j])
            r = integrate(lambda r: self.lam(r) * (r - w[j]), lo, s[j], points=self.points)
            out[j] = r.value + float(self._partial(np.array([lo]))[1][0]) - w[j] * float(
                self._partial(np.array([lo]))[0][0])
        out = out.reshape(shape)
        return out if shape else float(out)

    def pair(self, w):
        """Level paired with w: b(w) for AY, a-bar(w) for Perkins (mid-stretch at atoms)."""
        w = np.asarray(w, dtype=float)
        e = np.array(self._pair(w), dtype=float)
        if self._atoms.size:
            hit = np.isin(w, self._atoms)
            if hit.any():
                lo, hi = self._seg(w[hit] if e.ndim else np.atleast_1d(w))
                lo = np.asarray(lo, dtype=float)
                hi = np.asarray(hi, dtype=float)
                mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), lo + 1.0)
                mid = np.where(hi >= self.s_top, np.minimum(mid, 0.5 * (lo + self.s_top)), mid)
                if e.ndim:
                    e[hit] = mid
                else:
                    e = np.array(float(mid[0]))
        return e

    def xi(self, w):
        w = np.asarray(w, dtype=float)
        e = self.pair(w)
        return self.F(w, e) - self.Phi(w, e)


def certificate(F: Payoff, bd: AyBoundary | PerkinsBoundary, **kw) -> CertificateBundle:
    return CertificateBundle(F, bd, **kw)


@dataclass
class InequalityReport:
    n_points: int
    worst_excess: float
    worst_point: tuple[float, float] | None
    contact_residual: float
    ok: bool


def pathwise_inequality_check(F: Payoff, ay: CertificateBundle, pk: CertificateBundle, points,
                              tol: float = 1e-7, classification: str | None = None,
                              raise_on_fail: bool = True) -> InequalityReport:
    """Check xi_a + Phi_a <= F <= xi_b + Phi_b (reversed for F-MON down).

    Also checks equality at w = beta(s) (AY side) and at w = s, w = alpha+(s)
    (Perkins side).
    """
    cls = classification or classify_fmon(F)
    pts = np.asarray(points, dtype=float)
    w, s = pts[:, 0], pts[:, 1]
    Fv = F(w, s)
    up_ay = ay.xi(w) + ay.Phi(w, s)
    up_pk = pk.xi(w) + pk.Phi(w, s)
    if cls in ("up", "both"):
        excess = np.maximum(up_pk - Fv, Fv - up_ay)
    elif cls == "down":
        excess = np.maximum(up_ay - Fv, Fv - up_pk)
    else:
        raise UnclassifiedPayoff("payoff is neither F-MON up nor down")
    if cls == "both":
        excess = np.maximum(excess, np.maximum(up_ay - Fv, Fv - up_pk))
    excess = np.where(np.isfinite(excess), excess, -np.inf)
    j = int(np.argmax(excess))
    worst = float(excess[j])
    # contact points
    sc = s[s < ay.s_top]
    bw = np.asarray(ay.eta(sc), dtype=float)
    r1 = np.abs(ay.xi(bw) + ay.Phi(bw, sc) - F(bw, sc))
    r2 = np.abs(pk.xi(sc) + pk.Phi(sc, sc) - F(sc, sc))
    aw = np.asarray(pk.eta(sc), dtype=float)
    r3 = np.abs(pk.xi(aw) + pk.Phi(aw, sc) - F(aw, sc))
    contact = np.concatenate([r1, r2, r3])
    contact = contact[np.isfinite(contact)]
    cres = float(np.max(contact)) if contact.size else 0.0
    ok = worst <= tol and cres <= tol
    rep = InequalityReport(len(pts), worst, (float(w[j]), float(s[j])), cres, ok)
    if not ok and raise_on_fail:
        raise InequalityViolation(f"pathwise sandwich fails by {max(worst, cres):.3e}",
                                  worst=rep.worst_point)
    return rep


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundReport:
    embedding: str
    value: float
    error_estimate: float
    direction: str
    classification: str
    route: str
    infinite: bool = False
    caveats: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        v = self.value
        return {
            "embedding": self.embedding,
            "value": "inf" if v == math.inf else ("-inf" if v == -math.inf else v),
            "error_estimate": "inf" if self.error_estimate == math.inf else self.error_estimate,
            "direction": self.direction,
            "classification": self.classification,
            "route": self.route,
            "infinite": self.infinite,
            "caveats": list(self.caveats),
        }


def _direction(cls: str, which: str) -> str:
    if cls == "both":
        return "both"
    if cls == "up":
        return "sup" if which == "ay" else "inf"
    return "inf" if which == "ay" else "sup"


def _acc(total, err, r):
    if r.diverged:
        return math.inf, math.inf
    return total + float(r.value), err + float(r.error)


def _ay_value(F: Payoff, m: TargetMeasure, tol: float):
    bd = ay_boundary(m)
    total, err = 0.0, 0.0
    for pc in m.pieces:
        r = integrate(lambda w: F(w, bd.b(w)) * m.density(w), pc.lo, pc.hi, points=m.kinks(), tol=tol)
        total, err = _acc(total, err, r)
    for w, p in m.atoms:
        if w >= bd.x_hat:
            v = float(F(w, w)) * p
            total += v if np.isfinite(v) else math.inf
            continue
        ge = float(m.mass_ge(w))
        q = float(m.mass_gt(w)) / ge
        s1 = float(bd.b_left(w))
        r = integrate(lambda v: F(w, w + (s1 - w) / v), q, 1.0, tol=tol)
        r.value = r.value * ge if not r.diverged else r.value
        r.error *= ge
        total, err = _acc(total, err, r)
    return total, err


def _pk_value(F: Payoff, m: TargetMeasure, tol: float):
    bd = perkins_boundary(m)
    total, err = 0.0, 0.0
    for pc in m.pieces:
        lo, hi = pc.lo, pc.hi
        if lo < 0:
            r = integrate(lambda w: F(w, bd.a_plus(w)) * m.density(w), lo, min(hi, 0.0),
                          points=m.kinks(), tol=tol)
            total, err = _acc(total, err, r)
        if hi > 0:
            a = max(lo, 0.0)
            mid = a + 0.5 * (min(hi, a + 2.0) - a)
            if not np.isfinite(F(mid, mid)):
                return math.inf, math.inf
            r = integrate(lambda w: F(w, w) * m.density(w), a, hi, points=m.kinks(), tol=tol)
            total, err = _acc(total, err, r)
    for w, p in m.atoms:
        if w >= 0:
            v = float(F(w, w))
            if not np.isfinite(v):
                return math.inf, math.inf
            total += v * p
            continue
        t_lo = float(bd.a_plus(w, 1))
        t_hi = float(bd.a_plus(w, -1))
        if t_hi <= t_lo:
            total += float(F(w, t_lo)) * p
            continue
        dens = lambda r: F(w, r) * bd.flat_survival(w, t_lo, r) / (r - w)
        r = integrate(dens, t_lo, t_hi, tol=tol)
        total, err = _acc(total, err, r)
    return total, err


def certificate_value(F: Payoff, m: TargetMeasure, which: str, tol: float = QUAD_TOL):
    """int xi dmu: the bound through the certificate identity E[Phi] = 0."""
    bd = ay_boundary(m) if which == "ay" else perkins_boundary(m)
    cb = certificate(F, bd)
    total, err = 0.0, 0.0
    for pc in m.pieces:
        r = integrate(lambda w: cb.xi(w) * m.density(w), pc.lo, pc.hi, points=m.kinks(), tol=tol)
        total, err = _acc(total, err, r)
    for w, p in m.atoms:
        total += float(cb.xi(np.array([w]))[0]) * p
    return total, err + cb.error


def bound_terminal(F: Payoff, m: TargetMeasure, which: str, tol: float = QUAD_TOL) -> BoundReport:
    """Value of E[F(W_tau, S_tau)] under the AY or Perkins embedding."""
    if which not in ("ay", "perkins"):
        raise ValidationError(f"embedding must be 'ay' or 'perkins', not {which!r}")
    cls = classify_fmon(F, m)
    if cls == "neither":
        raise UnclassifiedPayoff(f"{F.describe()} is neither F-MON up nor F-MON down")
    caveats = []
    if m.has_atoms:
        route = "max-law"
        caveats.append("measure has atoms: value computed from the law of the maximum on flat boundary stretches")
    else:
        route = "density"
    value, err = (_ay_value if which == "ay" else _pk_value)(F, m, tol)
    infinite = not np.isfinite(value)
    if infinite:
        caveats.append("bound is infinite")
    return BoundReport(which, value, err, _direction(cls, which), cls, route, infinite, caveats)


def bound_running(g: RunningCost, m: TargetMeasure, which: str, tol: float = QUAD_TOL) -> BoundReport:
    """Value of E[int_0^tau g(S_u) du] via G(w, s) = (s - w)^2 g(s)."""
    rep = bound_terminal(g.as_payoff(), m, which, tol)
    rep.caveats.append(f"running cost g={g.describe()} ({g.direction()})")
    return rep
