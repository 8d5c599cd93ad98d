"""Diffusions in natural scale.

For dX = sigma(X) dB + b(X) dt on an interval I, the scale function s with
s(x0) = 0 and s'(x) = exp(-int_{x0}^x 2 b / sigma^2) turns X into a time-changed
Brownian motion M = s(X).  A target law mu for X becomes nu = mu o s^{-1} for
M, and a payoff F(x, m) becomes F_hat(w, s) = F(h(w), h(s)) with h = s^{-1}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sci_integrate
from scipy import special

from .certificate import Payoff, bound_terminal, classify_fmon
from .errors import NonCentredPushforward, QuadratureFailure, ValidationError
from .measure import TargetMeasure, UniformPiece

H_TOL = 1e-12
CENTRE_TOL = 1e-8
PUSH_KNOTS = 2000


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients on the open interval (lo, hi) and the start x0.

    ``scale``/``scale_deriv`` may carry closed forms; without them the scale
    function is evaluated by nested quadrature.
    """

    drift: Callable
    vol: Callable
    x0: float = 0.0
    lo: float = -math.inf
    hi: float = math.inf
    name: str = "custom"
    scale: Callable | None = field(default=None, compare=False)
    scale_deriv: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.lo < self.x0 < self.hi):
            raise ValidationError(f"start {self.x0} is not inside ({self.lo}, {self.hi})")
        if not float(self.vol(self.x0)) > 0:
            raise ValidationError("volatility must be positive on the interval")

    def s(self, x):
        x = np.asarray(x, dtype=float)
        if self.scale is not None:
            return np.asarray(self.scale(x), dtype=float)
        return np.vectorize(lambda v: scale_function(self, v), otypes=[float])(x)

    def s_prime(self, x):
        x = np.asarray(x, dtype=float)
        if self.scale_deriv is not None:
            return np.asarray(self.scale_deriv(x), dtype=float)
        return np.vectorize(lambda v: math.exp(-_psi(self, v)), otypes=[float])(x)

    def h(self, m):
        return inverse_scale(self, m)

    def h_prime(self, m):
        return 1.0 / self.s_prime(self.h(m))

    def image(self) -> tuple[float, float]:
        """(s(lo+), s(hi-)) estimated by walking out to the ends."""
        return _image_end(self, -1), _image_end(self, 1)


def _quad(f, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sci_integrate.IntegrationWarning)
        try:
            v, _ = sci_integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        except sci_integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge: {exc}") from None
    return v


def _psi(d: DiffusionSpec, y: float) -> float:
    return _quad(lambda u: 2.0 * d.drift(u) / d.vol(u) ** 2, d.x0, y)


def scale_function(d: DiffusionSpec, x: float) -> float:
    """s(x) from the double integral, with s(x0) = 0 exactly."""
    x = float(x)
    if not (d.lo < x < d.hi):
        raise ValidationError(f"{x} is outside the diffusion interval")
    if x == d.x0:
        return 0.0
    return _quad(lambda y: math.exp(-_psi(d, y)), d.x0, x)


def _image_end(d: DiffusionSpec, side: int) -> float:
    end = d.hi if side > 0 else d.lo
    if math.isfinite(end):
        gap = end - d.x0
        xs = d.x0 + gap * (1.0 - 2.0 ** -np.arange(1, 60))
    else:
        xs = d.x0 + side * 2.0 ** np.arange(0, 60)
    with np.errstate(all="ignore"):
        v = d.s(xs)
    v = v[np.isfinite(v)]
    if v.size < 2:
        return side * math.inf
    # a bounded end shows up as a converging tail
    if abs(v[-1] - v[-2]) <= 1e-9 * max(1.0, abs(v[-1])):
        return float(v[-1])
    return side * math.inf


def _reach(d: DiffusionSpec, target: float, side: int) -> float:
    """A point on the given side of x0 whose scale value passes ``target``."""
    end = d.hi if side > 0 else d.lo
    for k in range(1, 1100):
        if math.isfinite(end):
            x = end - (end - d.x0) * 2.0 ** -k
        else:
            x = d.x0 + side * (2.0 ** k - 1.0)
        v = float(d.s(np.array([x]))[0])
        if (v >= target) if side > 0 else (v <= target):
            return x
        if x == end or not math.isfinite(x):
            break
    raise ValidationError(f"{target} lies outside the image of the scale function")


def inverse_scale(d: DiffusionSpec, m, tol: float = H_TOL):
    """h = s^{-1} by vectorised bisection; the bracket is grown from x0."""
    scalar = np.ndim(m) == 0
    m = np.atleast_1d(np.asarray(m, dtype=float))
    top, bot = float(np.max(m)), float(np.min(m))
    hi = np.full(m.shape, _reach(d, top, 1) if top > 0 else d.x0)
    lo = np.full(m.shape, _reach(d, bot, -1) if bot < 0 else d.x0)
    for _ in range(4000):
        wide = np.flatnonzero(hi - lo > tol * np.maximum(1.0, np.abs(lo)))
        if wide.size == 0:
            break
        mid = 0.5 * (lo[wide] + hi[wide])
        up = d.s(mid) >= m[wide]
        hi[wide[up]] = mid[up]
        lo[wide[~up]] = mid[~up]
    out = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# named models


def brownian(x0: float = 0.0) -> DiffusionSpec:
    return DiffusionSpec(lambda x: 0.0 * np.asarray(x), lambda x: 1.0 + 0.0 * np.asarray(x), x0,
                         name="brownian", scale=lambda x: x - x0, scale_deriv=lambda x: np.ones_like(x))


def bessel3(x0: float = 1.0) -> DiffusionSpec:
    """Three-dimensional Bessel process: b(x) = 1/x, sigma = 1 on (0, inf)."""
    if x0 <= 0:
        raise ValidationError("a Bessel process starts at a positive level")
    return DiffusionSpec(lambda x: 1.0 / np.asarray(x), lambda x: 1.0 + 0.0 * np.asarray(x), x0, 0.0, math.inf,
                         name="bessel3", scale=lambda x: x0 * (1.0 - x0 / x),
                         scale_deriv=lambda x: (x0 / x) ** 2)


def ou(theta: float, x0: float = 0.0) -> DiffusionSpec:
    """Ornstein-Uhlenbeck: b(x) = -theta x, sigma = 1."""
    if theta <= 0:
        raise ValidationError("theta must be positive")
    r = math.sqrt(theta)
    c = math.sqrt(math.pi / (4.0 * theta)) * math.exp(-theta * x0 * x0)

    def scale(x):
        return c * (special.erfi(r * np.asarray(x)) - special.erfi(r * x0))

    return DiffusionSpec(lambda x: -theta * np.asarray(x), lambda x: 1.0 + 0.0 * np.asarray(x), x0,
                         name=f"ou({theta:g})", scale=scale,
                         scale_deriv=lambda x: np.exp(theta * (np.asarray(x) ** 2 - x0 * x0)))


def named_model(name: str, x0: float | None = None) -> DiffusionSpec:
    """'brownian', 'bessel3' or 'ou(theta)' / 'ou:theta'."""
    key = name.strip().lower()
    if key == "brownian":
        return brownian(0.0 if x0 is None else x0)
    if key == "bessel3":
        return bessel3(1.0 if x0 is None else x0)
    if key.startswith("ou"):
        arg = key[2:].strip("():")
        try:
            theta = float(arg) if arg else 1.0
        except ValueError:
            raise ValidationError(f"cannot read theta from {name!r}") from None
        return ou(theta, 0.0 if x0 is None else x0)
    raise ValidationError(f"unknown diffusion model {name!r}; known: brownian, bessel3, ou(theta)")


# ---------------------------------------------------------------------------
# pushforward and payoff transform


def pushforward_mean(d: DiffusionSpec, m: TargetMeasure) -> float:
    """int s dmu, which must vanish for a centred image law."""
    total = 0.0
    for x, p in m.atoms:
        total += float(d.s(np.array([x]))[0]) * p
    for pc in m.pieces:
        if not (math.isfinite(pc.lo) and math.isfinite(pc.hi)):
            raise ValidationError("pushforward needs bounded density pieces")
        total += _quad(lambda x: float(d.s(np.array([x]))[0]) * float(m.density(np.array([x]))[0]), pc.lo, pc.hi)
    return total


def _affine(d: DiffusionSpec) -> bool:
    x = np.array([d.x0 - 1.0, d.x0, d.x0 + 1.0]) if math.isinf(d.lo) and math.isinf(d.hi) else None
    if x is None:
        return False
    v = d.s(x)
    return abs(v[2] - 2 * v[1] + v[0]) <= 1e-14 * max(1.0, abs(v[2]))


def pushforward(d: DiffusionSpec, m: TargetMeasure, knots: int = PUSH_KNOTS) -> TargetMeasure:
    """Law of s(X) for X ~ m (m need not be centred; its image must be).

    Atoms map exactly.  Density pieces map exactly under an affine scale and
    otherwise become piecewise-uniform pieces between the images of
    ``knots`` equally spaced points.
    """
    for x, _ in m.atoms:
        if not (d.lo < x < d.hi):
            raise ValidationError(f"atom at {x} lies outside the diffusion interval")
    if m.pieces and (m.support_lo < d.lo or m.support_hi > d.hi):
        raise ValidationError("measure support leaves the diffusion interval")
    mean = pushforward_mean(d, m)
    if abs(mean) > CENTRE_TOL:
        raise NonCentredPushforward(
            f"image law has mean {mean:.6g}: only laws with int s dmu = 0 give a uniformly integrable "
            "embedding in natural scale (for the Bessel(3) process from 1 this means int dmu/x = 1)")
    atoms = [(float(d.s(np.array([x]))[0]), p) for x, p in m.atoms]
    if _affine(d):
        a = float(d.s(np.array([d.x0 + 1.0]))[0])
        out = m.shifted(-d.x0, validate=False).scaled(a) if a != 1.0 else m.shifted(-d.x0, validate=False)
        return TargetMeasure(out.atoms, out.pieces)
    pieces = []
    for pc in m.pieces:
        xs = np.linspace(pc.lo, pc.hi, knots + 1)
        cdf = np.array([_quad(lambda x: float(m.density(np.array([x]))[0]), pc.lo, v) if v > pc.lo else 0.0
                        for v in xs])
        cdf *= pc.mass / cdf[-1]
        ys = d.s(xs)
        pieces += [UniformPiece(a, b, q) for a, b, q in zip(ys[:-1], ys[1:], np.diff(cdf)) if q > 0]
    raw = TargetMeasure(atoms, pieces, validate=False)
    # the piecewise-uniform image carries an O(knots^-2) mean error; remove it
    drift = raw.mean()
    return raw.shifted(-drift, validate=True) if pieces else TargetMeasure(atoms)


def _convexity(d: DiffusionSpec, grid) -> str:
    h = d.h(grid)
    sd = h[2:] - 2.0 * h[1:-1] + h[:-2]
    scale = 1e-9 * max(1.0, float(np.max(np.abs(h))))
    convex = bool(np.all(sd >= -scale))
    concave = bool(np.all(sd <= scale))
    if convex and concave:
        return "linear"
    return "convex" if convex else ("concave" if concave else "neither")


def _fs_sign(F: Payoff, pts) -> str:
    with np.errstate(all="ignore"):
        v = F.F_s(pts[:, 0], pts[:, 1])
    v = v[np.isfinite(v) & (pts[:, 1] > pts[:, 0])]
    if v.size == 0:
        return "unknown"
    if np.all(v > 0):
        return "positive"
    if np.all(v < 0):
        return "negative"
    return "mixed"


def transform_payoff(F: Payoff, d: DiffusionSpec, nu: TargetMeasure | None = None, n: int = 48):
    """F_hat(w, s) = F(h(w), h(s)) and the monotonicity report for it."""

    def Fh(w, s):
        return F(d.h(np.asarray(w, dtype=float)), d.h(np.asarray(s, dtype=float)))

    def Fh_s(w, s):
        w = np.asarray(w, dtype=float)
        s = np.asarray(s, dtype=float)
        hs = d.h(s)
        return d.h_prime(s) * F.F_s(d.h(w), hs)

    lo, hi = (-1.0, 1.0) if nu is None else (nu.support_lo, nu.support_hi)
    s_lo, s_hi = d.image()
    lo = max(lo, s_lo + 1e-6) if math.isfinite(s_lo) else lo
    hi = min(hi, s_hi - 1e-6) if math.isfinite(s_hi) else hi
    grid = np.linspace(lo, hi, n)
    h_shape = _convexity(d, grid)
    xs = d.h(grid)
    pts = np.array([(a, b) for i, b in enumerate(xs) for a in xs[:i]])
    fs = _fs_sign(F, pts)
    cls = classify_fmon(F)
    predicted = None
    case = "inconclusive"
    if h_shape == "linear":
        predicted, case = cls, "affine scale"
    elif cls == "up":
        if (fs == "negative" and h_shape == "concave") or (fs == "positive" and h_shape == "convex"):
            predicted, case = "up", f"F-MON up, F_s {fs}, h {h_shape}"
    elif cls == "down":
        if (fs == "negative" and h_shape == "convex") or (fs == "positive" and h_shape == "concave"):
            predicted, case = "down", f"F-MON down, F_s {fs}, h {h_shape}"
    label = f"F_hat[{F.describe()}; {d.name}]"
    probe = Payoff("custom", func=Fh, func_s=Fh_s, label=label)
    lo_nu = nu if nu is not None else None
    numeric = classify_fmon(probe, lo_nu, n=n, numeric=True)
    declared = predicted if predicted is not None else (numeric if numeric != "neither" else None)
    F_hat = Payoff("custom", func=Fh, func_s=Fh_s, declared=declared, label=label)
    report = {"input_class": cls, "F_s_sign": fs, "h_shape": h_shape, "shape_rule": case,
              "predicted_class": predicted, "numeric_class": numeric,
              "status": "analytic" if predicted is not None else ("numeric-only" if numeric != "neither"
                                                                else "inconclusive")}
    return F_hat, report


def diffusion_bounds(F: Payoff, d: DiffusionSpec, m: TargetMeasure, tol: float = 1e-9) -> dict:
    """AY and Perkins values of E[F(X, S^X)] through the natural-scale problem."""
    nu = pushforward(d, m)
    F_hat, rep = transform_payoff(F, d, nu)
    out = {"report": rep, "nu_support": [nu.support_lo, nu.support_hi]}
    if F_hat.declared is None:
        out["bounds"] = None
        return out
    out["bounds"] = {k: bound_terminal(F_hat, nu, k, tol).to_dict() for k in ("ay", "perkins")}
    return out
