"""Centred target measures and their call / put / potential curves.

A measure is a finite list of atoms plus density pieces.  Two density
families are supported in closed form: uniform on an interval and a shifted
Pareto law with cubic tail (optionally truncated, and either side).  A
piecewise-linear CDF is expanded into uniform pieces on input.

For every piece we need four closed-form maps of ``x``:

    call(x) = E[(X - x)+ ; piece]      put(x) = E[(x - X)+ ; piece]
    gt(x)   = mass on (x, inf)         lt(x)  = mass on (-inf, x)

which is all the downstream code asks for.  Everything is vectorised over
``x``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArbitrageViolation,
    DegenerateDelta0,
    InfiniteFirstMoment,
    MassNotOne,
    NonCentred,
    ValidationError,
)

MASS_TOL = 1e-12
CENTRE_TOL = 1e-9


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# density pieces


@dataclass(frozen=True)
class UniformPiece:
    lo: float
    hi: float
    mass: float
    kind: str = field(default="uniform", init=False)

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise InfiniteFirstMoment("uniform piece needs finite endpoints")
        if not self.hi > self.lo:
            raise ValidationError(f"uniform piece needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.mass < 0:
            raise ValidationError("negative piece mass")

    @property
    def density(self) -> float:
        return self.mass / (self.hi - self.lo)

    def call(self, x):
        x = _arr(x)
        d, lo, hi = self.density, self.lo, self.hi
        inside = d * 0.5 * (hi - np.clip(x, lo, hi)) ** 2
        return np.where(x <= lo, self.mass * (0.5 * (lo + hi) - x), inside)

    def put(self, x):
        x = _arr(x)
        d, lo, hi = self.density, self.lo, self.hi
        inside = d * 0.5 * (np.clip(x, lo, hi) - lo) ** 2
        return np.where(x >= hi, self.mass * (x - 0.5 * (lo + hi)), inside)

    def gt(self, x):
        return self.density * (self.hi - np.clip(_arr(x), self.lo, self.hi))

    def lt(self, x):
        return self.density * (np.clip(_arr(x), self.lo, self.hi) - self.lo)

    def bregman(self, w, t):
        """int_w^t mu((w, x]) dx for t >= w, free of cancellation."""
        w, t = _arr(w), _arr(t)
        a = np.maximum(w, self.lo)
        head = np.clip(np.minimum(t, self.hi) - a, 0.0, None)
        tail = np.clip(self.hi - a, 0.0, None) * np.clip(t - self.hi, 0.0, None)
        return self.density * (0.5 * head * head + tail)

    def mean(self) -> float:
        return self.mass * 0.5 * (self.lo + self.hi)

    def second_moment(self) -> float:
        lo, hi = self.lo, self.hi
        return self.mass * (lo * lo + lo * hi + hi * hi) / 3.0

    def density_at(self, x):
        x = _arr(x)
        return np.where((x >= self.lo) & (x <= self.hi), self.density, 0.0)

    def reflect(self) -> "UniformPiece":
        return UniformPiece(-self.hi, -self.lo, self.mass)

    def to_json(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi, "p": self.mass}


@dataclass(frozen=True)
class ParetoPiece:
    """Law of ``anchor + side * Y`` where ``Y >= 0`` has density
    proportional to ``(y + scale)**-3`` on ``[0, cutoff]``.

    With ``anchor=-1, scale=1, side=+1, cutoff=inf`` this is the density
    ``2 (x + 2)**-3`` on ``[-1, inf)``.
    """

    anchor: float
    scale: float
    mass: float
    side: int = 1
    cutoff: float = math.inf
    kind: str = field(default="pareto", init=False)

    def __post_init__(self):
        if self.scale <= 0 or self.cutoff <= 0:
            raise ValidationError("pareto piece needs scale > 0 and cutoff > 0")
        if self.side not in (1, -1):
            raise ValidationError("pareto side must be +1 or -1")
        if self.mass < 0:
            raise ValidationError("negative piece mass")

    # standard form on [0, cutoff] ------------------------------------------------
    @property
    def _k(self) -> float:
        s, L = self.scale, self.cutoff
        if math.isinf(L):
            return 2.0 * self.mass * s * s
        U = L + s
        return 2.0 * self.mass * s * s * U * U / ((U - s) * (U + s))

    def _c0(self, z):
        # E[(Y - z)+]
        z = _arr(z)
        s, L, k = self.scale, self.cutoff, self._k
        zc = np.clip(z, 0.0, L)
        v = zc + s
        if math.isinf(L):
            inside = k / (2.0 * v)
        else:
            U = L + s
            inside = k * (U - v) ** 2 / (2.0 * v * U * U)
        left = self._c0_at0() + self.mass * (0.0 - z)
        return np.where(z < 0.0, left, inside)

    def _c0_at0(self) -> float:
        s, L, k = self.scale, self.cutoff, self._k
        if math.isinf(L):
            return k / (2.0 * s)
        U = L + s
        return k * (U - s) ** 2 / (2.0 * s * U * U)

    def _p0(self, z):
        # E[(z - Y)+]
        z = _arr(z)
        s, L, k = self.scale, self.cutoff, self._k
        zc = np.clip(z, 0.0, L)
        v = zc + s
        inside = k * (v - s) ** 2 / (2.0 * s * s * v)
        if math.isinf(L):
            return inside
        mean0 = self._c0_at0() / self.mass if self.mass > 0 else 0.0
        right = self.mass * (z - mean0)
        return np.where(z > L, right, inside)

    def _gt0(self, z):
        z = _arr(z)
        s, L, k = self.scale, self.cutoff, self._k
        v = np.clip(z, 0.0, L) + s
        if math.isinf(L):
            return k / (2.0 * v * v)
        U = L + s
        return k * (U - v) * (U + v) / (2.0 * v * v * U * U)

    def _lt0(self, z):
        z = _arr(z)
        s, L, k = self.scale, self.cutoff, self._k
        v = np.clip(z, 0.0, L) + s
        return k * (v - s) * (v + s) / (2.0 * s * s * v * v)

    # mapped to x ---------------------------------------------------------------
    @property
    def lo(self) -> float:
        return self.anchor if self.side == 1 else self.anchor - self.cutoff

    @property
    def hi(self) -> float:
        return self.anchor + self.cutoff if self.side == 1 else self.anchor

    def call(self, x):
        x = _arr(x)
        if self.side == 1:
            return self._c0(x - self.anchor)
        return self._p0(self.anchor - x)

    def put(self, x):
        x = _arr(x)
        if self.side == 1:
            return self._p0(x - self.anchor)
        return self._c0(self.anchor - x)

    def gt(self, x):
        x = _arr(x)
        if self.side == 1:
            return self._gt0(x - self.anchor)
        return self._lt0(self.anchor - x)

    def lt(self, x):
        x = _arr(x)
        if self.side == 1:
            return self._lt0(x - self.anchor)
        return self._gt0(self.anchor - x)

    def bregman(self, w, t):
        """int_w^t mu((w, x]) dx for t >= w."""
        w, t = _arr(w), _arr(t)
        return np.maximum(self.put(t) - self.put(w) - self.lt(w) * (t - w), 0.0)

    def mean(self) -> float:
        return self.mass * self.anchor + self.side * self._c0_at0()

    def second_moment(self) -> float:
        s, L, k = self.scale, self.cutoff, self._k
        if math.isinf(L):
            return math.inf
        U = L + s
        ey2 = k * (math.log(U / s) + 2.0 * s * (1.0 / U - 1.0 / s) - 0.5 * s * s * (1.0 / U**2 - 1.0 / s**2))
        ey = self._c0_at0()
        a = self.anchor
        return self.mass * a * a + 2.0 * a * self.side * ey + ey2

    def density_at(self, x):
        y = self.side * (_arr(x) - self.anchor)
        ok = (y >= 0.0) & (y <= self.cutoff)
        return np.where(ok, self._k * (np.abs(y) + self.scale) ** -3.0, 0.0)

    def reflect(self) -> "ParetoPiece":
        return ParetoPiece(-self.anchor, self.scale, self.mass, -self.side, self.cutoff)

    def to_json(self) -> dict:
        # shift parametrisation: anchor = side * (scale - shift)
        out = {
            "kind": "pareto",
            "shift": self.scale - self.side * self.anchor,
            "scale": self.scale,
            "side": self.side,
            "p": self.mass,
        }
        if not math.isinf(self.cutoff):
            out["cutoff"] = self.cutoff
        return out


Piece = UniformPiece | ParetoPiece


# ---------------------------------------------------------------------------
# measure


class TargetMeasure:
    """Centred probability measure: atoms plus density pieces.

    Immutable after construction.  All curve methods accept scalars or arrays.
    """

    def __init__(self, atoms: Iterable[tuple[float, float]] = (), pieces: Iterable[Piece] = (),
                 *, validate: bool = True):
        merged: dict[float, float] = {}
        for x, p in atoms:
            x, p = float(x), float(p)
            if p < 0:
                raise ValidationError(f"negative atom mass at {x}")
            if not np.isfinite(x):
                raise InfiniteFirstMoment("atom at infinity")
            if p > 0:
                merged[x] = merged.get(x, 0.0) + p
        xs = sorted(merged)
        self.atom_x = np.array(xs, dtype=float)
        self.atom_p = np.array([merged[x] for x in xs], dtype=float)
        self.pieces: tuple[Piece, ...] = tuple(p for p in pieces if p.mass > 0)
        self._prefix()
        if validate:
            self._validate()

    # -- bookkeeping ----------------------------------------------------------
    def _prefix(self):
        p, x = self.atom_p, self.atom_x
        self._cum_p = np.concatenate([[0.0], np.cumsum(p)])
        self._cum_px = np.concatenate([[0.0], np.cumsum(p * x)])
        self._tot_p = self._cum_p[-1]
        self._tot_px = self._cum_px[-1]
        # suffix sums computed directly for accuracy in the right tail
        self._suf_p = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        self._suf_px = np.concatenate([np.cumsum((p * x)[::-1])[::-1], [0.0]])

    def _validate(self):
        total = self.total_mass()
        if abs(total - 1.0) > MASS_TOL:
            raise MassNotOne(f"masses sum to {total!r}, expected 1")
        if not np.isfinite(self.first_abs_moment()):
            raise InfiniteFirstMoment("first absolute moment is infinite")
        m = self.mean()
        if abs(m) > CENTRE_TOL:
            raise NonCentred(f"mean is {m:.3e}; measure must be centred at 0")
        if self.zero_mass >= 1.0 - MASS_TOL:
            raise DegenerateDelta0("the target measure is a point mass at 0")

    # -- basic facts ------------------------------------------------------------
    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_x.tolist(), self.atom_p.tolist()))

    @property
    def is_atomic(self) -> bool:
        return not self.pieces

    @property
    def has_atoms(self) -> bool:
        return self.atom_x.size > 0

    def total_mass(self) -> float:
        return float(self._tot_p + sum(p.mass for p in self.pieces))

    def mean(self) -> float:
        return float(self._tot_px + sum(p.mean() for p in self.pieces))

    def first_abs_moment(self) -> float:
        # E|X| = U(0)
        return float(self.potential(0.0))

    def variance(self) -> float:
        m2 = float(np.sum(self.atom_p * self.atom_x**2)) + sum(p.second_moment() for p in self.pieces)
        return m2 - self.mean() ** 2

    @property
    def zero_mass(self) -> float:
        i = np.searchsorted(self.atom_x, 0.0)
        if i < self.atom_x.size and self.atom_x[i] == 0.0:
            return float(self.atom_p[i])
        return 0.0

    @property
    def support_lo(self) -> float:
        c = [p.lo for p in self.pieces]
        if self.atom_x.size:
            c.append(self.atom_x[0])
        return float(min(c))

    @property
    def support_hi(self) -> float:
        c = [p.hi for p in self.pieces]
        if self.atom_x.size:
            c.append(self.atom_x[-1])
        return float(max(c))

    x_check = support_lo
    x_hat = support_hi

    # -- masses -------------------------------------------------------------------
    def mass_gt(self, x):
        """mu((x, inf))"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="right")
        out = self._suf_p[k]
        for p in self.pieces:
            out = out + p.gt(x)
        return out

    def mass_ge(self, x):
        """mu([x, inf))"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="left")
        out = self._suf_p[k]
        for p in self.pieces:
            out = out + p.gt(x)
        return out

    def mass_lt(self, x):
        """mu((-inf, x))"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="left")
        out = self._cum_p[k]
        for p in self.pieces:
            out = out + p.lt(x)
        return out

    def mass_le(self, x):
        """mu((-inf, x])"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="right")
        out = self._cum_p[k]
        for p in self.pieces:
            out = out + p.lt(x)
        return out

    cdf = mass_le

    def quantile(self, q):
        """Left-continuous inverse of the CDF, inf{x : F(x) >= q}, for q in (0, 1)."""
        q = np.atleast_1d(_arr(q)).astype(float)
        lo = self.support_lo if np.isfinite(self.support_lo) else -1.0
        hi = self.support_hi if np.isfinite(self.support_hi) else 1.0
        lo = np.full_like(q, lo)
        hi = np.full_like(q, hi)
        while np.any(self.cdf(lo) >= q) and not np.isfinite(self.support_lo):
            lo = np.where(self.cdf(lo) >= q, 2.0 * lo - 1.0, lo)
        while np.any(self.cdf(hi) < q):
            hi = np.where(self.cdf(hi) < q, 2.0 * hi + 1.0, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if not np.any((mid > lo) & (mid < hi)):
                break
            up = self.cdf(mid) >= q
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        # land exactly on atoms
        if self.atom_x.size:
            k = np.clip(np.searchsorted(self.atom_x, hi), 0, self.atom_x.size - 1)
            a = self.atom_x[k]
            close = np.abs(a - hi) <= 1e-12 * np.maximum(1.0, np.abs(a))
            hi = np.where(close, a, hi)
        return hi

    # -- curves -------------------------------------------------------------------
    def call(self, x):
        """C(x) = E[(X - x)+]"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="right")
        out = self._suf_px[k] - x * self._suf_p[k]
        for p in self.pieces:
            out = out + p.call(x)
        return np.maximum(out, 0.0)

    def put(self, x):
        """P(x) = E[(x - X)+]"""
        x = _arr(x)
        k = np.searchsorted(self.atom_x, x, side="right")
        out = x * self._cum_p[k] - self._cum_px[k]
        for p in self.pieces:
            out = out + p.put(x)
        return np.maximum(out, 0.0)

    def potential(self, x):
        """U(x) = E|X - x|"""
        return self.call(x) + self.put(x)

    def call_slope(self, x, side: int = 1):
        """One-sided derivative C'(x+) (side=+1) or C'(x-) (side=-1)."""
        return -(self.mass_gt(x) if side > 0 else self.mass_ge(x))

    def put_slope(self, x, side: int = 1):
        """One-sided derivative P'(x+) (side=+1) or P'(x-) (side=-1)."""
        return self.mass_le(x) if side > 0 else self.mass_lt(x)

    def put_bregman(self, w, t, side: int = 1):
        """P(t) - P(w) - P'(w+/-)(t - w) for t >= w, i.e. int_w^t mu((w, x]) dx.

        Computed piece by piece so that it stays accurate when w and t are
        both close to the same point.
        """
        w, t = np.broadcast_arrays(_arr(w), _arr(t))
        k1 = np.searchsorted(self.atom_x, w, side="left" if side < 0 else "right")
        k2 = np.searchsorted(self.atom_x, t, side="right")
        k2 = np.maximum(k2, k1)
        out = t * (self._cum_p[k2] - self._cum_p[k1]) - (self._cum_px[k2] - self._cum_px[k1])
        for p in self.pieces:
            out = out + p.bregman(w, t)
        return np.maximum(out, 0.0)

    def density(self, x):
        x = _arr(x)
        out = np.zeros_like(x)
        for p in self.pieces:
            out = out + p.density_at(x)
        return out

    # -- structure ----------------------------------------------------------------
    def components(self) -> list[tuple[float, float]]:
        """Maximal closed intervals (possibly degenerate) making up the support."""
        iv = [(float(x), float(x)) for x in self.atom_x] + [(p.lo, p.hi) for p in self.pieces]
        iv.sort()
        out: list[list[float]] = []
        for lo, hi in iv:
            if out and lo <= out[-1][1]:
                out[-1][1] = max(out[-1][1], hi)
            else:
                out.append([lo, hi])
        return [(a, b) for a, b in out]

    def gaps(self) -> list[tuple[float, float]]:
        """Open intervals between consecutive support components."""
        c = self.components()
        return [(c[i][1], c[i + 1][0]) for i in range(len(c) - 1)]

    def kinks(self) -> np.ndarray:
        """Points where C (and P) fail to be smooth: atoms and piece ends."""
        pts = list(self.atom_x)
        for p in self.pieces:
            pts += [p.lo, p.hi]
        pts = np.unique(np.array(pts, dtype=float))
        return pts[np.isfinite(pts)]

    # -- transforms -----------------------------------------------------------------
    def reflect(self) -> "TargetMeasure":
        return TargetMeasure([(-x, p) for x, p in self.atoms], [p.reflect() for p in self.pieces])

    def star(self) -> tuple["TargetMeasure", float]:
        z = self.zero_mass
        if z >= 1.0 - MASS_TOL:
            raise DegenerateDelta0("cannot remove the atom at 0 from delta_0")
        if z == 0.0:
            return self, 0.0
        scale = 1.0 / (1.0 - z)
        atoms = [(x, p * scale) for x, p in self.atoms if x != 0.0]
        pieces = [_rescale(p, scale) for p in self.pieces]
        return TargetMeasure(atoms, pieces), z

    def shifted(self, c: float, *, validate: bool = False) -> "TargetMeasure":
        """Translate by ``c`` (used for un-centred price laws)."""
        atoms = [(x + c, p) for x, p in self.atoms]
        pieces = []
        for p in self.pieces:
            if isinstance(p, UniformPiece):
                pieces.append(UniformPiece(p.lo + c, p.hi + c, p.mass))
            else:
                pieces.append(ParetoPiece(p.anchor + c, p.scale, p.mass, p.side, p.cutoff))
        return TargetMeasure(atoms, pieces, validate=validate)

    def scaled(self, k: float) -> "TargetMeasure":
        if k <= 0:
            raise ValidationError("scale factor must be positive")
        atoms = [(x * k, p) for x, p in self.atoms]
        pieces = []
        for p in self.pieces:
            if isinstance(p, UniformPiece):
                pieces.append(UniformPiece(p.lo * k, p.hi * k, p.mass))
            else:
                pieces.append(ParetoPiece(p.anchor * k, p.scale * k, p.mass, p.side, p.cutoff * k))
        return TargetMeasure(atoms, pieces)

    # -- io -------------------------------------------------------------------------
    def to_spec(self) -> dict:
        return {
            "atoms": [{"x": x, "p": p} for x, p in self.atoms],
            "pieces": [p.to_json() for p in self.pieces],
        }

    def __eq__(self, other):
        if not isinstance(other, TargetMeasure):
            return NotImplemented
        return (np.array_equal(self.atom_x, other.atom_x) and np.array_equal(self.atom_p, other.atom_p)
                and self.pieces == other.pieces)

    def __hash__(self):
        return hash((self.atom_x.tobytes(), self.atom_p.tobytes(), self.pieces))

    def __repr__(self):
        return f"TargetMeasure(atoms={self.atoms!r}, pieces={list(self.pieces)!r})"


def _rescale(p: Piece, k: float) -> Piece:
    if isinstance(p, UniformPiece):
        return UniformPiece(p.lo, p.hi, p.mass * k)
    return ParetoPiece(p.anchor, p.scale, p.mass * k, p.side, p.cutoff)


# ---------------------------------------------------------------------------
# construction


def _piece_from_json(d: dict) -> list[Piece]:
    kind = d.get("kind")
    if kind == "uniform":
        return [UniformPiece(float(d["lo"]), float(d["hi"]), float(d["p"]))]
    if kind == "pareto":
        scale = float(d.get("scale", 1.0))
        side = int(d.get("side", 1))
        shift = float(d["shift"])
        anchor = side * (scale - shift)
        cutoff = float(d.get("cutoff", math.inf))
        return [ParetoPiece(anchor, scale, float(d["p"]), side, cutoff)]
    if kind in ("pwl-cdf", "piecewise-linear-cdf"):
        xs = np.asarray(d["x"], dtype=float)
        F = np.asarray(d["cdf"], dtype=float)
        if xs.shape != F.shape or xs.size < 2:
            raise ValidationError("pwl-cdf piece needs matching x and cdf arrays")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(F) < 0):
            raise ValidationError("pwl-cdf knots must increase and cdf must be non-decreasing")
        return [UniformPiece(a, b, m) for a, b, m in zip(xs[:-1], xs[1:], np.diff(F)) if m > 0]
    raise ValidationError(f"unknown piece kind {kind!r}")


def from_spec(spec: dict, *, validate: bool = True) -> TargetMeasure:
    """Build a measure from its JSON description (validated unless asked not to)."""
    if not isinstance(spec, dict):
        raise ValidationError("measure spec must be a JSON object")
    atoms = [(float(a["x"]), float(a["p"])) for a in spec.get("atoms", [])]
    pieces: list[Piece] = []
    for d in spec.get("pieces", []):
        pieces += _piece_from_json(d)
    if not atoms and not pieces:
        raise ValidationError("measure spec lists no atoms and no pieces")
    return TargetMeasure(atoms, pieces, validate=validate)


def load_measure(path: str | Path, *, validate: bool = True) -> TargetMeasure:
    with open(path) as fh:
        return from_spec(json.load(fh), validate=validate)


def uniform(lo: float = -1.0, hi: float = 1.0) -> TargetMeasure:
    return TargetMeasure([], [UniformPiece(lo, hi, 1.0)])


def pareto(shift: float = 2.0, scale: float = 1.0, cutoff: float = math.inf) -> TargetMeasure:
    return from_spec({"pieces": [{"kind": "pareto", "shift": shift, "scale": scale,
                                  "cutoff": cutoff, "p": 1.0}]})


def pareto_truncated(cutoff: float = 5.0, scale: float = 1.0) -> TargetMeasure:
    """Cubic-tail Pareto law cut at ``cutoff`` and re-centred.

    The standard piece lives on ``[0, cutoff]``; its anchor is moved to
    minus its mean so that the result is centred with bounded support.
    """
    probe = ParetoPiece(0.0, scale, 1.0, 1, cutoff)
    return TargetMeasure([], [ParetoPiece(-probe.mean(), scale, 1.0, 1, cutoff)])


def atomic(pairs: Sequence[tuple[float, float]]) -> TargetMeasure:
    return TargetMeasure(pairs)


# test measures shared by the simulation, certificate and CLI layers
NAMED = {
    "uniform": lambda: uniform(),
    "two-point": lambda: atomic([(-1.0, 0.5), (1.0, 0.5)]),
    "three-atom": lambda: atomic([(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]),
    "pareto": lambda: pareto(),
    "pareto-truncated": lambda: pareto_truncated(),
}


def named(name: str) -> TargetMeasure:
    try:
        return NAMED[name]()
    except KeyError:
        raise ValidationError(f"unknown measure {name!r}; known: {sorted(NAMED)}") from None


# ---------------------------------------------------------------------------
# option prices


def from_call_prices(quotes: Sequence[tuple[float, float]], spot: float,
                     *, tol: float = 1e-9) -> TargetMeasure:
    """Measure of ``X_T - spot`` implied by call prices on a strike grid.

    The call curve is taken piecewise linear through the quotes, equal to
    ``spot - k`` left of the grid and extended with its last slope down to
    zero on the right.  Atoms sit at the slope jumps.
    """
    if spot <= 0:
        raise ValidationError("spot must be positive")
    q = np.asarray(quotes, dtype=float)
    if q.ndim != 2 or q.shape[1] != 2 or q.shape[0] < 1:
        raise ValidationError("quotes must be (strike, price) pairs")
    k, c = q[:, 0], q[:, 1]
    if np.any(np.diff(k) <= 0):
        raise ValidationError("strikes must be strictly increasing")
    if np.any(k < 0):
        raise ValidationError("strikes must be nonnegative")
    if np.any(c < 0):
        raise ArbitrageViolation("negative call price")
    scale = max(spot, 1.0)
    if k[0] == 0.0:
        if abs(c[0] - spot) > tol * scale:
            raise NonCentred(f"call price at strike 0 is {c[0]!r}, spot is {spot!r}")
        c = c.copy()
        c[0] = spot
    else:
        k = np.concatenate([[0.0], k])
        c = np.concatenate([[spot], c])
    if np.any(c - np.maximum(spot - k, 0.0) < -tol * scale) or np.any(c > spot + tol * scale):
        raise ArbitrageViolation("call prices violate the intrinsic-value bounds")
    slopes = np.diff(c) / np.diff(k)
    if np.any(slopes > tol) or np.any(slopes < -1.0 - tol):
        raise ArbitrageViolation("call prices are not monotone with slope in [-1, 0]")
    if np.any(np.diff(slopes) < -tol):
        raise ArbitrageViolation("call prices are not convex in strike")
    if c[-1] > tol * scale:
        if slopes.size == 0 or slopes[-1] >= 0:
            raise ArbitrageViolation("call curve does not decay to zero")
        k = np.concatenate([k, [k[-1] - c[-1] / slopes[-1]]])
        c = np.concatenate([c, [0.0]])
        slopes = np.diff(c) / np.diff(k)
    full = np.concatenate([[-1.0], np.clip(slopes, -1.0, 0.0), [0.0]])
    jumps = np.diff(full)
    jumps[jumps < 1e-15] = 0.0
    jumps /= jumps.sum()
    atoms = [(float(x - spot), float(p)) for x, p in zip(k, jumps) if p > 0]
    m = TargetMeasure(atoms, validate=False)
    mean = m.mean()
    if abs(mean) > 1e-9 * scale:
        raise NonCentred(f"implied law has mean {mean + spot!r}, spot is {spot!r}")
    return TargetMeasure(atoms)


def read_quotes(path: str | Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["strike", "price"]:
            raise ValidationError("quote CSV must have header 'strike,price'")
        return [(float(r["strike"]), float(r["price"])) for r in reader]


# ---------------------------------------------------------------------------
# module-level conveniences


def call(m: TargetMeasure, x):
    return m.call(x)


def put(m: TargetMeasure, x):
    return m.put(x)


def potential(m: TargetMeasure, x):
    return m.potential(x)


def reflect(m: TargetMeasure) -> TargetMeasure:
    return m.reflect()


def star_measure(m: TargetMeasure) -> tuple[TargetMeasure, float]:
    return m.star()


def convex_order_leq(a: TargetMeasure, b: TargetMeasure, grid, tol: float = 1e-12) -> bool:
    """True iff U_a <= U_b on every grid point."""
    g = _arr(grid)
    return bool(np.all(a.potential(g) <= b.potential(g) + tol))
