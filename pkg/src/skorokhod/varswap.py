"""Model-independent bounds for an idealised variance swap.

With X a martingale from x0 and X_T ~ mu on [0, inf), the expected realised
variance int d[X]/X^2 lies between two Perkins running-cost values: the lower
one uses g(s) = (x0 + s)^-2 on the centred law, the upper one the reflected
centred law with g(s) = (x0 - s)^-2.  The upper value blows up as soon as the
reflected maximum can reach x0, i.e. when mu charges a neighbourhood of 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import simulate as sim
from .boundary import perkins_boundary
from .certificate import QUAD_TOL, RunningCost, bound_running
from .errors import UnsupportedMeasure, ValidationError
from .measure import TargetMeasure, from_call_prices

EPS_SCHEDULE = (0.1, 0.03, 0.01, 0.003, 0.001)


@dataclass(frozen=True)
class VarSwapQuote:
    """Spot and the law of X_T; ``centred`` is the law of X_T - spot."""

    spot: float
    centred: TargetMeasure

    def __post_init__(self):
        if not (self.spot > 0 and math.isfinite(self.spot)):
            raise ValidationError("spot must be a positive number")
        if self.centred.support_lo < -self.spot * (1 + 1e-12):
            raise ValidationError("terminal law charges negative prices")
        if self.centred.is_atomic and self.centred.atoms == [(0.0, 1.0)]:
            raise UnsupportedMeasure("terminal law is a point mass at the spot")

    @classmethod
    def from_terminal(cls, spot: float, terminal: TargetMeasure) -> "VarSwapQuote":
        """Quote from the law of X_T itself (mean must equal spot)."""
        mean = terminal.mean()
        if abs(mean - spot) > 1e-9 * max(1.0, spot):
            raise ValidationError(f"terminal law has mean {mean!r}, spot is {spot!r}")
        return cls(spot, terminal.shifted(-spot, validate=True))

    @classmethod
    def from_quotes(cls, spot: float, quotes) -> "VarSwapQuote":
        return cls(spot, from_call_prices(quotes, spot))

    @property
    def bankrupt_mass(self) -> float:
        """Mass of the price at exactly 0."""
        return float(self.centred.mass_le(-self.spot) - self.centred.mass_lt(-self.spot))


def lower_cost(spot: float, cap: float = math.inf) -> RunningCost:
    return RunningCost("power-shift", c=2.0, a=spot, sigma=1.0, cap=cap)


def upper_cost(spot: float, cap: float = math.inf) -> RunningCost:
    return RunningCost("power-shift", c=2.0, a=spot, sigma=-1.0, cap=cap)


@dataclass
class VarSwapBounds:
    lower: float
    lower_error: float
    upper: float
    upper_error: float
    method: str = "perkins-quadrature"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        enc = lambda v: "inf" if v == math.inf else v
        return {"lower": enc(self.lower), "lower_error": enc(self.lower_error),
                "upper": enc(self.upper), "upper_error": enc(self.upper_error),
                "method": self.method, "diagnostics": self.diagnostics}


def capped_upper_sequence(q: VarSwapQuote, eps=EPS_SCHEDULE, tol: float = QUAD_TOL):
    """Upper values with g capped at eps^-2, and the slope of value against log(1/eps)."""
    refl = q.centred.reflect()
    vals = []
    for e in eps:
        r = bound_running(upper_cost(q.spot, cap=e ** -2), refl, "perkins", tol)
        vals.append(float(r.value))
    le = np.log(1.0 / np.asarray(eps, dtype=float))
    slope = float(np.polyfit(le, vals, 1)[0]) if len(eps) > 1 else float("nan")
    return list(eps), vals, slope


def varswap_bounds(q: VarSwapQuote, tol: float = QUAD_TOL, eps=EPS_SCHEDULE) -> VarSwapBounds:
    lo = bound_running(lower_cost(q.spot), q.centred, "perkins", tol)
    diag: dict = {"spot": q.spot}
    if q.bankrupt_mass > 0:
        diag["upper_reason"] = "terminal law has an atom at price 0"
        up, up_err = math.inf, 0.0
    else:
        r = bound_running(upper_cost(q.spot), q.centred.reflect(), "perkins", tol)
        up, up_err = float(r.value), float(r.error_estimate)
        if not math.isfinite(up):
            up, up_err = math.inf, 0.0
            diag["upper_reason"] = "integral of (x0 - s)^-2 diverges at the bottom of the support"
    if up == math.inf:
        es, vals, slope = capped_upper_sequence(q, eps, tol)
        diag["capped_upper"] = {"eps": es, "values": vals, "slope_per_log_inv_eps": slope}
    return VarSwapBounds(float(lo.value), float(lo.error_estimate), up, up_err, diagnostics=diag)


def varswap_mc_check(q: VarSwapQuote, cfg: sim.SimConfig, which: str = "lower",
                     eps: float | None = None, *, backend: str | None = None) -> dict:
    """Monte Carlo mean of the Perkins running cost next to the quadrature value."""
    if which == "lower":
        m, g = q.centred, lower_cost(q.spot)
    elif which == "upper":
        if eps is None:
            raise ValidationError("the upper check needs a cap eps")
        m, g = q.centred.reflect(), upper_cost(q.spot, cap=eps ** -2)
    else:
        raise ValidationError("which must be 'lower' or 'upper'")
    exact = bound_running(g, m, "perkins")
    smp = sim.simulate_perkins(perkins_boundary(m), cfg, g, backend=backend)
    mean, se = sim._mean_se(smp.running_integral)
    v = float(exact.value)
    z = (mean - v) / se if se > 0 and math.isfinite(v) else float("nan")
    return {"which": which, "eps": eps, "mc_mean": mean, "mc_se": se, "quadrature": v,
            "z_score": z, "within_3se": bool(abs(z) <= 3.0), "num_paths": len(smp),
            "truncated_fraction": smp.truncated_fraction}
