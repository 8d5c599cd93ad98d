"""Monte Carlo simulation of the Azema-Yor, Perkins and Chacon-Walsh stopping rules.

The path loops live in a compiled extension (``_kernel``); when it is not
built, or ``SKOROKHOD_BACKEND=python`` is set, the numpy implementation in
``_fallback`` is used instead.  Both read the same boundary tables and the
same counter-based random streams.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats

from ..boundary import AyBoundary, PerkinsBoundary, tabulate
from ..certificate import Payoff, RunningCost
from ..errors import TruncationDominates, ValidationError
from ..measure import TargetMeasure
from . import _fallback

try:
    from . import _kernel
except ImportError:  # pragma: no cover - exercised only without a compiler
    _kernel = None

BACKEND = "python" if (_kernel is None or os.environ.get("SKOROKHOD_BACKEND") == "python") else "cython"

STOP_LABELS = ("ay-boundary", "alpha-plus", "alpha-minus", "zero-atom", "truncation", "interval-exit")
TRUNCATION_LIMIT = 0.01
# boundary tables: far finer than the sqrt(dt) resolution of the paths
TABLE_TOL = 1e-8
TABLE_MIN_WIDTH = 1e-10


def _impl(backend: str | None):
    b = backend or BACKEND
    if b == "cython":
        if _kernel is None:
            raise ValidationError("compiled kernel is not available; rebuild or use backend='python'")
        return _kernel
    if b == "python":
        return _fallback
    raise ValidationError(f"unknown backend {b!r}")


@dataclass(frozen=True)
class SimConfig:
    num_paths: int = 10_000
    dt: float = 1e-4
    seed: int = 0
    level_cap: float = 1e3
    bridge_correction: bool = True
    max_steps: int = 10**8

    def __post_init__(self):
        if int(self.num_paths) < 1:
            raise ValidationError("num_paths must be at least 1")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.level_cap > 0:
            raise ValidationError("level_cap must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if int(self.max_steps) < 1:
            raise ValidationError("max_steps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StoppedSamples:
    """Stopped values of all paths, one array per field."""

    w_tau: np.ndarray
    s_tau: np.ndarray
    i_tau: np.ndarray
    tau: np.ndarray
    running_integral: np.ndarray
    code: np.ndarray
    steps: np.ndarray
    embedding: str = ""
    measure: TargetMeasure | None = field(default=None, repr=False)
    config: SimConfig | None = None
    cost: RunningCost | None = None
    backend: str = ""

    def __len__(self):
        return self.w_tau.size

    @property
    def stopped_by(self) -> np.ndarray:
        return np.asarray(STOP_LABELS, dtype=object)[self.code]

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.code == 4)) if len(self) else 0.0

    def sample(self, k: int) -> dict:
        return {"w_tau": float(self.w_tau[k]), "s_tau": float(self.s_tau[k]), "i_tau": float(self.i_tau[k]),
                "tau": float(self.tau[k]), "running_integral": float(self.running_integral[k]),
                "stopped_by": STOP_LABELS[int(self.code[k])]}

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("w_tau,s_tau,i_tau,tau,integral,stopped_by\n")
            for k in range(len(self)):
                fh.write(f"{self.w_tau[k]!r},{self.s_tau[k]!r},{self.i_tau[k]!r},{self.tau[k]!r},"
                         f"{self.running_integral[k]!r},{STOP_LABELS[int(self.code[k])]}\n")


# ---------------------------------------------------------------------------
# kernel inputs


def _cost_spec(g: RunningCost | None, s_max: float):
    dummy = np.zeros(1)
    if g is None:
        return (0, 0.0, 0.0, 0.0, 0.0, dummy, dummy)
    kind, a, sg, e, cap = g.kernel_params()
    cap = float(cap) if np.isfinite(cap) else math.inf
    if kind == 3:
        hi = s_max if np.isfinite(s_max) else 1e3
        xs, ys = tabulate(g, 0.0, hi, tol=1e-9)
        return (3, 0.0, 0.0, 0.0, cap, np.ascontiguousarray(xs), np.ascontiguousarray(ys))
    return (int(kind), float(a), float(sg), float(e), cap, dummy, dummy)


def _table(xs, ys):
    return np.ascontiguousarray(xs, dtype=float), np.ascontiguousarray(ys, dtype=float)


def _check_truncation(out: StoppedSamples, strict: bool) -> StoppedSamples:
    frac = out.truncated_fraction
    if strict and frac > TRUNCATION_LIMIT:
        raise TruncationDominates(
            f"{frac:.2%} of paths hit the level cap or the step budget; raise level_cap or max_steps",
            fraction=frac)
    return out


def _wrap(res, embedding, m, cfg, g, backend) -> StoppedSamples:
    w, s, i, t, integ, code, steps = res
    return StoppedSamples(np.asarray(w), np.asarray(s), np.asarray(i), np.asarray(t), np.asarray(integ),
                          np.asarray(code), np.asarray(steps), embedding, m, cfg, g, backend or BACKEND)


def simulate_ay(bd: AyBoundary, cfg: SimConfig, g: RunningCost | None = None, *,
                backend: str | None = None, strict: bool = True, first_path: int = 0) -> StoppedSamples:
    """Run the Azema-Yor rule tau = inf{u : W_u <= beta(S_u)}."""
    s_max = min(bd.x_hat, cfg.level_cap)
    bx, by = _table(*bd.table(s_max, TABLE_TOL, TABLE_MIN_WIDTH))
    cost = _cost_spec(g, s_max)
    res = _impl(backend).run_ay(bx, by, float(bd.x_hat), cost, int(cfg.num_paths), float(cfg.dt),
                                int(cfg.seed), float(cfg.level_cap), int(cfg.max_steps),
                                bool(cfg.bridge_correction), int(first_path))
    return _check_truncation(_wrap(res, "ay", bd.measure, cfg, g, backend), strict)


def simulate_perkins(bd: PerkinsBoundary, cfg: SimConfig, g: RunningCost | None = None, *,
                     backend: str | None = None, strict: bool = True, first_path: int = 0) -> StoppedSamples:
    """Run the Perkins rule; an initial uniform sends mass mu({0}) to tau = 0."""
    s_max = min(bd.x_hat, cfg.level_cap)
    u_max = min(-bd.x_check, cfg.level_cap)
    px, py = _table(*bd.table_plus(s_max, TABLE_TOL, TABLE_MIN_WIDTH))
    mx, my = _table(*bd.table_minus(u_max, TABLE_TOL, TABLE_MIN_WIDTH))
    cost = _cost_spec(g, s_max)
    res = _impl(backend).run_perkins(px, py, mx, my, float(bd.zero_mass), cost, int(cfg.num_paths),
                                     float(cfg.dt), int(cfg.seed), float(cfg.level_cap),
                                     int(cfg.max_steps), bool(cfg.bridge_correction), int(first_path))
    return _check_truncation(_wrap(res, "perkins", bd.measure, cfg, g, backend), strict)


@dataclass(frozen=True)
class ExitTree:
    """Binary tree of nested exit intervals; node k sits at x[k] with children left[k], right[k]."""

    x: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def leaves(self) -> np.ndarray:
        return self.x[self.left < 0]


def chacon_walsh_tree(m: TargetMeasure, depth: int = 12) -> ExitTree:
    """Exit tree from tangents to the potential at the dyadic quantiles of m.

    Two consecutive tangents, at quantile levels ql < qr, cross at the mean
    of the mass between those levels; that crossing is the node position.
    Adding the tangent at the midpoint level splits a node into two.
    """
    levels = np.arange(1, 2**depth) / 2.0**depth
    t = m.quantile(levels)
    G = np.concatenate([[0.0], m.call(t) + t * (1.0 - levels), [0.0]])
    q = np.concatenate([[0.0], levels, [1.0]])
    n_lv = 2**depth

    def pos(i, j):
        return (G[i] - G[j]) / (q[j] - q[i])

    scale = max(1.0, float(np.sqrt(m.variance())))
    snap = m.atom_x
    xs, left, right = [], [], []
    ids: dict = {}
    order = []
    # breadth-first numbering keeps the root at index 0
    queue = [(0, n_lv)]
    while queue:
        i, j = queue.pop(0)
        ids[(i, j)] = len(order)
        order.append((i, j))
        if j - i > 1:
            k = (i + j) // 2
            a, b = pos(i, k), pos(k, j)
            if b - a > 1e-12 * scale:
                queue += [(i, k), (k, j)]
    for i, j in order:
        x = pos(i, j)
        if snap.size:
            c = snap[np.argmin(np.abs(snap - x))]
            if abs(c - x) <= 1e-10 * scale:
                x = c
        xs.append(x)
        k = (i + j) // 2
        if (i, k) in ids:
            left.append(ids[(i, k)])
            right.append(ids[(k, j)])
        else:
            left.append(-1)
            right.append(-1)
    return ExitTree(np.array(xs), np.array(left, dtype=np.int64), np.array(right, dtype=np.int64))


def simulate_chacon_walsh(m: TargetMeasure, cfg: SimConfig, g: RunningCost | None = None, *,
                          depth: int = 12, backend: str | None = None, strict: bool = True,
                          first_path: int = 0) -> StoppedSamples:
    """Iterated exits from nested intervals cut by tangents to the potential."""
    tree = chacon_walsh_tree(m, depth)
    s_max = min(m.support_hi, cfg.level_cap)
    cost = _cost_spec(g, s_max)
    res = _impl(backend).run_cw(np.ascontiguousarray(tree.x), tree.left, tree.right, cost,
                                int(cfg.num_paths), float(cfg.dt), int(cfg.seed), float(cfg.level_cap),
                                int(cfg.max_steps), bool(cfg.bridge_correction), int(first_path))
    return _check_truncation(_wrap(res, "chacon-walsh", m, cfg, g, backend), strict)


def simulate(embedding: str, m: TargetMeasure, cfg: SimConfig, g: RunningCost | None = None, **kw):
    from ..boundary import ay_boundary, perkins_boundary
    if embedding == "ay":
        return simulate_ay(ay_boundary(m), cfg, g, **kw)
    if embedding == "perkins":
        return simulate_perkins(perkins_boundary(m), cfg, g, **kw)
    if embedding in ("cw", "chacon-walsh"):
        return simulate_chacon_walsh(m, cfg, g, **kw)
    raise ValidationError(f"embedding must be ay, perkins or cw, not {embedding!r}")


# ---------------------------------------------------------------------------
# statistics


def ks_distance(x, m: TargetMeasure) -> float:
    """sup |F_n - F| checked on both sides of every sample value (handles atoms)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    v, first = np.unique(x, return_index=True)
    last = np.append(first[1:], n)
    Fn_right = last / n
    Fn_left = first / n
    F_right = m.cdf(v)
    F_left = m.mass_lt(v)
    d = max(float(np.max(np.abs(Fn_right - F_right))), float(np.max(np.abs(Fn_left - F_left))))
    # the gaps between sample values, where only the target moves
    if m.atom_x.size:
        a = m.atom_x
        k = np.searchsorted(x, a, side="right")
        d = max(d, float(np.max(np.abs(k / n - m.cdf(a)))))
    return d


def ks_test(x, m: TargetMeasure) -> tuple[float, float]:
    """(D, p-value) against the exact Kolmogorov law; conservative when m has atoms."""
    d = ks_distance(x, m)
    return d, float(stats.kstwo.sf(d, np.size(x)))


def ks_test_cdf(x, cdf) -> tuple[float, float]:
    """KS test of samples against a continuous CDF callable."""
    r = stats.kstest(np.asarray(x, dtype=float), cdf)
    return float(r.statistic), float(r.pvalue)


def _mean_se(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(np.mean(v)), math.inf
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def mc_report(samples: StoppedSamples, F: Payoff | None = None, g: RunningCost | None = None,
              levels=None) -> dict:
    """Summary statistics of a simulation run."""
    rep: dict = {"embedding": samples.embedding, "num_paths": len(samples), "backend": samples.backend,
                 "truncated_fraction": samples.truncated_fraction}
    counts = np.bincount(samples.code.astype(np.int64), minlength=len(STOP_LABELS))
    rep["stopped_by"] = {lab: int(c) for lab, c in zip(STOP_LABELS, counts) if c}
    rep["mean_w"], rep["se_w"] = _mean_se(samples.w_tau)
    rep["mean_tau"], rep["se_tau"] = _mean_se(samples.tau)
    if samples.measure is not None:
        d, p = ks_test(samples.w_tau, samples.measure)
        rep["ks_distance"], rep["ks_pvalue"] = d, p
    if levels is None:
        hi = float(np.max(samples.s_tau)) if len(samples) else 0.0
        levels = np.linspace(0.0, hi, 21)
    levels = np.asarray(levels, dtype=float)
    s_sorted = np.sort(samples.s_tau)
    surv = 1.0 - np.searchsorted(s_sorted, levels, side="left") / max(len(samples), 1)
    n = max(len(samples), 1)
    rep["max_survival"] = {"levels": levels.tolist(), "survival": surv.tolist(),
                           "survival_se": np.sqrt(surv * (1.0 - surv) / n).tolist()}
    if F is not None:
        rep["payoff"] = F.describe()
        rep["mean_F"], rep["se_F"] = _mean_se(F(samples.w_tau, samples.s_tau))
    if g is not None:
        rep["running_cost"] = g.describe()
        rep["mean_integral"], rep["se_integral"] = _mean_se(samples.running_integral)
        # Ito: int_0^tau g(S) du and (S - W)^2 g(S) have the same mean
        G = g.as_payoff()(samples.w_tau, samples.s_tau)
        rep["mean_G"], rep["se_G"] = _mean_se(G)
        diff = samples.running_integral - G
        md, sd = _mean_se(diff)
        rep["ito_gap"], rep["ito_gap_se"] = md, sd
    return rep


__all__ = ["SimConfig", "StoppedSamples", "ExitTree", "BACKEND", "STOP_LABELS", "simulate", "simulate_ay",
           "simulate_perkins", "simulate_chacon_walsh", "chacon_walsh_tree", "mc_report", "ks_distance",
           "ks_test", "ks_test_cdf"]
