"""Measure sequences whose embeddings do, or do not, converge.

Five fixtures are provided, each a sequence mu_n with a limit mu:

``potential-converging``
    U[-a_n, a_n] with a_n = 1 - 1/n, converging to U[-1, 1].
``escaping-mass``
    (1 - n^-2)(d_1 + d_-1)/2 + n^-2 (d_n + d_-n)/2.  The potentials converge at
    0 but the Azema-Yor boundaries do not converge above the limit support.
``zero-atom-mismatch``
    q(d_1 + d_-1) + (1 - 2q) d_0 with q = 1/8 against the limit with q = 1/4.
    The Perkins boundaries coincide although the measures differ.
``perkins-noncauchy``
    masses (n+1)/4n, 1/2, (n-1)/4n at -1, 1/n, 1.  The Perkins times stop at
    1/n with probability 1/2 for every n and are not Cauchy in probability.
``kochen-stone``
    masses n(1+2^-n)/2(1+n), 1/(1+n), n(1-2^-n)/2(1+n) at -1, n 2^-n, 1.
    The Perkins times converge in probability but not almost surely.

Stopping times along a sequence are compared on shared Brownian paths: the
simulation streams are keyed by (seed, path) only, so every measure of the
sequence sees the same grid path, and the zero-atom coin Z is shared too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import simulate as sim
from .boundary import ay_boundary, perkins_boundary
from .errors import UnknownFixture, ValidationError
from .measure import TargetMeasure, uniform

FIXTURES = ("potential-converging", "escaping-mass", "zero-atom-mismatch",
            "perkins-noncauchy", "kochen-stone")
# limit-measure neighbourhoods left out of sup-distances
EXCLUDE_RADIUS = 1e-6
DEFAULT_EPS = 0.05
ZERO_ATOM_Q = Fraction(1, 8)
# tolerance for recognising a stop at a given level
LEVEL_TOL = 1e-9


def _exact_atoms(tag: str, n: int) -> list[tuple[Fraction, Fraction]] | None:
    """Rational atoms of mu_n, or None for the diffuse fixture."""
    N = Fraction(n)
    if tag == "potential-converging":
        return None
    if tag == "escaping-mass":
        small = 1 / N**2
        return [(-N, small / 2), (Fraction(-1), (1 - small) / 2), (Fraction(1), (1 - small) / 2), (N, small / 2)]
    if tag == "zero-atom-mismatch":
        q = ZERO_ATOM_Q
        return [(Fraction(-1), q), (Fraction(0), 1 - 2 * q), (Fraction(1), q)]
    if tag == "perkins-noncauchy":
        return [(Fraction(-1), (N + 1) / (4 * N)), (1 / N, Fraction(1, 2)), (Fraction(1), (N - 1) / (4 * N))]
    if tag == "kochen-stone":
        e = Fraction(1, 2**n)
        return [(Fraction(-1), N * (1 + e) / (2 * (1 + N))), (N * e, 1 / (1 + N)),
                (Fraction(1), N * (1 - e) / (2 * (1 + N)))]
    raise UnknownFixture(f"unknown fixture {tag!r}; expected one of {', '.join(FIXTURES)}")


def _check(tag: str, n) -> int:
    if tag not in FIXTURES:
        raise UnknownFixture(f"unknown fixture {tag!r}; expected one of {', '.join(FIXTURES)}")
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise ValidationError(f"sequence index must be an integer >= 2, got {n!r}")
    return int(n)


def fixture(tag: str, n: int) -> TargetMeasure:
    """The n-th measure of a fixture sequence."""
    n = _check(tag, n)
    if tag == "potential-converging":
        a = 1.0 - 1.0 / n
        return uniform(-a, a)
    return TargetMeasure([(float(x), float(p)) for x, p in _exact_atoms(tag, n)])


def limit(tag: str) -> TargetMeasure:
    if tag == "potential-converging":
        return uniform(-1.0, 1.0)
    if tag in ("escaping-mass", "kochen-stone"):
        return TargetMeasure([(-1.0, 0.5), (1.0, 0.5)])
    if tag in ("zero-atom-mismatch", "perkins-noncauchy"):
        return TargetMeasure([(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)])
    raise UnknownFixture(f"unknown fixture {tag!r}; expected one of {', '.join(FIXTURES)}")


def exact_potential(tag: str, n: int, x: Fraction | int = 0) -> Fraction:
    """U_n(x) = E|X_n - x| in exact arithmetic."""
    n = _check(tag, n)
    x = Fraction(x)
    atoms = _exact_atoms(tag, n)
    if atoms is None:
        a = 1 - Fraction(1, n)
        if abs(x) >= a:
            return abs(x)
        return (a * a + x * x) / (2 * a)
    return sum((p * abs(y - x) for y, p in atoms), Fraction(0))


@dataclass(frozen=True)
class MeasureSequence:
    tag: str
    generator: Callable[[int], TargetMeasure]
    limit: TargetMeasure
    embedding: str

    def __getitem__(self, n: int) -> TargetMeasure:
        return self.generator(n)


def sequence(tag: str) -> MeasureSequence:
    if tag not in FIXTURES:
        raise UnknownFixture(f"unknown fixture {tag!r}; expected one of {', '.join(FIXTURES)}")
    emb = "ay" if tag in ("potential-converging", "escaping-mass") else "perkins"
    return MeasureSequence(tag, lambda n: fixture(tag, n), limit(tag), emb)


def _as_seq(seq) -> MeasureSequence:
    return sequence(seq) if isinstance(seq, str) else seq


# ---------------------------------------------------------------------------
# boundary distances


def _dist(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        d = np.abs(a - b)
    return np.where(a == b, 0.0, d)


def _sup(d) -> float:
    return float(np.max(d)) if np.size(d) else 0.0


def default_grid(seq: MeasureSequence, k: int = 301) -> np.ndarray:
    top = max(abs(seq.limit.support_lo), abs(seq.limit.support_hi))
    return np.linspace(0.0, 1.5 * top, k)


def _excluded(grid, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if not pts.size:
        return np.zeros(grid.shape, dtype=bool)
    return np.min(np.abs(grid[:, None] - pts[None, :]), axis=1) < EXCLUDE_RADIUS


def boundary_distance(seq, n: int, grid=None) -> dict:
    """Sup-distances between the boundaries and potentials of mu_n and the limit.

    ``grid`` holds levels s >= 0; beta and alpha+ are compared at s, alpha- at
    -s, the potential at +-s.  Points within EXCLUDE_RADIUS of a limit atom or
    a discontinuity of a limit boundary are left out of the corresponding sup.
    """
    seq = _as_seq(seq)
    m_n, m = seq[n], seq.limit
    grid = default_grid(seq) if grid is None else np.asarray(grid, dtype=float)
    grid = np.unique(np.abs(grid))
    atoms = m.atom_x
    ay, ay_n = ay_boundary(m), ay_boundary(m_n)
    pk, pk_n = perkins_boundary(m), perkins_boundary(m_n)

    skip_b = _excluded(grid, np.concatenate([atoms, ay.jumps(), [0.0]]))
    s_b = grid[~skip_b & (grid > 0)]
    skip_p = _excluded(grid, np.concatenate([atoms, pk.jumps_plus(), [0.0]]))
    s_p = grid[~skip_p & (grid > 0)]
    skip_m = _excluded(grid, np.concatenate([-atoms, -pk.jumps_minus(), [0.0]]))
    s_m = grid[~skip_m & (grid > 0)]
    xs = np.concatenate([-grid[::-1], grid])
    x_u = xs[~_excluded(xs, atoms)]

    rep = {
        "fixture": seq.tag,
        "n": int(n),
        "grid_points": int(grid.size),
        "sup_beta": _sup(_dist(ay_n.beta(s_b), ay.beta(s_b))),
        "sup_alpha_plus": _sup(_dist(pk_n.alpha_plus(s_p), pk.alpha_plus(s_p))),
        "sup_alpha_minus": _sup(_dist(pk_n.alpha_minus(-s_m), pk.alpha_minus(-s_m))),
        "sup_potential": _sup(_dist(m_n.potential(x_u), m.potential(x_u))),
        "excluded": {"beta": int(skip_b.sum()), "alpha_plus": int(skip_p.sum()),
                     "alpha_minus": int(skip_m.sum())},
        "potential_at_zero": float(m_n.potential(0.0)),
        "limit_potential_at_zero": float(m.potential(0.0)),
        "zero_mass": float(m_n.zero_mass),
        "limit_zero_mass": float(m.zero_mass),
    }
    if seq.tag != "potential-converging":
        rep["potential_at_zero_exact"] = str(exact_potential(seq.tag, n))
    if seq.tag == "escaping-mass":
        # above the limit support beta(z) = z, while beta_n stays near 1
        z = grid[grid > m.support_hi + EXCLUDE_RADIUS]
        rep["beyond_support"] = {"z": z.tolist(), "beta_n": np.asarray(ay_n.beta(z), dtype=float).tolist(),
                                 "beta": np.asarray(ay.beta(z), dtype=float).tolist()}
    return rep


# ---------------------------------------------------------------------------
# coupled stopping times


def _prob(mask) -> tuple[float, float]:
    mask = np.asarray(mask, dtype=bool)
    p = float(mask.mean())
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / mask.size)


def _stopped_at(smp: sim.StoppedSamples, level: float) -> np.ndarray:
    return (smp.code == 2) & (np.abs(smp.w_tau - level) < LEVEL_TOL)


def _event(tag: str, n: int, smp: sim.StoppedSamples) -> np.ndarray | None:
    if tag == "perkins-noncauchy":
        return _stopped_at(smp, 1.0 / n)
    if tag == "kochen-stone":
        # tau_n differs from the limit time exactly when it stops at n 2^-n
        return _stopped_at(smp, n * 2.0 ** -n)
    return None


def expected_probabilities(tag: str, n: int, m: int) -> dict:
    """Closed-form event probabilities where they are known."""
    if tag == "perkins-noncauchy":
        return {"p_En": 0.5, "p_Em": 0.5, "p_En_not_Em": abs(n - m) / (4.0 * max(n, m))}
    if tag == "kochen-stone":
        hi, lo = max(n, m), min(n, m)
        both = 1.0 / (1 + hi) * (hi * 2.0 ** -hi + 2.0 ** -lo) / ((lo + 1) * 2.0 ** -lo)
        return {"p_En": 1.0 / (n + 1), "p_Em": 1.0 / (m + 1), "p_En_and_Em": both,
                "p_En_not_Em": 1.0 / (n + 1) - both}
    return {}


def _run(embedding: str, m: TargetMeasure, cfg: sim.SimConfig, backend):
    return sim.simulate(embedding, m, cfg, backend=backend, strict=False)


def coupled_stopping_diagnostic(seq, n: int, m: int, cfg: sim.SimConfig, eps: float = DEFAULT_EPS, *,
                                embedding: str | None = None, backend: str | None = None) -> dict:
    """Simulate tau_n, tau_m and the limit time on the same paths and compare them."""
    seq = _as_seq(seq)
    if not eps > 0:
        raise ValidationError("eps must be positive")
    emb = embedding or seq.embedding
    a = _run(emb, seq[n], cfg, backend)
    b = _run(emb, seq[m], cfg, backend)
    lim = _run(emb, seq.limit, cfg, backend)
    out: dict = {"fixture": seq.tag, "embedding": emb, "n": int(n), "m": int(m), "eps": eps,
                 "num_paths": len(a), "coupling": "shared grid path, shared zero-atom coin"}

    def put(name, mask):
        p, se = _prob(mask)
        out[name] = p
        out[name + "_se"] = se

    put("p_tau_n_m_gt_eps", np.abs(a.tau - b.tau) > eps)
    put("p_tau_n_lim_gt_eps", np.abs(a.tau - lim.tau) > eps)
    put("p_tau_m_lim_gt_eps", np.abs(b.tau - lim.tau) > eps)
    en, em = _event(seq.tag, n, a), _event(seq.tag, m, b)
    if en is not None:
        put("p_En", en)
        put("p_Em", em)
        put("p_En_not_Em", en & ~em)
        put("p_En_and_Em", en & em)
        out["expected"] = expected_probabilities(seq.tag, n, m)
    out["truncated_fraction"] = max(a.truncated_fraction, b.truncated_fraction, lim.truncated_fraction)
    return out
