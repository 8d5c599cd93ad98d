"""Acceptance suite: one test (and one summary line) per criterion.

Every criterion is run at its stated tolerance, sample size and time budget.
The summary lines are printed at the end of the pytest run.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from skorokhod import convergence as C
from skorokhod import measure as M
from skorokhod import simulate as S
from skorokhod.boundary import ay_boundary, perkins_boundary
from skorokhod.certificate import (RunningCost, bound_running, bound_terminal, certificate,
                                   drawdown_over_max, pathwise_inequality_check, power)
from skorokhod.varswap import VarSwapQuote, varswap_bounds, varswap_mc_check

N = 100_000
DT = 1e-4
TEST_MEASURES = ["uniform", "two-point", "three-atom", "pareto-truncated"]


def _u02():
    return M.from_spec({"pieces": [{"kind": "uniform", "lo": 0, "hi": 2, "p": 1}]}, validate=False)


# ---------------------------------------------------------------------------


def test_criterion_1_boundary_oracle(record_criterion):
    t0 = time.perf_counter()
    u = M.named("uniform")
    s = np.linspace(0, 1, 1002)[1:-1]
    ay, pk = ay_boundary(u), perkins_boundary(u)
    e_beta = np.max(np.abs(ay.beta(s) - (2 * s - 1)))
    e_ap = np.max(np.abs(pk.alpha_plus(s) - (s - 2 * np.sqrt(s))))
    e_am = np.max(np.abs(pk.alpha_minus(-s) - (-s + 2 * np.sqrt(s))))

    p = M.named("pareto")
    sp = np.linspace(0, 20, 1001)[1:]
    e_pbeta = np.max(np.abs(ay_boundary(p).beta(sp) - (sp / 2 - 1)))
    closed = (-2 * sp**2 - 5 * sp + np.sqrt(sp**4 + 6 * sp**3 + 12 * sp**2 + 8 * sp)) / (sp**2 + 2 * sp - 1)
    e_pap = np.max(np.abs(perkins_boundary(p).alpha_plus(sp) - closed))
    elapsed = time.perf_counter() - t0

    ok = e_beta < 1e-9 and e_ap < 1e-8 and e_am < 1e-8 and e_pbeta < 1e-8 and e_pap < 1e-6 and elapsed < 1.0
    record_criterion("1", ok, f"U beta {e_beta:.1e}, alpha+ {e_ap:.1e}, alpha- {e_am:.1e}; pareto beta "
                              f"{e_pbeta:.1e}, alpha+ {e_pap:.1e}; {elapsed:.2f}s")
    assert ok


def test_criterion_2_terminal_closed_forms(record_criterion):
    t0 = time.perf_counter()
    u = M.named("uniform")
    worst = 0.0
    for c in (0.5, 1.0, 1.5, 2.0, 3.0):
        worst = max(worst, abs(bound_terminal(power(c), u, "ay").value - 1 / (c + 1)),
                    abs(bound_terminal(power(c), u, "perkins").value - 2**c / ((c + 1) * (c + 2))))
    equal_at_2 = abs(bound_terminal(power(2.0), u, "ay").value - bound_terminal(power(2.0), u, "perkins").value)
    for c in (-1.0, 0.0, 0.5):
        F = drawdown_over_max(c)
        worst = max(worst, abs(bound_terminal(F, u, "ay").value - 2 / ((1 - c) * (2 - c) * (3 - c))),
                    abs(bound_terminal(F, u, "perkins").value - 1 / ((1.5 - c) * (2 - c))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and equal_at_2 < 1e-6 and elapsed < 5.0
    record_criterion("2", ok, f"max error {worst:.1e}, c=2 gap {equal_at_2:.1e}; {elapsed:.2f}s")
    assert ok


def test_criterion_3_variance_swap(record_criterion):
    t0 = time.perf_counter()
    q = VarSwapQuote.from_terminal(1.0, _u02())
    b = varswap_bounds(q)
    t_quad = time.perf_counter() - t0
    exact = math.pi / 2 - 2 * math.log(2)
    seq = b.diagnostics.get("capped_upper", {})
    vals = seq.get("values", [])
    diverging = b.upper == math.inf and len(vals) > 2 and bool(np.all(np.diff(vals) > 0)) \
        and seq["slope_per_log_inv_eps"] > 0.5

    t0 = time.perf_counter()
    mc = varswap_mc_check(q, S.SimConfig(num_paths=N, dt=DT, seed=11))
    t_mc = time.perf_counter() - t0
    z = (mc["mc_mean"] - exact) / mc["mc_se"]
    ok = abs(b.lower - exact) < 1e-6 and t_quad < 5.0 and abs(z) <= 3 and t_mc < 60.0 and diverging
    record_criterion("3", ok, f"quadrature {b.lower:.10f} (err {abs(b.lower - exact):.1e}, {t_quad:.2f}s); "
                              f"MC {mc['mc_mean']:.5f}+-{mc['mc_se']:.5f} z={z:+.2f} ({t_mc:.1f}s); "
                              f"upper inf, capped slope {seq.get('slope_per_log_inv_eps', float('nan')):.3f}")
    assert ok


def test_criterion_4_embedding(record_criterion):
    t0 = time.perf_counter()
    cfg = S.SimConfig(num_paths=N, dt=DT, seed=2024)
    pvals = {}
    for name in TEST_MEASURES:
        m = M.named(name)
        for emb in ("ay", "perkins"):
            smp = S.simulate(emb, m, cfg)
            pvals[(name, emb)] = S.ks_test(smp.w_tau, m)[1]
            if name == "uniform" and emb == "ay":
                pvals["ay-max"] = S.ks_test_cdf(smp.s_tau, lambda x: np.clip(x, 0, 1))[1]
            if name == "uniform" and emb == "perkins":
                # P(S >= s) = 1 - sqrt(s), i.e. S has CDF sqrt(s)
                pvals["perkins-max"] = S.ks_test_cdf(smp.s_tau, lambda x: np.sqrt(np.clip(x, 0, 1)))[1]
    elapsed = time.perf_counter() - t0
    worst = min(pvals, key=pvals.get)
    ok = all(p > 0.01 for p in pvals.values()) and elapsed < 120.0
    record_criterion("4", ok, f"min KS p-value {pvals[worst]:.3f} ({worst}); {elapsed:.1f}s")
    assert ok


def test_criterion_5_sandwich(record_criterion):
    t0 = time.perf_counter()
    cfg = S.SimConfig(num_paths=N, dt=DT, seed=21)
    fails = []
    for name in TEST_MEASURES:
        m = M.named(name)
        smp = S.simulate("cw", m, cfg)
        d = smp.s_tau - smp.w_tau
        for c in (1.0, 3.0):
            ay = bound_terminal(power(c), m, "ay").value
            pk = bound_terminal(power(c), m, "perkins").value
            mean, se = S._mean_se(d**c)
            # (s-w) is F-MON up: Perkins <= CW <= AY; (s-w)^3 reverses the order
            lo, hi = (pk, ay) if c == 1.0 else (ay, pk)
            if not (lo - 3 * se <= mean <= hi + 3 * se):
                fails.append(f"{name} c={c:g}: {mean:.4f} not in [{lo:.4f}, {hi:.4f}]")
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 120.0
    record_criterion("5", ok, ("; ".join(fails) or "CW mean inside both sandwiches for 4 measures")
                     + f"; {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def running_cost_runs():
    """U[-1,1] with g = 1/(1+s) under all three rules; tau gives the g = 1 case on the same paths."""
    u = M.named("uniform")
    g = RunningCost("shifted", c=1.0)
    cfg = S.SimConfig(num_paths=N, dt=DT, seed=606)
    t0 = time.perf_counter()
    runs = {e: S.simulate(e, u, cfg, g) for e in ("ay", "perkins", "cw")}
    return runs, time.perf_counter() - t0, {w: bound_running(g, u, w).value for w in ("ay", "perkins")}


def _reversal(runs):
    a, sa = S._mean_se(runs["ay"].running_integral)
    p, sp = S._mean_se(runs["perkins"].running_integral)
    return a, sa, p, sp, a - p <= 3 * math.hypot(sa, sp)


@pytest.mark.xfail(strict=True, reason=(
    "for g=1/(1+s) on U[-1,1] the AY value is 4 log 2 - 5/2 = 0.2726 and the Perkins value 0.2447: "
    "g decreasing makes (s-w)^2 g(s) F-MON up, so AY is the larger one and the stated order cannot hold"))
def test_criterion_6_reversal_ay_lower(running_cost_runs):
    runs, _, _ = running_cost_runs
    assert _reversal(runs)[-1]


def test_criterion_6_running_cost(running_cost_runs, record_criterion):
    runs, elapsed, exact = running_cost_runs
    a, sa, p, sp, lower = _reversal(runs)
    z1 = {}
    for e, smp in runs.items():
        m, se = S._mean_se(smp.tau)
        z1[e] = (m - 1 / 3) / se
    variance_ok = all(abs(z) <= 3 for z in z1.values())
    matches_analytic = abs(a - exact["ay"]) <= 3 * sa and abs(p - exact["perkins"]) <= 3 * sp
    ok = lower and variance_ok and elapsed < 120.0
    record_criterion("6", ok, (
        f"AY {a:.4f}+-{sa:.4f} vs Perkins {p:.4f}+-{sp:.4f}: AY lower is "
        f"{'true' if lower else 'FALSE (exact 0.2726 > 0.2447, xfail)'}; MC matches analytic: {matches_analytic}; "
        f"g=1 z-scores " + ", ".join(f"{e} {z:+.2f}" for e, z in z1.items()) + f"; {elapsed:.1f}s"))
    # the g = 1 half and the analytic agreement must hold; the order itself is the xfail above
    assert variance_ok and matches_analytic and elapsed < 120.0


def _pts(m, n, rng):
    top = min(m.support_hi, 10.0)
    lo = max(m.support_lo, -10.0)
    s = rng.uniform(0, top, n) * 0.999
    w = lo + (s - lo) * rng.uniform(size=n)
    return np.column_stack([w, s])


def test_criterion_7_pathwise(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    pairs = [("uniform", power(1.0)), ("uniform", power(3.0)), ("uniform", drawdown_over_max(0.5)),
             ("uniform", drawdown_over_max(-1.0)), ("pareto", power(1.0)), ("three-atom", power(3.0))]
    worst, contact = 0.0, 0.0
    all_ok = True
    for name, F in pairs:
        m = M.named(name)
        rep = pathwise_inequality_check(F, certificate(F, ay_boundary(m)), certificate(F, perkins_boundary(m)),
                                        _pts(m, 10_000, rng), tol=1e-7, raise_on_fail=False)
        worst = max(worst, rep.worst_excess)
        contact = max(contact, rep.contact_residual)
        all_ok &= rep.ok
    elapsed = time.perf_counter() - t0
    ok = all_ok and elapsed < 10.0
    record_criterion("7", ok, f"6 pairs x 1e4 points, worst excess {worst:.1e}, contact residual {contact:.1e}; "
                              f"{elapsed:.1f}s")
    assert ok


def test_criterion_8_convergence(record_criterion):
    t0 = time.perf_counter()
    exact = all(C.exact_potential("escaping-mass", n) == 1 + Fraction(1, n) - Fraction(1, n * n)
                for n in range(2, 201))
    n, m = 8, 2
    r = C.coupled_stopping_diagnostic(C.sequence("perkins-noncauchy"), n, m,
                                      S.SimConfig(num_paths=N, dt=DT, seed=8))
    z_en = (r["p_En"] - 0.5) / r["p_En_se"]
    z_diff = (r["p_En_not_Em"] - (n - m) / (4 * n)) / r["p_En_not_Em_se"]
    elapsed = time.perf_counter() - t0
    ok = exact and abs(z_en) <= 3 and abs(z_diff) <= 3 and elapsed < 60.0
    record_criterion("8", ok, f"U_n(0) exact for n=2..200: {exact}; P(E_8)={r['p_En']:.4f} z={z_en:+.2f}, "
                              f"P(E_8 not E_2)={r['p_En_not_Em']:.4f} vs 3/16 z={z_diff:+.2f}; {elapsed:.1f}s")
    assert ok
