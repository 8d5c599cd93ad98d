import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from skorokhod import measure as M
from skorokhod.errors import (ArbitrageViolation, DegenerateDelta0, MassNotOne, NonCentred,
                              ValidationError)

X = np.linspace(-3.0, 6.0, 91)


def quad_call(density, lo, hi, x):
    return integrate.quad(lambda y: (y - x) * density(y), max(lo, x), hi, limit=200)[0]


# closed forms for U[-1,1]
@pytest.mark.parametrize("x", [-1.5, -1.0, -0.3, 0.0, 0.7, 1.0, 2.0])
def test_uniform_curves(x):
    m = M.named("uniform")
    xc = min(max(x, -1.0), 1.0)
    C = (1 - xc) ** 2 / 4 + max(-1.0 - x, 0.0)
    P = (1 + xc) ** 2 / 4 + max(x - 1.0, 0.0)
    assert m.call(x) == pytest.approx(C, abs=1e-15)
    assert m.put(x) == pytest.approx(P, abs=1e-15)
    assert m.potential(x) == pytest.approx(C + P, abs=1e-15)


def test_uniform_potential_inside():
    m = M.named("uniform")
    x = np.linspace(-1, 1, 41)
    assert np.allclose(m.potential(x), (1 + x * x) / 2, atol=1e-15)


def test_pareto_matches_quadrature():
    m = M.named("pareto")
    dens = lambda y: 2.0 * (y + 2.0) ** -3
    for x in [-1.0, -0.5, 0.0, 1.0, 4.0]:
        assert m.call(x) == pytest.approx(quad_call(dens, -1.0, np.inf, x), rel=1e-9)
        assert m.call(x) == pytest.approx(1.0 / (x + 2.0), rel=1e-13)
        assert m.mass_gt(x) == pytest.approx((x + 2.0) ** -2, rel=1e-13)
    assert m.mean() == pytest.approx(0.0, abs=1e-14)
    assert m.support_lo == -1.0 and m.support_hi == math.inf


def test_pareto_truncated_is_centred_and_bounded():
    m = M.named("pareto-truncated")
    assert m.total_mass() == pytest.approx(1.0, abs=1e-14)
    assert abs(m.mean()) < 1e-12
    assert m.support_hi - m.support_lo == pytest.approx(5.0)
    assert m.variance() == pytest.approx(0.7471296836, rel=1e-9)


@pytest.mark.parametrize("name", ["uniform", "two-point", "three-atom", "pareto", "pareto-truncated"])
def test_put_call_parity(name):
    m = M.named(name)
    x = np.linspace(-2, 5, 57)
    # C(x) - P(x) = E[X] - x = -x
    assert np.allclose(m.call(x) - m.put(x), -x, atol=1e-12)


@pytest.mark.parametrize("name", ["uniform", "two-point", "three-atom", "pareto-truncated"])
def test_call_convex_and_decreasing(name):
    c = M.named(name).call(X)
    assert np.all(np.diff(c) <= 1e-15)
    assert np.all(np.diff(c, 2) >= -1e-13)


def test_atomic_potential_exact():
    m = M.named("three-atom")
    for x in [-2.0, -1.0, -0.25, 0.0, 0.5, 1.0, 3.0]:
        want = 0.25 * abs(-1 - x) + 0.5 * abs(x) + 0.25 * abs(1 - x)
        assert m.potential(x) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("spec, err", [
    ({"atoms": [{"x": 1, "p": 1}]}, NonCentred),
    ({"atoms": [{"x": -1, "p": 0.5}, {"x": 1, "p": 0.6}]}, MassNotOne),
    ({"atoms": [{"x": 0, "p": 1}]}, DegenerateDelta0),
    ({"pieces": [{"kind": "triangle"}]}, ValidationError),
    ({}, ValidationError),
])
def test_invalid_specs(spec, err):
    with pytest.raises(err):
        M.from_spec(spec)


def test_spec_round_trip():
    for name in ["uniform", "three-atom", "pareto", "pareto-truncated"]:
        m = M.named(name)
        assert M.from_spec(m.to_spec()) == m


def test_pwl_cdf_expands_to_uniforms():
    m = M.from_spec({"pieces": [{"kind": "pwl-cdf", "x": [-1, 0, 1], "cdf": [0, 0.5, 1]}]})
    assert m == M.named("uniform") or np.allclose(m.call(X), M.named("uniform").call(X), atol=1e-15)


def test_unvalidated_load_allows_uncentred(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"pieces": [{"kind": "uniform", "lo": 0, "hi": 2, "p": 1}]}')
    with pytest.raises(NonCentred):
        M.load_measure(p)
    m = M.load_measure(p, validate=False)
    assert m.mean() == pytest.approx(1.0)


def test_reflect_and_star():
    m = M.named("three-atom")
    assert np.allclose(m.reflect().call(X), m.put(-X), atol=1e-15)
    star, z = m.star()
    assert z == pytest.approx(0.5)
    assert star.atoms == [(-1.0, 0.5), (1.0, 0.5)]


def test_call_prices_to_measure():
    quotes = [(90, 12.0), (100, 5.0), (110, 1.0), (120, 0.0)]
    m = M.from_call_prices(quotes, 100.0)
    xs = [x for x, _ in m.atoms]
    assert xs == [-100.0, -10.0, 0.0, 10.0, 20.0]
    # reprices the quotes: C(k - spot) on the centred law
    for k, c in quotes:
        assert m.call(k - 100.0) == pytest.approx(c, abs=1e-12)
    assert abs(m.mean()) < 1e-12


@pytest.mark.parametrize("quotes", [
    [(90, 12.0), (100, 13.0)],          # increasing call price
    [(90, 5.0), (100, 4.0)],            # below intrinsic value
    [(90, 12.0), (100, 8.0), (110, 2.0)],  # concave
])
def test_call_prices_arbitrage(quotes):
    with pytest.raises(ArbitrageViolation):
        M.from_call_prices(quotes, 100.0)


def test_convex_order():
    g = np.linspace(-2, 2, 81)
    assert M.convex_order_leq(M.named("three-atom"), M.named("two-point"), g)
    assert not M.convex_order_leq(M.named("two-point"), M.named("three-atom"), g)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.05, 1.0)), min_size=2, max_size=6))
def test_random_atomic_measures(pairs):
    xs = np.array([x for x, _ in pairs])
    ps = np.array([p for _, p in pairs])
    ps /= ps.sum()
    xs = xs - np.dot(xs, ps)
    if np.ptp(xs) < 1e-3 or len(set(np.round(xs, 9))) < len(xs):
        return
    m = M.atomic(list(zip(xs, ps)))
    grid = np.linspace(-12, 12, 49)
    want = np.abs(xs[None, :] - grid[:, None]) @ ps
    assert np.allclose(m.potential(grid), want, atol=1e-10)
    assert np.all(m.potential(grid) >= np.abs(grid) - 1e-10)
