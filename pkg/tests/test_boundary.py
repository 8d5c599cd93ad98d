import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from skorokhod import measure as M
from skorokhod.boundary import ay_boundary, perkins_boundary, reverse_barycentre
from skorokhod.errors import DegenerateDelta0

S = np.linspace(1e-6, 1 - 1e-6, 1000)


def pareto_alpha_plus(s):
    return (-2 * s**2 - 5 * s + np.sqrt(s**4 + 6 * s**3 + 12 * s**2 + 8 * s)) / (s**2 + 2 * s - 1)


def pareto_alpha_minus(i):
    return (-3 * i - 2 * i**2 + np.sqrt(-(i**4 + 6 * i**3 + 12 * i**2 + 8 * i))) / (1 + i) ** 2


class TestUniform:
    m = M.named("uniform")

    def test_beta(self):
        assert np.max(np.abs(ay_boundary(self.m).beta(S) - (2 * S - 1))) < 1e-12

    def test_alpha_plus(self):
        assert np.max(np.abs(perkins_boundary(self.m).alpha_plus(S) - (S - 2 * np.sqrt(S)))) < 1e-12

    def test_alpha_minus(self):
        i = -S
        assert np.max(np.abs(perkins_boundary(self.m).alpha_minus(i) - (i + 2 * np.sqrt(-i)))) < 1e-12

    def test_barycentres(self):
        x = np.linspace(-0.99, 0.99, 50)
        assert np.allclose(ay_boundary(self.m).b(x), (1 + x) / 2, atol=1e-14)
        assert np.allclose(reverse_barycentre(self.m, x), (x - 1) / 2, atol=1e-14)

    def test_max_laws(self):
        s = np.linspace(0, 1, 21)
        assert np.allclose(ay_boundary(self.m).max_survival(s), 1 - s, atol=1e-9)
        assert np.allclose(perkins_boundary(self.m).max_survival(s), 1 - np.sqrt(s), atol=1e-9)

    def test_beyond_support(self):
        bd = ay_boundary(self.m)
        assert bd.beta(1.5) == 1.5
        assert bd.max_survival(1.0) == pytest.approx(0.0, abs=1e-12)


class TestPareto:
    m = M.named("pareto")

    def test_beta(self):
        s = np.linspace(0, 50, 1001)
        assert np.max(np.abs(ay_boundary(self.m).beta(s) - (s / 2 - 1))) < 1e-10

    @pytest.mark.parametrize("s", [1e-4, 0.05, 0.3, math.sqrt(2) - 1, 0.5, 1.0, 3.0, 20.0])
    def test_alpha_plus(self, s):
        bd = perkins_boundary(self.m)
        if abs(s - (math.sqrt(2) - 1)) < 1e-12:
            # removable singularity: compare with the limit from both sides
            want = 0.5 * (pareto_alpha_plus(s - 1e-5) + pareto_alpha_plus(s + 1e-5))
            assert bd.alpha_plus(s) == pytest.approx(want, abs=1e-8)
        else:
            assert bd.alpha_plus(s) == pytest.approx(pareto_alpha_plus(s), abs=1e-10)

    def test_alpha_minus(self):
        i = -np.linspace(1e-3, 0.99, 200)
        got = perkins_boundary(self.m).alpha_minus(i)
        assert np.allclose(got, pareto_alpha_minus(i), rtol=1e-9)

    def test_ay_max_law_against_quadrature(self):
        bd = ay_boundary(self.m)
        for s in [0.5, 2.0, 7.0]:
            integral = integrate.quad(lambda r: 1.0 / (r - (r / 2 - 1)), 0, s)[0]
            assert bd.max_survival(s) == pytest.approx(math.exp(-integral), rel=1e-9)
            # closed form: (2 / (s + 2))^2
            assert bd.max_survival(s) == pytest.approx((2 / (s + 2)) ** 2, rel=1e-9)


class TestAtoms:
    def test_two_point(self):
        m = M.named("two-point")
        ay, pk = ay_boundary(m), perkins_boundary(m)
        s = np.array([0.1, 0.5, 0.9])
        assert np.all(ay.beta(s) == -1)
        assert np.all(pk.alpha_plus(s) == -1)
        assert np.all(pk.alpha_minus(-s) == 1)
        assert np.allclose(ay.max_survival(s), 1 / (1 + s), atol=1e-10)
        assert np.allclose(pk.max_survival(s), 1 / (1 + s), atol=1e-10)

    def test_three_atom(self):
        m = M.named("three-atom")
        ay = ay_boundary(m)
        assert ay.beta(0.3) == -1 and ay.beta(1 / 3 + 1e-12) == 0 and ay.beta(0.99) == 0
        assert ay.jumps() == pytest.approx([1 / 3, 1.0])
        pk = perkins_boundary(m)
        assert pk.zero_mass == pytest.approx(0.5)
        s = np.array([0.2, 0.6])
        assert np.allclose(pk.max_survival(s), 0.5 / (1 + s), atol=1e-10)

    def test_point_mass_rejected(self):
        with pytest.raises(DegenerateDelta0):
            perkins_boundary(M.atomic([(0.0, 1.0)]))


@pytest.mark.parametrize("name", ["uniform", "two-point", "three-atom", "pareto-truncated"])
def test_tables_follow_functions(name):
    m = M.named(name)
    pk = perkins_boundary(m)
    xs, ys = pk.table_plus(tol=1e-9)
    mid = 0.5 * (xs[1:] + xs[:-1])
    ok = np.diff(xs) > 1e-9
    assert np.max(np.abs(np.interp(mid[ok], xs, ys) - pk.alpha_plus(mid[ok]))) < 1e-6


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_uniform_monotonicity(a, b):
    m = M.named("uniform")
    lo, hi = sorted((a, b))
    ay, pk = ay_boundary(m), perkins_boundary(m)
    assert ay.beta(lo) <= ay.beta(hi) + 1e-15
    assert pk.alpha_plus(lo) >= pk.alpha_plus(hi) - 1e-15
    # alpha- grows as the running minimum falls
    assert pk.alpha_minus(-lo) <= pk.alpha_minus(-hi) + 1e-15
    assert ay.beta(hi) < hi and pk.alpha_plus(hi) < 0


@given(st.floats(0.001, 30.0))
def test_pareto_perkins_ordering(s):
    pk = perkins_boundary(M.named("pareto"))
    a = float(pk.alpha_plus(s))
    assert -1.0 <= a < 0.0
    assert float(pk.a_plus(a)) == pytest.approx(s, rel=1e-7, abs=1e-9)
