import math

import numpy as np
import pytest
from scipy import integrate

from skorokhod import measure as M
from skorokhod import simulate as S
from skorokhod.errors import UnsupportedMeasure, ValidationError
from skorokhod.varswap import VarSwapQuote, capped_upper_sequence, varswap_bounds, varswap_mc_check

LOWER = math.pi / 2 - 2 * math.log(2)


def u02():
    return M.from_spec({"pieces": [{"kind": "uniform", "lo": 0, "hi": 2, "p": 1}]}, validate=False)


def test_lower_oracle():
    # Perkins on U[-1, 1]: W < 0 stops at the max (1 - sqrt(1 + w))^2, cost (1 + s)^-2
    a = lambda w: (1 - math.sqrt(1 + w)) ** 2
    want = integrate.quad(lambda w: 0.5 * (a(w) - w) ** 2 / (1 + a(w)) ** 2, -1, 0, epsabs=1e-14)[0]
    assert want == pytest.approx(LOWER, abs=1e-10)


def test_bounds_uniform_price():
    b = varswap_bounds(VarSwapQuote.from_terminal(1.0, u02()))
    assert b.lower == pytest.approx(LOWER, abs=1e-9)
    assert b.upper == math.inf
    seq = b.diagnostics["capped_upper"]
    assert np.all(np.diff(seq["values"]) > 0)
    assert seq["slope_per_log_inv_eps"] == pytest.approx(1.0, abs=0.1)
    assert b.to_dict()["upper"] == "inf"


def test_finite_upper_when_bounded_away_from_zero():
    m = M.from_spec({"pieces": [{"kind": "uniform", "lo": 0.5, "hi": 1.5, "p": 1}]}, validate=False)
    b = varswap_bounds(VarSwapQuote.from_terminal(1.0, m))
    assert math.isfinite(b.upper) and b.lower < b.upper
    # realised variance of a martingale on [0.5, 1.5] is at least var / max^2 and at most var / min^2
    var = 1 / 12
    assert var / 1.5**2 <= b.lower <= b.upper <= var / 0.5**2


def test_quotes_with_mass_at_zero():
    k = np.linspace(0, 2, 201)
    quotes = list(zip(k[1:], (2 - k[1:]) ** 2 / 4))
    q = VarSwapQuote.from_quotes(1.0, quotes)
    assert q.bankrupt_mass > 0
    b = varswap_bounds(q)
    assert b.upper == math.inf and "atom at price 0" in b.diagnostics["upper_reason"]
    assert b.lower == pytest.approx(LOWER, abs=2e-3)


def test_capped_sequence_direct():
    eps, vals, slope = capped_upper_sequence(VarSwapQuote.from_terminal(1.0, u02()), eps=(0.1, 0.01))
    assert eps == [0.1, 0.01] and vals[1] > vals[0] > 0


def test_mc_lower_check():
    q = VarSwapQuote.from_terminal(1.0, u02())
    r = varswap_mc_check(q, S.SimConfig(num_paths=20_000, dt=1e-3, seed=11))
    assert r["quadrature"] == pytest.approx(LOWER, abs=1e-9)
    assert abs(r["z_score"]) < 4


@pytest.mark.parametrize("spot, law, err", [
    (2.0, "u02", ValidationError),      # mean differs from spot
    (-1.0, "u02", ValidationError),
])
def test_quote_validation(spot, law, err):
    with pytest.raises(err):
        VarSwapQuote.from_terminal(spot, u02())


def test_point_mass_rejected():
    with pytest.raises((UnsupportedMeasure, ValidationError)):
        VarSwapQuote.from_terminal(1.0, M.from_spec({"atoms": [{"x": 1.0, "p": 1.0}]}, validate=False))


def test_upper_check_needs_eps():
    with pytest.raises(ValidationError):
        varswap_mc_check(VarSwapQuote.from_terminal(1.0, u02()), S.SimConfig(num_paths=10), "upper")
