import math

import numpy as np
import pytest
from scipy import integrate

from skorokhod import diffusion as D
from skorokhod import measure as M
from skorokhod.certificate import bound_terminal, drawdown_over_max, power
from skorokhod.errors import NonCentredPushforward, ValidationError


def bessel_two_atom():
    # s(1/2) = -1 and s(3/2) = 1/3 for the Bessel(3) scale from x0 = 1
    return M.from_spec({"atoms": [{"x": 0.5, "p": 0.25}, {"x": 1.5, "p": 0.75}]}, validate=False)


def test_brownian_is_identity():
    m = M.named("uniform")
    out = D.diffusion_bounds(power(1.0), D.brownian(), m)
    assert out["report"]["status"] == "analytic"
    assert out["bounds"]["ay"]["value"] == pytest.approx(0.5, abs=1e-8)
    assert out["bounds"]["perkins"]["value"] == pytest.approx(1 / 3, abs=1e-8)


def test_bessel_two_atom_against_oracle():
    # exit of (-1, 1/3) in natural scale; h(m) = 1 / (1 - m)
    want = integrate.quad(lambda s: (1 / (1 - s) - 0.5) / (1 + s) ** 2, 0, 1 / 3)[0]
    assert want == pytest.approx(math.log(2) / 4, abs=1e-14)
    out = D.diffusion_bounds(power(1.0), D.bessel3(1.0), bessel_two_atom())
    assert out["nu_support"] == pytest.approx([-1.0, 1 / 3])
    for k in ("ay", "perkins"):
        assert out["bounds"][k]["value"] == pytest.approx(want, abs=1e-9)
    assert out["report"]["h_shape"] == "convex"


@pytest.mark.parametrize("model", [D.bessel3(1.0), D.ou(1.0), D.ou(0.3, 0.2)])
def test_scale_closed_form_matches_quadrature(model):
    plain = D.DiffusionSpec(model.drift, model.vol, model.x0, model.lo, model.hi)
    for x in [model.x0 + 0.3, model.x0 + 1.1, max(model.lo + 0.2, model.x0 - 0.4)]:
        assert plain.s(x) == pytest.approx(float(model.s(x)), rel=1e-9, abs=1e-12)
        assert plain.s_prime(x) == pytest.approx(float(model.s_prime(x)), rel=1e-9)


@pytest.mark.parametrize("model", [D.bessel3(1.0), D.ou(2.0)])
def test_inverse_scale_round_trip(model):
    x = np.array([model.x0 - 0.3 if model.lo < model.x0 - 0.3 else model.x0 * 0.8, model.x0 + 0.5, model.x0 + 1.7])
    assert np.allclose(model.h(model.s(x)), x, rtol=1e-10)


def test_bessel_image():
    lo, hi = D.bessel3(1.0).image()
    assert lo == -math.inf and hi == pytest.approx(1.0, rel=1e-6)


def test_non_centred_pushforward():
    m = M.from_spec({"atoms": [{"x": 0.5, "p": 0.5}, {"x": 1.5, "p": 0.5}]}, validate=False)
    with pytest.raises(NonCentredPushforward):
        D.pushforward(D.bessel3(1.0), m)


def test_ou_h_neither_convex_nor_concave():
    out = D.diffusion_bounds(power(1.0), D.ou(1.0), M.named("uniform"))
    rep = out["report"]
    assert rep["h_shape"] == "neither"
    assert rep["status"] == "numeric-only"
    assert rep["numeric_class"] == "up"
    assert out["bounds"]["perkins"]["value"] <= out["bounds"]["ay"]["value"]


def test_ou_pushforward_is_centred():
    nu = D.pushforward(D.ou(1.0), M.named("uniform"))
    assert abs(nu.mean()) < 1e-8
    assert nu.support_hi == pytest.approx(float(D.ou(1.0).s(1.0)), rel=1e-9)


@pytest.mark.parametrize("name, x0, err", [("bessel3", -1.0, ValidationError), ("ou(-1)", None, ValidationError),
                                           ("heston", None, ValidationError)])
def test_model_validation(name, x0, err):
    with pytest.raises(err):
        D.named_model(name, x0)


def test_named_model_parsing():
    assert D.named_model("ou:2").name == "ou(2)"
    assert D.named_model("OU(0.5)").name == "ou(0.5)"
    assert D.named_model("brownian", 0.0).x0 == 0.0


def test_dom_payoff_on_bessel():
    out = D.diffusion_bounds(drawdown_over_max(0.0), D.bessel3(1.0), bessel_two_atom())
    # F = (m - x)^2 is F-MON both in the original coordinates; bounds still come out finite and ordered
    b = out["bounds"]
    if b is not None:
        assert math.isfinite(b["ay"]["value"]) and math.isfinite(b["perkins"]["value"])
