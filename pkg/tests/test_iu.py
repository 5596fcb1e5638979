"""Ultracontractivity suprema.

Frozen Feller values: mpmath at 25 digits with the closed-form Q, maximizing
Lambda~(x)^3 mu([x, 1)) by a root of its derivative.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiergodic.errors import BadBracket, BadExponent, ScaleUnboundedAtZero
from quasiergodic.iu import hitting_law_natural_scale, iu_criterion, natural_scale
from quasiergodic.models import constant_drift, power_drift

FELLER_NEAR_SUP = 0.0165196787217166139792299
FELLER_NEAR_ARGMAX = 0.8319737689694081886434127
FELLER_Z1 = 0.6207621512721838843306624


@pytest.fixture(scope="module")
def feller_iu(feller_model):
    return iu_criterion(feller_model, 3.0)


def test_feller_near_sup(feller_iu):
    s = feller_iu.sup_near_zero
    assert s.finite and s.value == pytest.approx(FELLER_NEAR_SUP, rel=1e-8)
    assert s.argmax == pytest.approx(FELLER_NEAR_ARGMAX, rel=1e-5)
    assert feller_iu.z1 == pytest.approx(FELLER_Z1, rel=1e-10)


def test_feller_near_factor_two(feller_iu):
    assert feller_iu.z_sup_near_zero.finite
    assert feller_iu.identity_errors()["near_zero"] < 1e-6
    assert feller_iu.pointwise_identity_error < 1e-6


def test_feller_far_sup_grows(feller_iu):
    # Lambda~^p mu-tail behaves like exp((p - 1) Q(x)) for large x, unbounded for p > 1
    s = feller_iu.sup_at_infinity
    assert s.kind == "divergent" and s.reason == "increasing-at-end"
    assert feller_iu.z_sup_at_infinity.kind == "divergent"
    assert not feller_iu.ultracontractive


def test_brownian_near_sup_closed_form(brownian):
    r = iu_criterion(brownian, 3.0)
    assert r.sup_near_zero.value == pytest.approx(27 / 256, rel=1e-10)
    assert r.sup_near_zero.argmax == pytest.approx(0.75, rel=1e-6)
    assert r.z_sup_near_zero.value == pytest.approx(27 / 128, rel=1e-10)
    assert r.sup_at_infinity.reason == "infinite-tail"
    assert not r.ultracontractive


@given(st.floats(2.2, 12.0))
@settings(max_examples=8, deadline=None)
def test_brownian_near_sup_any_q(q):
    p = q / (q - 2)
    xs = p / (p + 1)
    expected = xs ** p * (1 - xs)
    r = iu_criterion(constant_drift(0.0), q, per_decade=20)
    assert r.sup_near_zero.value == pytest.approx(expected, rel=1e-8)
    assert r.identity_errors()["near_zero"] < 1e-9


@pytest.mark.parametrize("q", [2.0, 1.0, math.inf, math.nan])
def test_bad_exponent(brownian, q):
    with pytest.raises(BadExponent):
        iu_criterion(brownian, q)


def test_scale_unbounded_at_zero():
    # alpha = 1/x: e^Q = x^2 integrable, but alpha = -1/(2x) gives e^Q = 1/x
    with pytest.raises(ScaleUnboundedAtZero):
        natural_scale(power_drift(a=-0.5))


def test_natural_scale_inverse(feller_model):
    ns = natural_scale(feller_model)
    for x in (0.01, 0.5, 1.0, 2.0):
        assert ns.inverse(ns.shifted_scale(x)) == pytest.approx(x, rel=1e-9)
    assert ns.shifted_scale(1.0) == pytest.approx(FELLER_Z1, rel=1e-10)


@given(st.floats(0.0, 5.0), st.floats(0.0, 1.0), st.floats(0.01, 5.0))
def test_natural_scale_law(a, frac, width):
    b = a + width
    y = a + frac * width
    p = hitting_law_natural_scale(a, y, b)
    assert 0.0 <= p <= 1.0
    assert p == pytest.approx((b - y) / (b - a))


def test_natural_scale_law_bracket():
    with pytest.raises(BadBracket):
        hitting_law_natural_scale(1.0, 3.0, 2.0)


def test_report_keys(feller_iu):
    doc = feller_iu.to_dict()
    for k in ("sup_near_zero", "sup_at_infinity", "z_sup_near_zero", "z_sup_at_infinity", "ultracontractive"):
        assert k in doc
    assert np.isfinite(doc["sup_near_zero"]["value"])
