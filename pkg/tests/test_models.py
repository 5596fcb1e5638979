import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiergodic.errors import UsageError
from quasiergodic.models import ModelSpec, build_model, constant_drift, feller, power_drift

pos = st.floats(0.1, 5.0)
xs = st.floats(0.05, 4.0)


@given(pos, pos, pos, xs)
def test_feller_expansion(gamma, r, c, x):
    d = feller(gamma, r, c)
    expected = 1 / (2 * x) - r * x / 2 + c * gamma * x ** 3 / 8
    assert d(x) == pytest.approx(expected, rel=1e-12, abs=1e-12)


@given(pos, pos, pos, xs)
@settings(max_examples=50)
def test_closed_form_Q_matches_quadrature(gamma, r, c, x):
    from scipy.integrate import quad
    d = feller(gamma, r, c)
    ref, _ = quad(lambda y: 2 * d(y), 1.0, x, epsabs=1e-13, epsrel=1e-12)
    assert d.analytic_Q(x) == pytest.approx(ref, rel=1e-9, abs=1e-11)


def test_feller_laurent_terms():
    d = feller(2.0, 3.0, 0.5)
    terms = dict(d.laurent)
    assert terms[-1] == 0.5 and terms[1] == -1.5 and terms[3] == pytest.approx(0.125)


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_feller_rejects_nonpositive(bad):
    with pytest.raises(UsageError):
        feller(*bad)


def test_power_drift_subsumes_feller():
    a = power_drift(0.5, -0.5, 0.125)
    b = feller()
    x = np.linspace(0.1, 3, 17)
    assert np.allclose(a(x), b(x), rtol=1e-14)


def test_constant_drift_Q_linear():
    d = constant_drift(0.7)
    assert d.analytic_Q(3.0) == pytest.approx(2 * 0.7 * 2.0)


def test_registry():
    assert build_model("feller", gamma=2.0)(1.0) == pytest.approx(0.5 - 0.5 + 0.25)
    assert ModelSpec("constant-drift").resolved_params() == {"value": 0.0}
    with pytest.raises(UsageError):
        ModelSpec("ornstein")
    with pytest.raises(UsageError):
        ModelSpec("feller", {"value": 1.0})


def test_non_finite_power_coefficient():
    with pytest.raises(UsageError):
        power_drift(math.inf, 0, 0)
