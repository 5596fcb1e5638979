import json

import pytest
from hypothesis import given, strategies as st

from quasiergodic.boundary import check_hypothesis_H, classify
from quasiergodic.models import power_drift


@given(st.booleans(), st.booleans(), st.booleans())
def test_classify_truth_table(h1, h2, h3):
    zero, inf = classify(h1, h2, h3)
    assert (zero == "exit") == (h1 and h2)
    assert (inf == "entrance") == (h1 and h3)


def test_feller_satisfies_H(feller_model):
    rep = check_hypothesis_H(feller_model)
    assert (rep.h1, rep.h2, rep.h3) == (True, True, True)
    assert rep.zero_class == "exit" and rep.infinity_class == "entrance" and rep.holds


def test_brownian_fails_H2(brownian):
    rep = check_hypothesis_H(brownian)
    assert not rep.h2
    assert rep.zero_class == "not-exit" and not rep.holds


def test_ou_is_not_entrance():
    rep = check_hypothesis_H(power_drift(b=1.0))
    assert not rep.h3 and rep.infinity_class == "not-entrance"


def test_report_json(feller_model):
    doc = json.loads(check_hypothesis_H(feller_model).to_json())
    for key in ("h1", "h2", "h3", "zero_class", "infinity_class", "evidence"):
        assert key in doc
    assert doc["evidence"]["entrance_integral"]["kind"] == "finite"
    assert len(doc["evidence"]["kappa_at_zero"]["evidence"]) > 3
