"""nu_1 and nu_2 on the spectral grid.

Frozen reference values come from a separate route: the principal
eigenfunction is re-computed by shooting (DOP853 from f ~ x^2 at 1e-5 with
lambda_1 from the shooting oracle), and the densities eta e^{-Q} and
eta^2 e^{-Q} are integrated by the trapezoid rule on 60 000 points.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiergodic import distributions as D
from quasiergodic.errors import MeasureMismatch, UsageError

NU1_MEAN = 1.99149641816646
NU2_MEAN = 1.76075794284972
NU1_SECOND_MOMENT = 4.2786007798776
TV_NU1_NU2 = 0.14678838069496


@pytest.fixture(scope="module")
def nus(feller_solution):
    return D.qed_measure(feller_solution), D.qsd_measure(feller_solution)


def test_frozen_moments(nus):
    nu1, nu2 = nus
    assert nu1.mean() == pytest.approx(NU1_MEAN, rel=1e-5)
    assert nu2.mean() == pytest.approx(NU2_MEAN, rel=1e-5)
    assert D.moment(nu1, 2) == pytest.approx(NU1_SECOND_MOMENT, rel=1e-5)
    assert D.tv_distance(nu1, nu2) == pytest.approx(TV_NU1_NU2, abs=1e-5)


def test_masses_sum_to_one(nus, feller_solution):
    for m in nus:
        assert abs(m.weights.sum() - 1.0) <= 1e-12
    assert D.qed_raw_total(feller_solution) == pytest.approx(1.0, abs=1e-10)


def test_qed_is_stationary_for_the_conditioned_chain(feller_solution):
    assert D.doob_stationarity_residual(feller_solution) < 1e-12


def test_qsd_is_not_stationary_for_the_conditioned_chain(feller_solution, nus):
    assert D.doob_stationarity_residual(feller_solution, nus[1]) > 1e-3


def test_pushforward(nus):
    y = D.pushforward_to_Y(nus[0], 2.0)
    assert y.coordinate == "Y"
    assert np.array_equal(y.nodes, 2.0 * nus[0].nodes ** 2 / 4.0)
    assert np.array_equal(y.weights, nus[0].weights)
    with pytest.raises(MeasureMismatch):
        D.pushforward_to_Y(y, 1.0)
    with pytest.raises(MeasureMismatch):
        D.tv_distance(y, nus[0])


def test_stable_under_cuts_and_refinement(feller_model, feller_right_cut, nus):
    from quasiergodic.spectral import solve_model
    fine = solve_model(feller_model, 3999, 8, 1e-5, 1.2 * feller_right_cut)
    moved = D.transfer(D.qed_measure(fine), nus[0].nodes, nus[0].faces)
    assert D.tv_distance(moved, nus[0]) < 1e-3
    assert D.qed_measure(fine).mean() == pytest.approx(NU1_MEAN, rel=1e-5)


weights = st.lists(st.floats(0.0, 1.0), min_size=4, max_size=30).filter(lambda w: sum(w) > 1e-3)


def _measure(w):
    w = np.asarray(w)
    nodes = np.arange(1, w.size + 1, dtype=float)
    faces = np.arange(w.size + 1, dtype=float) + 0.5
    return D.DiscreteMeasure.from_masses(nodes, w, "X", faces)


@given(weights, weights)
def test_tv_axioms(a, b):
    n = min(len(a), len(b))
    if sum(a[:n]) < 1e-3 or sum(b[:n]) < 1e-3:
        return
    p, q = _measure(a[:n]), _measure(b[:n])
    d = D.tv_distance(p, q)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(D.tv_distance(q, p))
    assert D.tv_distance(p, p) == 0.0


@given(weights, weights, st.integers(1, 6))
def test_coarsening_contracts_tv(a, b, nbins):
    n = min(len(a), len(b))
    if sum(a[:n]) < 1e-3 or sum(b[:n]) < 1e-3:
        return
    p, q = _measure(a[:n]), _measure(b[:n])
    assert D.coarse_tv(p, q, p, nbins) <= D.tv_distance(p, q) + 1e-12


@given(weights, st.lists(st.floats(0.1, 3.0), min_size=2, max_size=20))
@settings(max_examples=60)
def test_rebin_preserves_mass(w, gaps):
    src = np.arange(len(w) + 1, dtype=float)
    dst = np.concatenate(([0.3], 0.3 + np.cumsum(gaps)))
    out = D.rebin(w, src, dst)
    assert out.sum() == pytest.approx(sum(w), rel=1e-12, abs=1e-12)
    assert np.all(out >= 0)


def test_rebin_identity():
    w = np.array([0.1, 0.4, 0.5])
    f = np.array([0.0, 1.0, 3.0, 4.0])
    assert np.allclose(D.rebin(w, f, f), w)


def test_equal_mass_blocks(nus):
    b = D.equal_mass_blocks(nus[0], 10)
    mass = np.add.reduceat(nus[0].weights, b[:-1])
    assert b[0] == 0 and b[-1] == nus[0].nodes.size
    assert np.all(np.abs(mass - 0.1) < 0.01)


def test_measure_validation():
    with pytest.raises(UsageError):
        D.DiscreteMeasure(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    with pytest.raises(UsageError):
        D.DiscreteMeasure(np.array([1.0, 2.0]), np.array([1.5, -0.5]))
    with pytest.raises(UsageError):
        D.DiscreteMeasure(np.array([1.0]), np.array([1.0]), "Z")
    with pytest.raises(UsageError):
        D.moment(D.DiscreteMeasure.point_mass(1.0), 0)


def test_point_mass():
    m = D.DiscreteMeasure.point_mass(2.5)
    assert m.mean() == 2.5 and m.weights.tolist() == [1.0]


def test_csv(nus, tmp_path):
    nus[0].to_csv(tmp_path / "nu1.csv")
    lines = (tmp_path / "nu1.csv").read_text().splitlines()
    assert lines[0] == "node,weight,coordinate"
    data = np.array([[float(v) for v in ln.split(",")[:2]] for ln in lines[1:]])
    assert abs(data[:, 1].sum() - 1.0) <= 1e-12
