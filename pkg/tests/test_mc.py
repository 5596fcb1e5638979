import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiergodic import _kernels as K
from quasiergodic import mc
from quasiergodic.distributions import DiscreteMeasure
from quasiergodic.errors import ExtinctEnsemble, InsufficientDecayData, UsageError
from quasiergodic.models import DriftModel, constant_drift, power_drift
from quasiergodic.spectral import uniform_grid

U64 = 2 ** 64


def _numpy_philox(counter, key):
    # numpy bumps the counter before each block, so start one below
    c = np.array(counter, dtype=object)
    v = (int(c[0]) + (int(c[1]) << 64) + (int(c[2]) << 128) + (int(c[3]) << 192) - 1) % (U64 ** 4)
    words = np.array([(v >> (64 * i)) & (U64 - 1) for i in range(4)], dtype=np.uint64)
    g = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=words)
    return [int(w) for w in g.random_raw(4)]


u64 = st.integers(0, U64 - 1)


@given(st.tuples(u64, u64, u64, u64), st.tuples(u64, u64))
@settings(max_examples=60, deadline=None)
def test_philox_matches_numpy(counter, key):
    ours = K.philox4x64(*(np.uint64(c) for c in counter), np.uint64(key[0]), np.uint64(key[1]))
    assert [int(w) for w in ours] == _numpy_philox(counter, key)


def test_streams_are_reproducible_and_distinct():
    a = mc.philox_uniforms(7, 0, 3, 1, 100)
    assert np.array_equal(a, mc.philox_uniforms(7, 0, 3, 1, 100))
    assert not np.array_equal(a, mc.philox_uniforms(7, 1, 3, 1, 100))
    assert not np.array_equal(a, mc.philox_uniforms(7, 0, 4, 1, 100))
    assert np.all((a > 0) & (a <= 1))


def test_normal_stream_moments():
    z = mc.philox_normals(11, 0, 0, 400_000)
    assert abs(z.mean()) < 5 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * math.sqrt(2 / z.size)
    assert abs(np.mean(z ** 4) - 3) < 0.05


@pytest.fixture(scope="module")
def bm_grid():
    return uniform_grid(0.0, 30.0, 300)


def test_brownian_survival_matches_erf(brownian, bm_grid):
    c = mc.SimConfig(dt=1e-3, n_paths=20_000, seed=5, report_times=(0.5, 1.0, 2.0))
    s = mc.simulate_killed(brownian, 1.0, c, bm_grid)
    for t in c.report_times:
        p = math.erf(1 / math.sqrt(2 * t))
        se = math.sqrt(p * (1 - p) / c.n_paths)
        assert abs(s.survival_fraction(t) - p) < 4 * se


def test_bridge_only_removes_paths(brownian, bm_grid):
    base = mc.SimConfig(dt=1e-2, n_paths=4000, seed=1, report_times=(1.0,))
    on = mc.simulate_killed(brownian, 1.0, base, bm_grid)
    off = mc.simulate_killed(brownian, 1.0, mc.SimConfig(**{**base.__dict__, "bridge_correction": False}), bm_grid)
    assert np.all(on.absorption_times <= off.absorption_times)
    assert on.survivors(1.0) < off.survivors(1.0)


def test_deterministic_across_workers(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=3000, seed=9, report_times=(1.0, 2.0, 3.0))
    a = mc.simulate_killed(feller_model, 1.0, c, feller_solution.grid, horizons=(3.0,), workers=1)
    b = mc.simulate_killed(feller_model, 1.0, c, feller_solution.grid, horizons=(3.0,), workers=3)
    assert np.array_equal(a.absorption_times, b.absorption_times)
    assert np.array_equal(a.states, b.states, equal_nan=True)
    assert np.array_equal(a.occupation, b.occupation)


def test_seed_and_tag_change_the_ensemble(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=500, seed=9, report_times=(1.0,))
    a = mc.simulate_killed(feller_model, 1.0, c, feller_solution.grid, tag=0)
    b = mc.simulate_killed(feller_model, 1.0, c, feller_solution.grid, tag=1)
    assert not np.array_equal(a.absorption_times, b.absorption_times)


def test_conditioned_estimates_are_measures(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=4000, seed=2)
    est = mc.conditional_marginal(feller_model, 1.0, 0.5, 4.0, c, feller_solution.grid)
    assert 0 < est.n_survivors <= est.n_paths
    assert est.std_error >= 0
    assert abs(est.histogram.weights.sum() - 1) <= 1e-12
    assert est.value == pytest.approx(np.sum(est.histogram.nodes * est.histogram.weights), rel=0.05)
    occ = mc.time_average_occupation(feller_model, 1.0, 3.0, c, feller_solution.grid)
    assert abs(occ.histogram.weights.sum() - 1) <= 1e-12
    dl = mc.double_limit_marginal(feller_model, 1.0, 1.0, 3.0, c, feller_solution.grid)
    assert dl.n_survivors == occ.n_survivors


def test_occupation_counts_time_alive(brownian, bm_grid):
    # with no paths killed in [0, t] the occupation sums to t per survivor
    c = mc.SimConfig(n_paths=200, seed=4, t_horizon=0.05)
    s = mc.simulate_killed(brownian, 10.0, c, bm_grid, horizons=(0.05,))
    k = 0
    assert s.occupation[:, k, :].sum() == pytest.approx(0.05 * s.occupation_survivors[:, k].sum(), rel=1e-12)


def test_measure_initial_law(feller_model, feller_solution):
    from quasiergodic.distributions import qsd_measure
    nu2 = qsd_measure(feller_solution)
    c = mc.SimConfig(n_paths=2000, seed=3, report_times=(1e-9,))
    s = mc.simulate_killed(feller_model, nu2, c, feller_solution.grid)
    x = s.states[:, 0]
    assert abs(np.nanmean(x) - nu2.mean()) < 0.1


def test_low_survivors_flag(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=100, seed=0)
    est = mc.conditional_marginal(feller_model, 1.0, 1.0, 6.0, c, feller_solution.grid)
    assert "low-survivors" in est.warnings


def test_extinct_ensemble(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=100, seed=0, t_horizon=60.0, report_times=(60.0,))
    with pytest.raises(ExtinctEnsemble) as info:
        mc.simulate_killed(feller_model, 0.2, c, feller_solution.grid)
    assert info.value.stats["n_paths"] == 100


def test_decay_fit_feller(feller_model, feller_solution):
    c = mc.SimConfig(n_paths=20_000, seed=8, t_horizon=12.0, report_times=tuple(np.linspace(3, 12, 10)))
    fit = mc.lambda1_estimate(feller_model, 1.0, c, feller_solution.grid)
    assert abs(fit.rate - feller_solution.lambda1) < 4 * fit.std_error + 0.005
    assert 0.9 <= fit.plateau_ratio <= 1.1
    assert not fit.non_exponential


def test_decay_fit_brownian_not_exponential(brownian, bm_grid):
    c = mc.SimConfig(n_paths=20_000, seed=8, t_horizon=16.0, report_times=(0.5, 1, 2, 4, 8, 16))
    fit = mc.lambda1_estimate(brownian, 1.0, c, bm_grid)
    assert fit.non_exponential


def test_decay_fit_needs_times(feller_model, feller_solution):
    with pytest.raises(InsufficientDecayData):
        mc.lambda1_estimate(feller_model, 1.0, mc.SimConfig(n_paths=100, report_times=(1.0, 2.0)),
                            feller_solution.grid)


def test_hitting_feller(feller_model):
    r = mc.scale_hitting_test(feller_model, 0.5, 1.0, 2.0, 20_000, seed=3)
    assert r.undecided == 0 and abs(r.z_score) < 4


def test_hitting_brownian_start_on_barrier(brownian):
    r = mc.scale_hitting_test(brownian, 1.0, 1.0, 3.0, 100, seed=0)
    assert r.p_hat == 1.0 and r.analytic == 1.0


@pytest.mark.parametrize("kw", [{"dt": 0}, {"n_paths": 10}, {"seed": -1}, {"absorb_threshold": -1},
                                {"substep_threshold": 0.0}, {"report_times": (20.0,)}])
def test_sim_config_validation(kw):
    with pytest.raises(UsageError):
        mc.SimConfig(**kw)


def test_needs_laurent_drift(feller_solution):
    d = DriftModel(lambda x: 0.5 / x, None, "opaque")
    with pytest.raises(UsageError):
        mc.simulate_killed(d, 1.0, mc.SimConfig(n_paths=100), feller_solution.grid)


def test_bad_init(feller_model, feller_solution):
    with pytest.raises(UsageError):
        mc.simulate_killed(feller_model, -1.0, mc.SimConfig(n_paths=100), feller_solution.grid)
    with pytest.raises(UsageError):
        mc.simulate_killed(feller_model, DiscreteMeasure.point_mass(1.0, "Y"), mc.SimConfig(n_paths=100),
                           feller_solution.grid)


def test_q_range(feller_model):
    with pytest.raises(UsageError):
        mc.conditional_marginal(feller_model, 1.0, 1.5, 2.0, mc.SimConfig(n_paths=100))


def test_survival_csv(feller_model, feller_solution, tmp_path):
    c = mc.SimConfig(n_paths=500, seed=1, report_times=(1.0, 2.0))
    s = mc.simulate_killed(feller_model, 1.0, c, feller_solution.grid)
    s.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "time,survivors,survival_fraction" and len(lines) == 3
    assert s.metadata()["rng"] == "philox4x64-10"


def test_drift_expansion_in_kernel():
    d = power_drift(0.5, -0.5, 0.125)
    powers, coefs = mc._laurent_arrays(d)
    for x in (0.1, 1.0, 3.3):
        assert K._alpha(powers, coefs, x) == pytest.approx(d(x), rel=1e-14)
