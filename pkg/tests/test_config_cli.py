import json

import pytest

from quasiergodic import __version__
from quasiergodic.cli import main
from quasiergodic.config import DEFAULT_CONFIG, config_hash, leaf_paths, load_config
from quasiergodic.errors import UsageError


def test_defaults():
    cfg = load_config()
    assert cfg.model.name == "feller" and cfg.grid["n"] == 2000 and cfg.grid["k"] == 64
    assert cfg.sim.n_paths == 200_000 and cfg.sim.dt == 1e-3 and cfg.grid["right_cut"] is None


def test_every_leaf_is_overridable():
    for path in leaf_paths(DEFAULT_CONFIG):
        assert path.count(".") <= 2


def test_overrides_are_typed():
    cfg = load_config(None, [("sim.n_paths", "1000"), ("sim.bridge_correction", "false"),
                             ("grid.right_cut", "5.5"), ("model.params.gamma", "2")])
    assert cfg.sim.n_paths == 1000 and cfg.sim.bridge_correction is False
    assert cfg.grid["right_cut"] == 5.5 and cfg.model.resolved_params()["gamma"] == 2.0


def test_model_switch_drops_old_params():
    cfg = load_config(None, [("model.name", "constant-drift")])
    assert cfg.model.resolved_params() == {"value": 0.0}
    cfg = load_config({"model": {"name": "power-drift"}})
    assert cfg.model.resolved_params() == {"a": 0.0, "b": 0.0, "d": 0.0}


def test_hash_ignores_outputs_and_workers():
    a = load_config(None, [("outputs", "x"), ("sim.workers", "1")])
    b = load_config(None, [("outputs", "y"), ("sim.workers", "4")])
    c = load_config(None, [("sim.seed", "1")])
    assert config_hash(a) == config_hash(b) != config_hash(c)
    assert a.metadata()["version"] == __version__


@pytest.mark.parametrize("bad", [{"nope": 1}, {"sim": {"dt": -1}}, {"model": {"name": "x"}},
                                 {"model": {"params": {"gamma": 0}}}, {"sim": {"x0": 0}}])
def test_invalid_configs(bad):
    with pytest.raises(UsageError):
        load_config(bad)


def test_malformed_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(UsageError):
        load_config(str(p))
    assert main(["classify", "--config", str(p)]) == 2


def _read(path):
    return json.loads(path.read_text())


def test_classify_exit_codes(tmp_path):
    assert main(["classify", "--out", str(tmp_path)]) == 0
    doc = _read(tmp_path / "boundary_report.json")
    assert doc["zero_class"] == "exit" and doc["infinity_class"] == "entrance"
    assert set(doc["metadata"]) == {"config_hash", "seed", "version", "rng"}
    assert main(["classify", "--model", "constant-drift", "--out", str(tmp_path)]) == 3


def test_spectrum(tmp_path):
    assert main(["spectrum", "--k", "8", "--out", str(tmp_path)]) == 0
    doc = _read(tmp_path / "spectrum.json")
    ev = doc["eigenvalues"]
    assert len(ev) == 8 and all(0 < a < b for a, b in zip(ev, ev[1:]))
    assert doc["diagnostics"]["orthonormality_residual"] < 1e-8
    assert (tmp_path / "eigenfunctions.csv.meta.json").exists()
    assert main(["spectrum", "--k", "600", "--out", str(tmp_path)]) == 2


def test_distributions(tmp_path):
    import numpy as np
    assert main(["distributions", "--out", str(tmp_path)]) == 0
    tables = {}
    for name in ("nu1", "nu2", "nu1_Y"):
        data = np.genfromtxt(tmp_path / f"{name}.csv", delimiter=",", skip_header=1, usecols=(0, 1))
        assert abs(data[:, 1].sum() - 1) <= 1e-12
        tables[name] = data
    assert np.allclose(tables["nu1_Y"][:, 0], tables["nu1"][:, 0] ** 2 / 4, rtol=1e-15)
    assert _read(tmp_path / "distributions.json")["tv_nu1_nu2"] > 0


def test_iu_exit_codes(tmp_path):
    assert main(["iu", "--q", "2", "--out", str(tmp_path)]) == 2
    assert main(["iu", "--model", "constant-drift", "--out", str(tmp_path)]) == 3
    assert _read(tmp_path / "iu_report.json")["sup_at_infinity"]["reason"] == "infinite-tail"


def test_verify_under_budget(tmp_path):
    code = main(["verify", "--sim.n_paths", "100", "--out", str(tmp_path)])
    assert code == 1
    rep = _read(tmp_path / "verify_report.json")
    flagged = [r for r in rep["rows"] if "low-survivors" in r.get("flags", []) or r.get("error") == "extinct"]
    assert flagged and rep["status"] == "fail"
    q1 = next(r for r in rep["rows"] if r["name"] == "conditional_marginal_q1")
    assert q1["target"] == "nu2"


def test_unknown_flag_is_usage_error():
    assert main(["classify", "--bogus", "1"]) == 2
