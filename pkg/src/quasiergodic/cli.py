"""Command-line front end.

Exit codes: 0 success, 1 computation failure, 2 usage or configuration
error, 3 the property under test does not hold.
"""
import argparse
import json
import os
import sys

from . import distributions as dist
from .boundary import check_hypothesis_H
from .config import DEFAULT_CONFIG, leaf_paths, load_config
from .errors import QuasiErgodicError, UsageError
from .iu import iu_criterion
from .spectral import (auto_right_cut, count_sign_changes, cut_sensitivity, orthonormality_residual,
                       solve_model)
from .verification import run_verification

__all__ = ["main", "build_parser", "cmd_classify", "cmd_spectrum", "cmd_distributions", "cmd_iu", "cmd_verify"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PROPERTY = 0, 1, 2, 3

# shortcut flag -> config path
_SHORTCUTS = {
    "gamma": "model.params.gamma",
    "r": "model.params.r",
    "c": "model.params.c",
    "seed": "sim.seed",
    "out": "outputs",
    "q": "iu.q",
    "k": "grid.k",
    "workers": "sim.workers",
}


def _write_json(cfg, name, doc):
    os.makedirs(cfg.outputs, exist_ok=True)
    path = os.path.join(cfg.outputs, name)
    with open(path, "w") as fh:
        json.dump({"metadata": cfg.metadata(), **doc}, fh, indent=2, sort_keys=True)
    return path


def _write_csv(cfg, name, writer, extra=None):
    os.makedirs(cfg.outputs, exist_ok=True)
    path = os.path.join(cfg.outputs, name)
    writer(path)
    with open(path + ".meta.json", "w") as fh:
        json.dump({"metadata": cfg.metadata(), **(extra or {})}, fh, indent=2, sort_keys=True)
    return path


def _spectrum(cfg, k=None):
    d = cfg.model.build()
    g = cfg.grid
    right = g["right_cut"] if g["right_cut"] is not None else auto_right_cut(d, cfg.quadrature)
    sol = solve_model(d, g["n"], g["k"] if k is None else k, g["left_cut"], right, cfg.quadrature)
    return d, sol


def cmd_classify(cfg):
    d = cfg.model.build()
    rep = check_hypothesis_H(d, cfg.quadrature)
    _write_json(cfg, "boundary_report.json", rep.to_dict())
    print(f"zero: {rep.zero_class}  infinity: {rep.infinity_class}  H: {rep.holds}")
    return EXIT_OK if rep.holds else EXIT_PROPERTY


def cmd_spectrum(cfg, k=None):
    d, sol = _spectrum(cfg, k)
    n_check = min(sol.k, 6)
    signs = [count_sign_changes(sol, n) for n in range(1, n_check + 1)]
    signs_ok = all(c == n - 1 for n, c in zip(range(1, n_check + 1), signs))
    g = cfg.grid
    cuts = cut_sensitivity(d, g["n"], min(sol.k, 8), g["left_cut"], sol.grid.right_cut, cfg.quadrature)
    doc = {
        **sol.header(),
        "diagnostics": {
            "orthonormality_residual": orthonormality_residual(sol),
            "sign_changes": signs,
            "sign_changes_ok": signs_ok,
            "cut_sensitivity": cuts,
        },
    }
    _write_json(cfg, "spectrum.json", doc)
    _write_csv(cfg, "eigenfunctions.csv", sol.to_csv, {"grid": sol.grid.metadata()})
    print(f"lambda_1 = {sol.lambda1:.10g}  gap = {sol.gap:.10g}  k = {sol.k}")
    return EXIT_OK if signs_ok else EXIT_FAIL


def cmd_distributions(cfg):
    _, sol = _spectrum(cfg, min(cfg.grid["k"], 8))
    nu1, nu2 = dist.qed_measure(sol), dist.qsd_measure(sol)
    _write_csv(cfg, "nu1.csv", nu1.to_csv)
    _write_csv(cfg, "nu2.csv", nu2.to_csv)
    doc = {"nu1_mean": nu1.mean(), "nu2_mean": nu2.mean(), "tv_nu1_nu2": dist.tv_distance(nu1, nu2)}
    if cfg.model.name == "feller":
        gamma = cfg.model.resolved_params()["gamma"]
        y = dist.pushforward_to_Y(nu1, gamma)
        _write_csv(cfg, "nu1_Y.csv", y.to_csv, {"gamma": gamma})
        doc["nu1_Y_mean"] = y.mean()
    _write_json(cfg, "distributions.json", doc)
    print(f"mean nu1 = {doc['nu1_mean']:.8g}  mean nu2 = {doc['nu2_mean']:.8g}  TV = {doc['tv_nu1_nu2']:.6g}")
    return EXIT_OK


def cmd_iu(cfg, q=None):
    q = cfg.q if q is None else float(q)
    rep = iu_criterion(cfg.model.build(), q, cfg.quadrature)
    _write_json(cfg, "iu_report.json", rep.to_dict())
    print(f"q = {q:g}  near zero: {rep.sup_near_zero.kind}  at infinity: {rep.sup_at_infinity.kind}  "
          f"ultracontractive: {rep.ultracontractive}")
    return EXIT_OK if rep.ultracontractive else EXIT_PROPERTY


def cmd_verify(cfg):
    rep = run_verification(cfg, out_dir=cfg.outputs)
    for r in rep["rows"]:
        v = "n/a" if r["value"] is None else f"{r['value']:.4g}"
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['name']}  {v}")
    return EXIT_OK if rep["status"] == "pass" else EXIT_FAIL


_COMMANDS = {
    "classify": cmd_classify,
    "spectrum": cmd_spectrum,
    "distributions": cmd_distributions,
    "iu": cmd_iu,
    "verify": cmd_verify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--model", help="registry model: feller, power-drift or constant-drift")
    for flag, path in _SHORTCUTS.items():
        common.add_argument(f"--{flag}", dest=f"short_{flag}", metavar="VALUE", help=f"alias of --{path}")
    dotted = common.add_argument_group("configuration keys")
    for path in leaf_paths(DEFAULT_CONFIG):
        dotted.add_argument(f"--{path}", dest=f"set:{path}", metavar="VALUE")
    dotted.add_argument("--model.params.a", dest="set:model.params.a", metavar="VALUE")
    dotted.add_argument("--model.params.b", dest="set:model.params.b", metavar="VALUE")
    dotted.add_argument("--model.params.d", dest="set:model.params.d", metavar="VALUE")
    dotted.add_argument("--model.params.value", dest="set:model.params.value", metavar="VALUE")

    p = argparse.ArgumentParser(prog="quasiergodic", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(ns):
    overrides = []
    if ns.model is not None:
        overrides.append(("model.name", ns.model))
    for key, val in vars(ns).items():
        if val is None:
            continue
        if key.startswith("set:"):
            overrides.append((key[4:], val))
        elif key.startswith("short_"):
            overrides.append((_SHORTCUTS[key[6:]], val))
    return load_config(ns.config, overrides)


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code not in (None, 0) else 0
    try:
        cfg = config_from_args(ns)
        return _COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuasiErgodicError as exc:
        print(f"computation failed ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
