"""Monte Carlo versus spectral comparison suite behind ``quasiergodic verify``.

Two ensembles are simulated on the spectral grid of the model:

* E1 starts from the point ``sim.x0``. It feeds the conditioned marginals,
  the double limit, the survival-decay fit and the occupation measures.
* E2 starts from the quasi-stationary law nu_2 under a different generator
  tag. It is used only to check that occupation measures forget the start.

Every comparison becomes one report row ``{name, value, tolerance, pass}``.
Rows under ``diagnostics`` are informative and do not enter the exit status.
Times are set in units of the spectral gap ``lambda_2 - lambda_1`` so that
the transient term ``exp(-gap t)`` is equally small for any model.
"""
from dataclasses import dataclass, replace
import json
import math
import os

import numpy as np

from . import distributions as dist
from .errors import ExtinctEnsemble, InsufficientDecayData
from .mc import LOW_SURVIVORS, double_limit_marginal, conditional_marginal, lambda1_estimate, simulate_killed
from .spectral import auto_right_cut, solve_model

__all__ = ["TOL_TV", "TOL_RATE", "PLATEAU_BAND", "VerifyTimes", "verification_times", "run_verification"]

TOL_TV = 0.05
TOL_RATE = 0.05
PLATEAU_BAND = (0.9, 1.1)
TV_BINS = 10
Q_VALUES = (0.3, 0.5, 0.7, 1.0)
TAG_POINT = 1
TAG_QSD = 2


@dataclass(frozen=True)
class VerifyTimes:
    t_cond: float        # conditioning time of the q-marginals
    t_double: float      # state time of the double limit
    T_double: tuple      # its two conditioning times
    decay: tuple         # report times of the survival fit
    occupation: float    # literal occupation horizon, 20 / lambda_1
    occupation_diag: tuple

    def report_times(self):
        ts = {q * self.t_cond for q in Q_VALUES} | {self.t_double, *self.T_double} | set(self.decay)
        return tuple(sorted(ts))

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def verification_times(lambda1, gap):
    t_d = 5.0 / gap
    return VerifyTimes(
        t_cond=15.0 / gap,
        t_double=t_d,
        T_double=(3.0 * t_d, 4.5 * t_d),
        decay=tuple(float(v) for v in np.linspace(5.0 / gap, 22.0 / gap, 12)),
        occupation=20.0 / lambda1,
        occupation_diag=(10.0 / gap, 20.0 / gap),
    )


def _row(name, value, tolerance, passed, **extra):
    return {"name": name, "value": value, "tolerance": tolerance, "pass": bool(passed), **extra}


def _z(est, target):
    if est.std_error and math.isfinite(est.std_error) and est.std_error > 0:
        return (est.value - target) / est.std_error
    return None


class _Outputs:
    """Writes files under one directory, each CSV with a ``.meta.json`` sidecar."""

    def __init__(self, root, meta):
        self.root = root
        self.meta = meta
        self.files = []
        if root is not None:
            os.makedirs(root, exist_ok=True)

    def csv(self, name, writer, extra=None):
        if self.root is None:
            return
        path = os.path.join(self.root, name)
        writer(path)
        with open(path + ".meta.json", "w") as fh:
            json.dump({"metadata": self.meta, **(extra or {})}, fh, indent=2, sort_keys=True)
        self.files.append(name)

    def json(self, name, doc):
        if self.root is None:
            return
        with open(os.path.join(self.root, name), "w") as fh:
            json.dump({"metadata": self.meta, **doc}, fh, indent=2, sort_keys=True)
        self.files.append(name)


def run_verification(cfg, out_dir=None, workers=None):
    """Run the suite for ``cfg`` and return the report dictionary.

    The report (also written to ``verify_report.json`` when ``out_dir`` is
    given) has ``rows``, ``diagnostics``, ``times`` and ``status``; the status
    is ``"pass"`` only when every row passes.
    """
    d = cfg.model.build()
    s = cfg.quadrature
    g = cfg.grid
    workers = cfg.workers if workers is None else int(workers)
    meta = cfg.metadata()
    out = _Outputs(out_dir, meta)

    right = g["right_cut"] if g["right_cut"] is not None else auto_right_cut(d, s)
    sol = solve_model(d, g["n"], min(g["k"], 8), g["left_cut"], right, s)
    nu1, nu2 = dist.qed_measure(sol), dist.qsd_measure(sol)
    bounds = dist.equal_mass_blocks(nu1, TV_BINS)

    def tv(a, b):
        return dist.tv_distance(dist.coarsen(a, bounds), dist.coarsen(b, bounds))

    times = verification_times(sol.lambda1, sol.gap)
    horizons = (times.occupation,) + times.occupation_diag
    c = replace(cfg.sim.with_times(*times.report_times()), t_horizon=max(horizons))
    rows, diag = [], []

    tv12 = tv(nu1, nu2)
    rows.append(_row("tv_nu1_nu2_separation", tv12, TOL_TV, tv12 > TOL_TV, relation=">"))

    try:
        e1 = simulate_killed(d, cfg.x0, c, sol.grid, horizons=horizons, workers=workers, tag=TAG_POINT)
    except ExtinctEnsemble as exc:
        rows.append(_row("ensemble_point_init", None, None, False, error="extinct", stats=exc.stats))
        e1 = None
    try:
        e2 = simulate_killed(d, nu2, cfg.sim.with_times(*times.occupation_diag, times.occupation), sol.grid,
                             horizons=horizons, workers=workers, tag=TAG_QSD)
    except ExtinctEnsemble as exc:
        rows.append(_row("ensemble_qsd_init", None, None, False, error="extinct", stats=exc.stats))
        e2 = None

    hists = {}

    def estimate(name, fn, target, target_name, bucket=rows):
        try:
            est = fn()
        except ExtinctEnsemble as exc:
            bucket.append(_row(name, None, TOL_TV, False, error="extinct", stats=exc.stats))
            return None
        val = tv(est.histogram, target)
        low = "low-survivors" in est.warnings
        bucket.append(_row(name, val, TOL_TV, val < TOL_TV and not low, target=target_name,
                           n_survivors=est.n_survivors, mean=est.value, std_error=est.std_error,
                           z_mean=_z(est, target.mean()), flags=list(est.warnings)))
        hists[name] = est.histogram
        return est

    if e1 is not None:
        marg = {}
        for q in Q_VALUES:
            target, tname = (nu2, "nu2") if q == 1.0 else (nu1, "nu1")
            marg[q] = estimate(f"conditional_marginal_q{q:g}", lambda q=q: conditional_marginal(
                d, None, q, times.t_cond, c, summary=e1), target, tname)
        if marg[0.3] is not None and marg[0.7] is not None:
            v = tv(marg[0.3].histogram, marg[0.7].histogram)
            low = bool(set(marg[0.3].warnings) | set(marg[0.7].warnings))
            rows.append(_row("q_independence_q0.3_q0.7", v, TOL_TV, v < TOL_TV and not low))
        else:
            rows.append(_row("q_independence_q0.3_q0.7", None, TOL_TV, False, error="missing histogram"))

        dl = [estimate(f"double_limit_T{k}", lambda T=T: double_limit_marginal(
            d, None, times.t_double, T, c, summary=e1), nu1, "nu1")
            for k, T in zip(("3t", "4.5t"), times.T_double)]
        if all(e is not None for e in dl):
            v = tv(dl[0].histogram, dl[1].histogram)
            low = bool(set(dl[0].warnings) | set(dl[1].warnings))
            rows.append(_row("double_limit_stability_3t_4.5t", v, TOL_TV, v < TOL_TV and not low))
        else:
            rows.append(_row("double_limit_stability_3t_4.5t", None, TOL_TV, False, error="missing histogram"))

        try:
            fit = lambda1_estimate(d, None, c, summary=e1, t_min=times.decay[0], t_max=times.decay[-1])
            rel = abs(fit.rate - sol.lambda1) / sol.lambda1
            low = e1.survivors(times.decay[-1]) < LOW_SURVIVORS
            rows.append(_row("lambda1_rate", rel, TOL_RATE, rel < TOL_RATE and not low, estimate=fit.rate,
                             std_error=fit.std_error, spectral=sol.lambda1,
                             z=(fit.rate - sol.lambda1) / fit.std_error if fit.std_error > 0 else None,
                             flags=["low-survivors"] if low else []))
            lo, hi = PLATEAU_BAND
            rows.append(_row("lambda1_plateau_ratio", fit.plateau_ratio, list(PLATEAU_BAND),
                             lo <= fit.plateau_ratio <= hi))
            diag.append({"name": "decay_fit", **fit.to_dict()})
        except InsufficientDecayData as exc:
            rows.append(_row("lambda1_rate", None, TOL_RATE, False, error=str(exc)))
            rows.append(_row("lambda1_plateau_ratio", None, list(PLATEAU_BAND), False, error=str(exc)))

        occ1 = estimate("occupation_point_init", lambda: e1.occupation_measure(times.occupation), nu1, "nu1")
        for h in times.occupation_diag:
            estimate(f"occupation_point_init_t{h:.4g}", lambda h=h: e1.occupation_measure(h), nu1, "nu1", diag)
        out.csv("survival_point_init.csv", e1.to_csv, e1.metadata())
    else:
        occ1 = None

    if e2 is not None:
        occ2 = estimate("occupation_qsd_init", lambda: e2.occupation_measure(times.occupation), nu1, "nu1")
        for h in times.occupation_diag:
            estimate(f"occupation_qsd_init_t{h:.4g}", lambda h=h: e2.occupation_measure(h), nu1, "nu1", diag)
            a, b = hists.get(f"occupation_point_init_t{h:.4g}"), hists.get(f"occupation_qsd_init_t{h:.4g}")
            if a is not None and b is not None:
                v = tv(a, b)
                diag.append(_row(f"occupation_init_independence_t{h:.4g}", v, TOL_TV, v < TOL_TV))
        out.csv("survival_qsd_init.csv", e2.to_csv, e2.metadata())
    else:
        occ2 = None
    if occ1 is not None and occ2 is not None:
        v = tv(occ1.histogram, occ2.histogram)
        rows.append(_row("occupation_init_independence", v, TOL_TV, v < TOL_TV))
    else:
        rows.append(_row("occupation_init_independence", None, TOL_TV, False, error="missing histogram"))

    for name, h in hists.items():
        out.csv(f"hist_{name}.csv", h.to_csv)
    out.csv("nu1.csv", nu1.to_csv)
    out.csv("nu2.csv", nu2.to_csv)

    report = {
        "status": "pass" if all(r["pass"] for r in rows) else "fail",
        "rows": rows,
        "diagnostics": diag,
        "times": times.to_dict(),
        "spectral": {"lambda1": sol.lambda1, "lambda2": float(sol.eigenvalues[1]), "gap": sol.gap},
        "tv_bins": TV_BINS,
        "sim": c.to_dict(),
    }
    out.json("verify_report.json", report)
    report["files"] = list(out.files)
    return report
