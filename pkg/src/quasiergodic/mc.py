"""Monte Carlo for the killed diffusion dX = dB - alpha(X) dt.

The scheme is Euler-Maruyama with

* a step shrunk to ``dt * (x / substep_threshold)**2`` (floored at
  ``dt / 1024``) close to the killed boundary, where alpha may blow up,
* absorption when the new state is at or below ``absorb_threshold``, or when
  the Brownian-bridge test fires: a step from x to x' crossed the threshold
  with probability ``exp(-2 (x - th)(x' - th) / h)``,
* steps cut exactly at every report time and occupation horizon.

Conditioning on survival is done by rejection. Every estimate carries a
batch-means standard error over 32 fixed batches of paths. Random numbers
come from per-path Philox4x64 streams, so a summary is bit-identical for any
number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np

from . import _kernels
from .coeffs import scale_function
from .distributions import DiscreteMeasure
from .errors import ExtinctEnsemble, InsufficientDecayData, UsageError

__all__ = [
    "SimConfig",
    "EnsembleSummary",
    "ConditionedEstimate",
    "DecayFit",
    "HittingResult",
    "RNG_NAME",
    "simulate_killed",
    "conditional_marginal",
    "double_limit_marginal",
    "time_average_occupation",
    "lambda1_estimate",
    "fit_decay",
    "scale_hitting_test",
    "philox_uniforms",
    "philox_normals",
]

RNG_NAME = _kernels.RNG_NAME
N_BATCHES = 32
LOW_SURVIVORS = 100
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_paths: int = 200_000
    seed: int = 0
    t_horizon: float = 10.0
    absorb_threshold: float = 0.0
    bridge_correction: bool = True
    substep_threshold: float = 0.05
    report_times: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "report_times", tuple(sorted(float(t) for t in self.report_times)))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise UsageError("dt must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise UsageError("n_paths must be an integer >= 100")
        if not 0 <= int(self.seed) <= _U64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.absorb_threshold < 0:
            raise UsageError("absorb_threshold must be non-negative")
        if not self.substep_threshold > self.absorb_threshold:
            raise UsageError("substep_threshold must exceed absorb_threshold")
        if not (self.t_horizon > 0 and math.isfinite(self.t_horizon)):
            raise UsageError("t_horizon must be positive")
        if any(t < 0 or t > self.t_horizon for t in self.report_times):
            raise UsageError("report_times must lie in [0, t_horizon]")

    def with_times(self, *times):
        """Copy with ``times`` added to the report times and the horizon stretched to cover them."""
        rts = tuple(sorted(set(self.report_times) | {float(t) for t in times}))
        return replace(self, report_times=rts, t_horizon=max(self.t_horizon, max(rts)))

    def to_dict(self):
        return {
            "dt": self.dt, "n_paths": int(self.n_paths), "seed": int(self.seed),
            "t_horizon": self.t_horizon, "absorb_threshold": self.absorb_threshold,
            "bridge_correction": bool(self.bridge_correction),
            "substep_threshold": self.substep_threshold, "report_times": list(self.report_times),
        }


def _laurent_arrays(d):
    if d.laurent is None:
        raise UsageError("simulation needs a drift given by Laurent coefficients (see quasiergodic.models)")
    powers = np.array([p for p, _ in d.laurent], dtype=np.int64)
    coefs = np.array([c for _, c in d.laurent], dtype=float)
    return powers, coefs


def _key(seed, tag):
    return np.uint64(int(seed) & _U64), np.uint64(int(tag) & _U64)


def philox_uniforms(seed, tag, path, lane, n):
    """Uniforms on (0, 1] from one path's stream (see the kernel docs for lanes)."""
    k0, k1 = _key(seed, tag)
    return _kernels.uniform_stream(path, lane, n, k0, k1)


def philox_normals(seed, tag, path, n):
    k0, k1 = _key(seed, tag)
    return _kernels.normal_stream(path, n, k0, k1)


def _batches(n, nb=N_BATCHES):
    edges = np.linspace(0, n, nb + 1).round().astype(np.int64)
    return list(zip(edges[:-1], edges[1:]))


@dataclass(frozen=True)
class ConditionedEstimate:
    """Conditioned Monte Carlo estimate.

    ``value`` is the conditioned mean of X, ``std_error`` its batch-means
    standard error; ``histogram`` is the conditioned law on the grid cells.
    """

    value: float
    std_error: float
    n_survivors: int
    n_paths: int
    histogram: DiscreteMeasure = None
    warnings: tuple = ()

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "n_survivors": self.n_survivors,
                "n_paths": self.n_paths, "warnings": list(self.warnings)}


def _batch_se(values, weights):
    """Batch-means standard error of a weighted mean across batches."""
    ok = weights > 0
    if ok.sum() < 2:
        return math.nan
    v, w = values[ok], weights[ok]
    mean = np.sum(v * w) / np.sum(w)
    nb = ok.sum()
    # ratio-estimator variance with batch weights normalised to mean one
    wn = w / w.mean()
    return float(math.sqrt(np.sum((wn * (v - mean)) ** 2) / (nb * (nb - 1))))


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Raw output of :func:`simulate_killed`.

    ``states[i, j]`` is path i at ``report_times[j]`` (NaN once absorbed);
    ``occupation[b, k]`` sums, over paths of batch b alive at
    ``horizons[k]``, the time spent in each grid cell during [0, horizons[k]].
    """

    config: SimConfig
    tag: int
    absorption_times: np.ndarray
    report_times: np.ndarray
    states: np.ndarray
    horizons: np.ndarray
    occupation: np.ndarray
    occupation_survivors: np.ndarray
    nodes: np.ndarray
    faces: np.ndarray
    batch_edges: tuple
    init_label: str = ""
    rng: str = RNG_NAME

    @property
    def n_paths(self):
        return self.absorption_times.size

    def survivors(self, t):
        return int(np.count_nonzero(self.absorption_times > t))

    def survival_fraction(self, t):
        return self.survivors(t) / self.n_paths

    def _batch_ids(self):
        ids = np.empty(self.n_paths, dtype=np.int64)
        for b, (lo, hi) in enumerate(self.batch_edges):
            ids[lo:hi] = b
        return ids

    def _column(self, t):
        j = np.flatnonzero(np.isclose(self.report_times, t, rtol=1e-12, atol=1e-12))
        if j.size == 0:
            raise UsageError(f"time {t:g} is not a report time of this ensemble")
        return int(j[0])

    def _extinct(self, what, t):
        stats = {"n_paths": self.n_paths, "time": float(t),
                 "mean_absorption_time": float(np.mean(np.minimum(self.absorption_times, self.config.t_horizon))),
                 "survivors_at_report_times": {float(r): self.survivors(r) for r in self.report_times}}
        return ExtinctEnsemble(f"{what}: no path survives to t = {t:g}", stats)

    def marginal(self, t_state, t_condition):
        """Law of X at ``t_state`` among paths alive at ``t_condition`` (>= t_state)."""
        if t_condition < t_state:
            raise UsageError("conditioning time must not precede the state time")
        xs = self.states[:, self._column(t_state)]
        alive = self.absorption_times > t_condition
        n_surv = int(alive.sum())
        if n_surv == 0:
            raise self._extinct("marginal", t_condition)
        ids = self._batch_ids()[alive]
        vals = xs[alive]
        cells = np.searchsorted(self.faces, vals, side="right") - 1
        cells = np.clip(cells, 0, self.nodes.size - 1)
        counts = np.bincount(cells, minlength=self.nodes.size).astype(float)
        nb = len(self.batch_edges)
        bsum = np.bincount(ids, weights=vals, minlength=nb)
        bcnt = np.bincount(ids, minlength=nb).astype(float)
        means = np.divide(bsum, bcnt, out=np.zeros(nb), where=bcnt > 0)
        hist = DiscreteMeasure.from_masses(self.nodes, counts, "X", self.faces)
        warn = ("low-survivors",) if n_surv < LOW_SURVIVORS else ()
        return ConditionedEstimate(float(vals.mean()), _batch_se(means, bcnt), n_surv, self.n_paths, hist, warn)

    def occupation_measure(self, horizon):
        """Time-average occupation over [0, horizon] among paths alive at ``horizon``."""
        k = np.flatnonzero(np.isclose(self.horizons, horizon, rtol=1e-12, atol=1e-12))
        if k.size == 0:
            raise UsageError(f"{horizon:g} is not an occupation horizon of this ensemble")
        k = int(k[0])
        surv = self.occupation_survivors[:, k].astype(float)
        n_surv = int(surv.sum())
        if n_surv == 0:
            raise self._extinct("occupation", horizon)
        occ = self.occupation[:, k, :]
        total = occ.sum(axis=0)
        bmass = occ.sum(axis=1)
        bmean = np.divide(occ @ self.nodes, bmass, out=np.zeros(len(bmass)), where=bmass > 0)
        hist = DiscreteMeasure.from_masses(self.nodes, total, "X", self.faces)
        warn = ("low-survivors",) if n_surv < LOW_SURVIVORS else ()
        return ConditionedEstimate(float(hist.mean()), _batch_se(bmean, surv), n_surv, self.n_paths, hist, warn)

    def survival_table(self):
        return [(float(t), self.survivors(t), self.survival_fraction(t)) for t in self.report_times]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["time", "survivors", "survival_fraction"])
            for t, n, f in self.survival_table():
                wr.writerow([repr(t), n, repr(f)])

    def metadata(self):
        return {"rng": self.rng, "seed": int(self.config.seed), "tag": int(self.tag),
                "n_batches": len(self.batch_edges), "init": self.init_label, "config": self.config.to_dict()}


def _default_bins(d):
    from .spectral import auto_right_cut, build_grid
    return build_grid(d, 2000, 1e-4, auto_right_cut(d))


def _init_arrays(init):
    if isinstance(init, DiscreteMeasure):
        if init.coordinate != "X":
            raise UsageError("initial law must be in X coordinates")
        if np.any(init.nodes <= 0):
            raise UsageError("initial law must be supported in (0, inf)")
        return math.nan, init.nodes.astype(float), np.cumsum(init.weights), "measure"
    x0 = float(init)
    if not (x0 > 0 and math.isfinite(x0)):
        raise UsageError("initial point must be positive")
    return x0, np.empty(0), np.empty(0), f"point:{x0!r}"


def simulate_killed(d, init, c, grid=None, horizons=(), workers=1, tag=0):
    """Simulate ``c.n_paths`` killed paths from ``init`` (a point or a DiscreteMeasure).

    Parameters
    ----------
    grid : Grid, optional
        Histogram cells (defaults to the production spectral grid of ``d``).
    horizons : sequence of float
        Times t at which the occupation over [0, t] of the surviving paths is recorded.
    workers : int
        Threads used; the result does not depend on it.
    tag : int
        Second key word of the generator, separating independent ensembles
        that share a seed.

    Raises
    ------
    ExtinctEnsemble
        If every path is absorbed before the first report time.
    """
    powers, coefs = _laurent_arrays(d)
    if grid is None:
        grid = _default_bins(d)
    horizons = np.array(sorted({float(h) for h in horizons}), dtype=float)
    if horizons.size and (horizons[0] <= 0 or horizons[-1] > c.t_horizon):
        raise UsageError("occupation horizons must lie in (0, t_horizon]")
    x0, inodes, icdf, label = _init_arrays(init)
    rts = np.array(c.report_times, dtype=float)
    ev = np.array(sorted(set(rts.tolist()) | set(horizons.tolist()) | {c.t_horizon}), dtype=float)
    ev_report = np.array([int(np.searchsorted(rts, t)) if t in set(rts.tolist()) else -1 for t in ev], dtype=np.int64)
    ev_hz = np.array([int(np.searchsorted(horizons, t)) if t in set(horizons.tolist()) else -1 for t in ev],
                     dtype=np.int64)
    n = int(c.n_paths)
    faces = np.ascontiguousarray(grid.faces, dtype=float)
    ncell = faces.size - 1
    absorb = np.empty(n)
    states = np.full((n, rts.size), np.nan)
    batches = _batches(n)
    occ = np.zeros((len(batches), horizons.size, ncell))
    occ_surv = np.zeros((len(batches), horizons.size), dtype=np.int64)
    k0, k1 = _key(c.seed, tag)
    s0, inv, start = _kernels.bucket_table(faces)

    def work(b):
        lo, hi = batches[b]
        _kernels.run_killed_paths(powers, coefs, k0, k1, lo, hi, x0, inodes, icdf, float(c.dt),
                                  float(c.absorb_threshold), float(c.substep_threshold),
                                  bool(c.bridge_correction), ev, ev_report, ev_hz, faces,
                                  s0, inv, start, absorb, states, occ[b], occ_surv[b])

    if workers <= 1:
        for b in range(len(batches)):
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            list(pool.map(work, range(len(batches))))
    summary = EnsembleSummary(c, int(tag), absorb, rts, states, horizons, occ, occ_surv,
                              np.asarray(grid.nodes, dtype=float), faces, tuple(batches), label)
    if rts.size and summary.survivors(rts[0]) == 0:
        raise summary._extinct("simulate_killed", rts[0])
    return summary


def conditional_marginal(d, init, q, t, c, grid=None, workers=1, tag=0, summary=None):
    """Law of X_{qt} given survival to t, for q in (0, 1]."""
    if not 0 < q <= 1:
        raise UsageError("q must lie in (0, 1]")
    if summary is None:
        summary = simulate_killed(d, init, c.with_times(q * t, t), grid, workers=workers, tag=tag)
    return summary.marginal(_match(summary.report_times, q * t), t)


def double_limit_marginal(d, init, t, T, c, grid=None, workers=1, tag=0, summary=None):
    """Law of X_t given survival to T > t."""
    if not 0 < t < T:
        raise UsageError("need 0 < t < T")
    if summary is None:
        summary = simulate_killed(d, init, c.with_times(t, T), grid, workers=workers, tag=tag)
    return summary.marginal(t, T)


def time_average_occupation(d, init, t, c, grid=None, workers=1, tag=0, summary=None):
    """Expected occupation measure (1/t) int_0^t 1{X_s in .} ds given survival to t."""
    if summary is None:
        c2 = replace(c, t_horizon=max(c.t_horizon, t))
        summary = simulate_killed(d, init, c2, grid, horizons=(t,), workers=workers, tag=tag)
    return summary.occupation_measure(t)


def _match(times, t):
    j = int(np.argmin(np.abs(np.asarray(times) - t)))
    if not math.isclose(times[j], t, rel_tol=1e-9, abs_tol=1e-12):
        raise UsageError(f"time {t:g} is not a report time")
    return float(times[j])


@dataclass(frozen=True)
class DecayFit:
    """Exponential fit of the survival fraction.

    ``plateau`` holds e^{rate t} * survival(t) at the used times;
    ``plateau_ratio`` compares the last two. ``local_rates`` are the
    slopes between consecutive times; ``non_exponential`` flags a monotone
    and significant drift in them.
    """

    rate: float
    std_error: float
    times: tuple
    survival: tuple
    plateau: tuple
    plateau_ratio: float
    local_rates: tuple
    non_exponential: bool
    dropped_times: tuple = ()

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _slope(t, y):
    tc = t - t.mean()
    return float(np.sum(tc * (y - y.mean())) / np.sum(tc * tc))


def fit_decay(summary, t_min=None, t_max=None):
    """Least-squares rate of -log(survival fraction) over report times in [t_min, t_max].

    Raises
    ------
    InsufficientDecayData
        If fewer than three usable times remain after dropping those without survivors.
    """
    rts = summary.report_times
    sel = np.ones(rts.size, dtype=bool)
    if t_min is not None:
        sel &= rts >= t_min - 1e-12
    if t_max is not None:
        sel &= rts <= t_max + 1e-12
    times = rts[sel]
    ids = summary._batch_ids()
    nb = len(summary.batch_edges)
    sizes = np.array([hi - lo for lo, hi in summary.batch_edges], dtype=float)
    alive = np.array([np.bincount(ids[summary.absorption_times > t], minlength=nb) for t in times])
    total = alive.sum(axis=1)
    usable = total > 0
    dropped = tuple(float(t) for t in times[~usable])
    times, alive, total = times[usable], alive[usable], total[usable]
    if times.size < 3:
        raise InsufficientDecayData(f"only {times.size} report times with survivors (need 3)")
    surv = total / summary.n_paths
    rate = -_slope(times, np.log(surv))
    full = np.all(alive > 0, axis=1)
    if full.sum() >= 3:
        tb = times[full]
        brates = np.array([-_slope(tb, np.log(alive[full, b] / sizes[b])) for b in range(nb)])
        se = float(brates.std(ddof=1) / math.sqrt(nb))
    else:
        # delta method: var log S ~ (1 - S) / (n S), times treated as independent
        w = surv * summary.n_paths / (1.0 - surv + 1e-300)
        tc = times - np.average(times, weights=w)
        se = float(1.0 / math.sqrt(np.sum(w * tc * tc)))
    plateau = np.exp(rate * times) * surv
    local = -np.diff(np.log(surv)) / np.diff(times)
    steps = np.diff(local)
    monotone = local.size >= 3 and (np.all(steps < 0) or np.all(steps > 0))
    spread = abs(local[-1] - local[0]) if local.size else 0.0
    non_exp = bool(monotone and spread > 0.1 * abs(rate))
    return DecayFit(rate, se, tuple(map(float, times)), tuple(map(float, surv)), tuple(map(float, plateau)),
                    float(plateau[-1] / plateau[-2]), tuple(map(float, local)), non_exp, dropped)


def lambda1_estimate(d, init, c, grid=None, workers=1, tag=0, summary=None, t_min=None, t_max=None):
    """Survival decay rate; needs at least four report times in the decay regime."""
    if summary is None:
        if len(c.report_times) < 4:
            raise InsufficientDecayData("need at least four report times")
        summary = simulate_killed(d, init, c, grid, workers=workers, tag=tag)
    return fit_decay(summary, t_min, t_max)


@dataclass(frozen=True)
class HittingResult:
    p_hat: float
    analytic: float
    z_score: float
    n: int
    undecided: int

    def to_dict(self):
        return dict(self.__dict__)


def scale_hitting_test(d, a, y, b, n, seed, dt=1e-3, bridge=True, max_time=1e3, workers=1, tag=0, analytic=None):
    """Probability of leaving (a, b) through a, started at y, against the scale formula.

    ``analytic`` defaults to (Lambda(b) - Lambda(y)) / (Lambda(b) - Lambda(a)).
    Paths still inside after ``max_time`` are counted as undecided and
    excluded.
    """
    if not (a <= y <= b and a < b):
        raise UsageError("need a <= y <= b and a < b")
    powers, coefs = _laurent_arrays(d)
    if analytic is None:
        la, ly, lb = (scale_function(d, v) for v in (a, y, b))
        analytic = (lb - ly) / (lb - la)
    n = int(n)
    out = np.empty(n, dtype=np.int64)
    k0, k1 = _key(seed, tag)
    steps = int(math.ceil(max_time / dt))
    batches = _batches(n)

    def work(bi):
        lo, hi = batches[bi]
        _kernels.run_hitting_paths(powers, coefs, k0, k1, lo, hi, float(y), float(a), float(b),
                                   float(dt), bool(bridge), steps, out)

    if workers <= 1:
        for bi in range(len(batches)):
            work(bi)
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            list(pool.map(work, range(len(batches))))
    decided = out >= 0
    m = int(decided.sum())
    p_hat = float(out[decided].mean()) if m else math.nan
    var = analytic * (1 - analytic) / max(m, 1)
    if var > 0:
        z = (p_hat - analytic) / math.sqrt(var)
    else:
        z = 0.0 if p_hat == analytic else math.inf
    return HittingResult(p_hat, float(analytic), float(z), n, n - m)
