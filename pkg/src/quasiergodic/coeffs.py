r"""
Drift-derived coefficient functions
===================================

For the killed diffusion :math:`dX_t = dB_t - \alpha(X_t)\,dt` on :math:`(0,\infty)`
this module evaluates

* :math:`Q(y) = \int_1^y 2\alpha(x)\,dx`,
* the scale function :math:`\Lambda(x) = \int_1^x e^{Q(y)}\,dy` and its derivative,
* the speed density :math:`e^{-Q}`,
* :math:`\kappa(x) = \int_1^x e^{Q(y)} \int_1^y e^{-Q(z)}\,dz\,dy`,
* the entrance integral :math:`S = \int_1^\infty e^{Q(y)} \int_y^\infty e^{-Q(z)}\,dz\,dy`.

All base points are 1, so :math:`Q(1) = \Lambda(1) = \kappa(1) = 0`.

Improper integrals are decided by walking geometric cutoffs
:math:`x_k = \rho^{\pm k}` toward the singular endpoint and inspecting the
sequence of partial integrals, see :func:`improper_limit`.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, optimize

from .errors import QuadratureFailed, ScaleRangeError, UsageError

__all__ = [
    "DriftModel",
    "QuadratureSettings",
    "ImproperVerdict",
    "improper_limit",
    "eval_Q",
    "scale_function",
    "scale_derivative",
    "scale_inverse",
    "speed_density",
    "speed_mass",
    "kappa",
    "kappa_at_zero",
    "entrance_integral",
    "scale_at_infinity",
    "scale_at_zero",
    "speed_mass_near_zero",
    "speed_tail",
    "analytic_Q_defect",
    "q_difference",
    "q_increment",
]


@dataclass(frozen=True)
class DriftModel:
    """A drift :math:`\\alpha` on :math:`(0, \\infty)`.

    Parameters
    ----------
    evaluate : callable
        ``x -> alpha(x)``; must accept floats and numpy arrays.
    analytic_Q : callable, optional
        Closed-form ``x -> Q(x)`` with base point 1. When absent, Q is
        obtained by adaptive quadrature of ``2 * evaluate``.
    label : str
        Short identifier used in reports.
    laurent : tuple of (int, float) pairs, optional
        Coefficients ``(p, c_p)`` with ``alpha(x) = sum c_p x**p``. The
        compiled simulator in :mod:`quasiergodic.mc` requires this form.
    """

    evaluate: object
    analytic_Q: object = None
    label: str = "drift"
    laurent: tuple = None

    def __call__(self, x):
        return self.evaluate(x)


@dataclass(frozen=True)
class QuadratureSettings:
    """Tolerances for adaptive quadrature and improper-integral verdicts.

    ``max_cutoffs`` bounds the number of geometric cutoffs visited by
    :func:`improper_limit`; ``rate_tol`` is the slack in the increment-ratio
    test that detects logarithmic divergence.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    divergence_cap: float = 1e12
    max_subdivisions: int = 200
    shrink_factor: float = 0.5
    max_cutoffs: int = 1000
    rate_tol: float = 1e-6

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise UsageError("rel_tol and abs_tol must be positive")
        if not self.divergence_cap > 0:
            raise UsageError("divergence_cap must be positive")
        if self.max_subdivisions < 8:
            raise UsageError("max_subdivisions must be at least 8")
        if not 0.0 < self.shrink_factor < 1.0:
            raise UsageError("shrink_factor must lie in (0, 1)")
        if self.max_cutoffs < 8:
            raise UsageError("max_cutoffs must be at least 8")


DEFAULT_SETTINGS = QuadratureSettings()


@dataclass(frozen=True)
class ImproperVerdict:
    """Outcome of an improper-integral test.

    ``reason`` is one of ``"tolerance"`` (two successive partials agree),
    ``"extrapolated"`` (cutoffs exhausted, geometric tail summed),
    ``"cap"`` (partials exceeded the divergence cap while growing),
    ``"rate"`` (increments stopped decaying, e.g. logarithmic growth) or
    ``"overflow"``.
    """

    kind: str
    value: float = None
    evidence: tuple = field(default_factory=tuple)
    reason: str = ""

    @property
    def finite(self):
        return self.kind == "finite"

    def to_dict(self):
        return {
            "kind": self.kind,
            "value": self.value,
            "reason": self.reason,
            "evidence": [float(v) for v in self.evidence],
        }


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _panel_breaks(a, b, s):
    """Breakpoints for [a, b] (0 < a < b) with adjacent ratio at most 1/shrink."""
    ratio = 1.0 / s.shrink_factor
    if a <= 0.0 or b <= a * ratio:
        return [a, b]
    n = int(math.ceil(math.log(b / a) / math.log(ratio)))
    return list(np.geomspace(a, b, n + 1))


def _anchored_breaks(a, b, anchor_right, scale):
    """Breakpoints growing geometrically away from one endpoint of [a, b].

    Resolves integrands concentrated within ``scale`` of that endpoint.
    """
    width = b - a
    if not (0 < scale < 0.25 * width):
        return [a, b]
    n = int(math.ceil(math.log2(width / scale)))
    offsets = scale * 2.0 ** np.arange(n)
    pts = b - offsets[::-1] if anchor_right else a + offsets
    return sorted({a, b, *pts.tolist()})


def _quad(f, a, b, s, name="integral", anchor=None, scale=None, relative=False):
    """Integral of ``f`` over [a, b] with 0 < a, geometrically paneled.

    ``anchor`` ("left" or "right") plus ``scale`` add panels that resolve a
    peak of width ``scale`` at that endpoint. ``relative=True`` drops the
    absolute tolerance, for inner integrals whose size is unknown a priori.
    Returns ``inf`` when the integrand overflows.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
        if anchor is not None:
            anchor = "left" if anchor == "right" else "right"
    total = 0.0
    breaks = _panel_breaks(a, b, s)
    if anchor is not None and scale is not None:
        extra = _anchored_breaks(a, b, anchor == "right", scale)
        breaks = sorted(set(breaks) | set(extra))
    panels = list(zip(breaks[:-1], breaks[1:]))
    if anchor == "right":
        panels.reverse()
    for lo, hi in panels:
        # relative mode: panels far from the peak only need accuracy relative to the running total
        epsabs = 0.1 * s.rel_tol * abs(total) if relative else s.abs_tol
        with np.errstate(over="ignore", invalid="ignore"):
            val, err, info, *msg = integrate.quad(
                f, lo, hi, epsabs=epsabs, epsrel=s.rel_tol,
                limit=s.max_subdivisions, full_output=1,
            )
        if not np.isfinite(val):
            return sign * math.inf
        floor = 10 * epsabs if relative else 1e3 * s.abs_tol
        if msg and err > max(floor, math.sqrt(s.rel_tol) * abs(val)):
            raise QuadratureFailed(
                f"{name}: quadrature on [{lo:.6g}, {hi:.6g}] did not converge "
                f"(estimate {val:.6g} +/- {err:.2g})",
                partial=sign * (total + val), integral=name,
            )
        total += val
    return sign * total


def _exp(v):
    with np.errstate(over="ignore"):
        return np.exp(v)


# ---------------------------------------------------------------------------
# improper integrals
# ---------------------------------------------------------------------------

def improper_limit(panel, toward, s=DEFAULT_SETTINGS, start=1.0):
    """Decide whether a non-negative improper integral is finite.

    Parameters
    ----------
    panel : callable
        ``panel(lo, hi) -> float``, the integral over one panel. Panels are
        requested in order of increasing distance from ``start``, so the
        callable may carry cumulative state.
    toward : {"zero", "infinity"}
        Singular endpoint.
    s : QuadratureSettings
    start : float
        Regular endpoint of the integral.

    Returns
    -------
    ImproperVerdict
        ``evidence`` holds the partial integrals at the cutoffs
        ``start * shrink**k`` (toward zero) or ``start / shrink**k``.

    Notes
    -----
    Rules, applied after each new cutoff in this order:

    1. a non-finite partial is divergent;
    2. a partial above ``divergence_cap`` whose last three increments are
       non-decreasing is divergent;
    3. an increment below ``max(abs_tol, rel_tol * partial)`` is finite;
    4. once at least twelve panels are in, four consecutive increment ratios
       at or above ``1 - rate_tol`` mean divergent (non-summable tail).

    If cutoffs run out, the tail is summed geometrically with the last
    increment ratio when that ratio is below one.
    """
    rho = s.shrink_factor
    step = rho if toward == "zero" else 1.0 / rho
    partials = []
    incs = []
    prev = start
    total = 0.0
    for k in range(1, s.max_cutoffs + 1):
        cut = start * step ** k
        if cut <= 0.0 or not np.isfinite(cut):
            break
        lo, hi = (cut, prev) if toward == "zero" else (prev, cut)
        d = panel(lo, hi)
        prev = cut
        total = total + d
        incs.append(d)
        partials.append(total)
        if not np.isfinite(total):
            return ImproperVerdict("divergent", None, tuple(partials), "overflow")
        if total > s.divergence_cap and len(incs) >= 3 and incs[-3] <= incs[-2] <= incs[-1]:
            return ImproperVerdict("divergent", None, tuple(partials), "cap")
        if k >= 2 and d <= max(s.abs_tol, s.rel_tol * abs(total)):
            return ImproperVerdict("finite", float(total), tuple(partials), "tolerance")
        if len(incs) >= 12:
            last = incs[-5:]
            if all(a > 0 for a in last[:-1]) and all(
                b / a >= 1.0 - s.rate_tol for a, b in zip(last[:-1], last[1:])
            ):
                return ImproperVerdict("divergent", None, tuple(partials), "rate")
    if len(incs) >= 2 and incs[-2] > 0:
        ratio = incs[-1] / incs[-2]
        if ratio < 1.0:
            value = total + incs[-1] * ratio / (1.0 - ratio)
            return ImproperVerdict("finite", float(value), tuple(partials), "extrapolated")
    return ImproperVerdict("divergent", None, tuple(partials), "rate")


# ---------------------------------------------------------------------------
# pointwise coefficients
# ---------------------------------------------------------------------------

def _check_positive(x):
    if np.any(np.asarray(x) <= 0):
        raise UsageError("coefficients are defined for x > 0 only")


def _Q_quadrature(d, x, s):
    return _quad(lambda y: 2.0 * d.evaluate(y), 1.0, x, s, name="Q")


def eval_Q(d, x, s=DEFAULT_SETTINGS):
    """:math:`Q(x) = \\int_1^x 2\\alpha`, vectorized over ``x``."""
    if type(x) is float and x > 0.0 and d.analytic_Q is not None:
        return 0.0 if x == 1.0 else d.analytic_Q(x)
    _check_positive(x)
    if d.analytic_Q is not None:
        out = d.analytic_Q(x)
        if np.ndim(out) == 0:
            return 0.0 if x == 1.0 else float(out)
        out = np.array(out, dtype=float)
        out[np.asarray(x) == 1.0] = 0.0
        return out
    if np.ndim(x) == 0:
        return 0.0 if x == 1.0 else _Q_quadrature(d, float(x), s)
    xs = np.asarray(x, dtype=float)
    return np.array([0.0 if v == 1.0 else _Q_quadrature(d, v, s) for v in xs.ravel()]).reshape(xs.shape)


def scale_derivative(d, x, s=DEFAULT_SETTINGS):
    """:math:`\\Lambda'(x) = e^{Q(x)}`."""
    return _exp(eval_Q(d, x, s))


def speed_density(d, x, s=DEFAULT_SETTINGS):
    """Density :math:`e^{-Q(x)}` of the speed measure."""
    return _exp(-eval_Q(d, x, s))


def scale_function(d, x, s=DEFAULT_SETTINGS):
    """:math:`\\Lambda(x) = \\int_1^x e^{Q(y)}\\,dy` (negative for x < 1)."""
    if np.ndim(x) > 0:
        return np.array([scale_function(d, v, s) for v in np.ravel(x)]).reshape(np.shape(x))
    _check_positive(x)
    if x == 1.0:
        return 0.0
    return _quad(lambda y: _exp(eval_Q(d, y, s)), 1.0, float(x), s, name="scale")


def speed_mass(d, a, b, s=DEFAULT_SETTINGS):
    """:math:`\\mu([a, b)) = \\int_a^b e^{-Q}` for 0 < a <= b < inf."""
    return _quad(lambda y: _exp(-eval_Q(d, y, s)), a, b, s, name="speed")


def scale_inverse(d, z, s=DEFAULT_SETTINGS):
    """Solve :math:`\\Lambda(x) = z` by bracketing and Brent's method.

    Raises
    ------
    ScaleRangeError
        If ``z`` lies outside the numerical range of :math:`\\Lambda`.
    """
    if z == 0.0:
        return 1.0
    lam = lambda x: scale_function(d, x, s)
    if z > 0:
        lo, hi = 1.0, 2.0
        while lam(hi) < z:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise ScaleRangeError(f"z = {z:g} exceeds the range of the scale function")
    else:
        lo, hi = 0.5, 1.0
        while lam(lo) > z:
            lo, hi = 0.5 * lo, lo
            if lo < 1e-300:
                raise ScaleRangeError(f"z = {z:g} lies below the scale function at 0+")
    return optimize.brentq(lambda x: lam(x) - z, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def kappa(d, x, s=DEFAULT_SETTINGS):
    """:math:`\\kappa(x)` at a single point, by nested quadrature."""
    _check_positive(x)
    if x == 1.0:
        return 0.0

    def inner(y):
        qy = eval_Q(d, y, s)
        return _quad(lambda z: _exp(qy - eval_Q(d, z, s)), 1.0, y, s, name="kappa")

    return _quad(inner, 1.0, float(x), s, name="kappa")


def analytic_Q_defect(d, probes, s=DEFAULT_SETTINGS, h=1e-5):
    """Largest relative mismatch between d/dx analytic_Q and 2*alpha at ``probes``."""
    probes = np.asarray(probes, dtype=float)
    step = h * probes
    slope = (d.analytic_Q(probes + step) - d.analytic_Q(probes - step)) / (2 * step)
    target = 2.0 * d.evaluate(probes)
    return float(np.max(np.abs(slope - target) / np.maximum(np.abs(target), 1.0)))


# ---------------------------------------------------------------------------
# the four boundary integrals
# ---------------------------------------------------------------------------

def _decay_scale(d, x):
    """Length over which e^{+-Q} changes by a factor e near ``x``."""
    rate = abs(2.0 * float(d.evaluate(x)))
    return 1.0 / rate if rate > 0 else math.inf


def q_increment(d, x, u, s=DEFAULT_SETTINGS):
    """:math:`Q(x + u) - Q(x)`, accurate to relative precision even for tiny ``u``."""
    if u == 0.0:
        return 0.0
    if d.laurent is not None:
        y = x + u
        out = 0.0
        for p, c in d.laurent:
            if p == -1:
                out += 2.0 * c * math.log1p(u / x)
            else:
                # y^(p+1) - x^(p+1) = u * sum_j y^j x^(p-j)
                out += 2.0 * c * u * sum(y ** j * x ** (p - j) for j in range(p + 1)) / (p + 1)
        return out
    if abs(u) <= 0.5 * x:
        return _quad(lambda v: 2.0 * d.evaluate(v), x, x + u, s, name="Q")
    return eval_Q(d, x + u, s) - eval_Q(d, x, s)


def q_difference(d, y, z, s=DEFAULT_SETTINGS):
    """:math:`Q(y) - Q(z)`."""
    return q_increment(d, z, y - z, s)


def scale_at_infinity(d, s=DEFAULT_SETTINGS):
    """Verdict on :math:`\\Lambda(\\infty) = \\int_1^\\infty e^Q`."""
    return improper_limit(
        lambda lo, hi: _quad(lambda y: _exp(eval_Q(d, y, s)), lo, hi, s, name="scale-infinity"),
        "infinity", s,
    )


def scale_at_zero(d, s=DEFAULT_SETTINGS):
    """Verdict on :math:`-\\Lambda(0^+) = \\int_0^1 e^Q`."""
    return improper_limit(
        lambda lo, hi: _quad(lambda y: _exp(eval_Q(d, y, s)), lo, hi, s, name="scale-zero"),
        "zero", s,
    )


def speed_mass_near_zero(d, s=DEFAULT_SETTINGS, eps=1.0):
    """Verdict on :math:`\\mu(0, \\varepsilon)`."""
    return improper_limit(
        lambda lo, hi: _quad(lambda y: _exp(-eval_Q(d, y, s)), lo, hi, s, name="speed-zero"),
        "zero", s, start=eps,
    )


def speed_tail(d, x, s=DEFAULT_SETTINGS):
    """Verdict on :math:`\\mu([x, \\infty))`."""
    return improper_limit(
        lambda lo, hi: _quad(lambda y: _exp(-eval_Q(d, y, s)), lo, hi, s, name="speed-tail"),
        "infinity", s, start=x,
    )


def kappa_at_zero(d, s=DEFAULT_SETTINGS):
    """Verdict on :math:`\\kappa(0^+)`.

    For x < 1, :math:`\\kappa(x) = \\int_x^1 e^{Q(y)} G(y)\\,dy` with
    :math:`G(y) = \\mu([y, 1))`. Each panel reuses ``G`` at its right end so
    the nested integral never spans more than one panel. ``G`` is carried as
    ``log G + Q`` at the panel end so no exponent ever exceeds O(log x).
    """
    state = {"log_g": -math.inf}

    def panel(lo, hi):
        log_g = state["log_g"]

        def integrand(y):
            near = _quad(lambda u: _exp(-q_increment(d, y, u, s)), 0.0, hi - y, s, name="kappa",
                         anchor="left", scale=_decay_scale(d, y), relative=True) if y < hi else 0.0
            far = _exp(q_difference(d, y, hi, s) + log_g) if log_g > -math.inf else 0.0
            return near + far

        val = _quad(integrand, lo, hi, s, name="kappa")
        # G(lo) e^{Q(lo)} = G(hi) e^{Q(hi)} e^{Q(lo)-Q(hi)} + int_lo^hi e^{Q(lo)-Q(z)} dz
        fresh = _quad(lambda u: _exp(-q_increment(d, lo, u, s)), 0.0, hi - lo, s, name="kappa",
                      anchor="left", scale=_decay_scale(d, lo), relative=True)
        carried = log_g + q_difference(d, lo, hi, s)
        state["log_g"] = float(np.logaddexp(carried, math.log(fresh))) if fresh > 0 else carried
        return val

    return improper_limit(panel, "zero", s)


def entrance_integral(d, s=DEFAULT_SETTINGS):
    """Verdict on the entrance integral S.

    Uses the equivalent single-integral form
    :math:`S = \\int_1^\\infty \\Lambda(z) e^{-Q(z)}\\,dz` (swap of the
    order of integration for a non-negative integrand). The factor
    :math:`\\Lambda(z)e^{-Q(z)}` is built from differences of Q only, and
    :math:`\\Lambda` is carried as ``log Lambda - Q`` at the panel end.
    """
    state = {"log_l": -math.inf}

    def panel(lo, hi):
        log_l = state["log_l"]

        def integrand(z):
            near = _quad(lambda u: _exp(q_increment(d, z, -u, s)), 0.0, z - lo, s, name="entrance",
                         anchor="left", scale=_decay_scale(d, z), relative=True) if z > lo else 0.0
            far = _exp(log_l - q_difference(d, z, lo, s)) if log_l > -math.inf else 0.0
            return near + far

        val = _quad(integrand, lo, hi, s, name="entrance")
        fresh = _quad(lambda u: _exp(q_increment(d, hi, -u, s)), 0.0, hi - lo, s, name="entrance",
                      anchor="left", scale=_decay_scale(d, hi), relative=True)
        carried = log_l - q_difference(d, hi, lo, s)
        state["log_l"] = float(np.logaddexp(carried, math.log(fresh))) if fresh > 0 else carried
        return val

    return improper_limit(panel, "infinity", s)
