r"""
Ultracontractivity criterion in original and natural-scale coordinates
======================================================================

With the shifted scale :math:`\tilde\Lambda(x) = \int_0^x e^{Q}` (zero at the
killed boundary) and :math:`p = q/(q-2)` for :math:`q > 2`, the semigroup is
ultracontractive iff both

.. math::

    \sup_{0<x<1} \tilde\Lambda(x)^p \mu([x,1)), \qquad
    \sup_{x\ge 1} \tilde\Lambda(x)^p \mu([x,\infty))

are finite. In natural scale :math:`z = \tilde\Lambda(x)` with speed measure
:math:`m(dz) = 2\,dz / \Lambda'(\tilde\Lambda^{-1}(z))^2`, the same suprema
over the image intervals :math:`(0, z_1)` and :math:`[z_1, \infty)`,
:math:`z_1 = \tilde\Lambda(1)`, are exactly twice as large.

Both sides are computed here through separate pipelines:

* **x-pipeline**: quadrature in x of :math:`e^{\pm Q}`, in log form.
* **z-pipeline**: the ODE :math:`dx/du = e^{u - Q(x)}` in :math:`u = \log z`
  (the inverse scale map), integrated together with the m-mass, so neither
  :math:`\tilde\Lambda` nor :math:`\mu` is ever evaluated.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, optimize

from .coeffs import (
    DEFAULT_SETTINGS,
    _decay_scale,
    _quad,
    eval_Q,
    improper_limit,
    q_increment,
    scale_at_zero,
    speed_mass,
    speed_tail,
)
from .errors import BadBracket, BadExponent, ScaleRangeError, ScaleUnboundedAtZero

__all__ = [
    "NaturalScaleModel",
    "SupEstimate",
    "IUReport",
    "natural_scale",
    "iu_criterion",
    "hitting_law_natural_scale",
]


def _log_shifted_scale(d, x, s):
    """log of int_0^x e^Q = Q(x) + log int_0^x exp(Q(x-u) - Q(x)) du."""
    x = float(x)
    inner = _quad(lambda u: math.exp(q_increment(d, x, -u, s)), 0.0, x, s, name="shifted-scale",
                  anchor="left", scale=_decay_scale(d, x), relative=True)
    return float(eval_Q(d, x, s)) + math.log(inner)


def _log_speed_tail(d, x, s):
    """log mu([x, inf)), assuming the tail is finite."""
    x = float(x)
    scale = _decay_scale(d, x)

    def panel(lo, hi):
        return _quad(lambda u: math.exp(-q_increment(d, x, u, s)), lo - x, hi - x, s, name="speed-tail",
                     anchor="left" if lo == x else None, scale=scale, relative=True)

    verdict = improper_limit(panel, "infinity", s, start=x)
    if not verdict.finite:
        return math.inf
    return float(eval_Q(d, x, s) * -1.0) + math.log(verdict.value)


@dataclass(frozen=True)
class NaturalScaleModel:
    """The shifted scale map, its inverse and the natural-scale speed density.

    ``offset`` is :math:`-\\Lambda(0^+) = \\int_0^1 e^Q`, so
    ``shifted_scale(x) = scale_function(x) + offset``.
    """

    d: object
    offset: float
    s: object = field(default=DEFAULT_SETTINGS, repr=False)

    def log_shifted_scale(self, x):
        return _log_shifted_scale(self.d, x, self.s)

    def shifted_scale(self, x):
        if np.ndim(x):
            return np.array([self.shifted_scale(v) for v in np.ravel(x)]).reshape(np.shape(x))
        return math.exp(self.log_shifted_scale(x))

    def inverse(self, z):
        """x with shifted_scale(x) = z, for z > 0."""
        if not z > 0:
            raise ScaleRangeError("the shifted scale is positive; z must be > 0")
        target = math.log(z)
        f = lambda t: self.log_shifted_scale(math.exp(t)) - target
        lo, hi = -1.0, 1.0
        while f(lo) > 0:
            lo *= 2.0
            if lo < -690:
                raise ScaleRangeError(f"z = {z:g} is below the numerical range")
        while f(hi) < 0:
            hi *= 2.0
            if hi > 690:
                raise ScaleRangeError(f"z = {z:g} exceeds the numerical range")
        return math.exp(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))

    def m_density(self, z):
        """2 / Lambda'(x)^2 at x = inverse(z)."""
        return 2.0 * math.exp(-2.0 * float(eval_Q(self.d, self.inverse(z), self.s)))


def natural_scale(d, s=DEFAULT_SETTINGS):
    """Shifted-scale bundle for ``d``.

    Raises
    ------
    ScaleUnboundedAtZero
        If :math:`\\Lambda(0^+) = -\\infty`, so no shift makes the scale
        vanish at the killed boundary.
    """
    v = scale_at_zero(d, s)
    if not v.finite:
        raise ScaleUnboundedAtZero(f"Lambda(0+) is infinite for {d.label}")
    return NaturalScaleModel(d, float(v.value), s)


@dataclass(frozen=True)
class SupEstimate:
    """Supremum of a maximand over a scanned range.

    ``kind`` is ``"finite"`` or ``"divergent"``; ``reason`` says why:
    ``"interior-max"``, ``"increasing-at-end"`` (the maximand still grows over
    the last scanned decade) or ``"infinite-tail"`` (the measure tail itself
    is infinite). ``value`` is the largest value seen (``inf`` for an
    infinite tail) and ``log_value`` its logarithm.
    """

    kind: str
    log_value: float
    argmax: float
    reason: str
    scan: tuple = ()

    @property
    def finite(self):
        return self.kind == "finite"

    @property
    def value(self):
        return math.exp(self.log_value) if self.log_value < 709 else math.inf

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, "log_value": self.log_value,
                "argmax": self.argmax, "reason": self.reason}


def _scan_sup(logf, t_grid, grows_at, tol=1e-12, t_end=None):
    """Maximize ``logf`` over a sorted scan in a log coordinate ``t``.

    ``grows_at`` is ``"right"`` or ``"left"``: the open end where the
    supremum might escape to infinity. ``t_end`` is the closed end of the
    range when the scan stops short of it, so a maximum past the last scan
    point is still bracketed. Returns ``(kind, log_value, t_best, reason)``.
    """
    vals = np.array([logf(t) for t in t_grid])
    i = int(np.argmax(vals))
    per_decade = np.searchsorted(t_grid, t_grid[0] + math.log(10.0))
    if grows_at == "right":
        at_end = i == len(t_grid) - 1
        rising = vals[-1] > vals[max(0, len(t_grid) - 1 - per_decade)]
    else:
        at_end = i == 0
        rising = vals[0] > vals[min(len(t_grid) - 1, per_decade)]
    if at_end and rising:
        return "divergent", float(vals[i]), float(t_grid[i]), "increasing-at-end", vals
    lo = t_grid[max(i - 1, 0)]
    hi = t_grid[min(i + 1, len(t_grid) - 1)]
    if t_end is not None and i == len(t_grid) - 1 and t_end > t_grid[-1]:
        hi = t_end
    elif t_end is not None and i == 0 and t_end < t_grid[0]:
        lo = t_end
    best_t, best_v = float(t_grid[i]), float(vals[i])
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -logf(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": tol})
        if -res.fun > best_v:
            best_t, best_v = float(res.x), float(-res.fun)
    return "finite", best_v, best_t, "interior-max", vals


def _z_pipeline_near(d, s, u1, u_lo):
    """x(u) and m([e^u, z_1)) for u in [u_lo, u1], by backward ODE from x(u1) = 1."""
    def rhs(u, y):
        x = y[0]
        q = float(eval_Q(d, x, s))
        return [math.exp(u - q), -2.0 * math.exp(u - 2.0 * q)]  # run downward, y[1] accumulates m([e^u, z_1))

    sol = integrate.solve_ivp(rhs, (u1, u_lo), [1.0, 0.0], method="DOP853", rtol=1e-13,
                              atol=[1e-22, 1e-20], dense_output=True)
    if not sol.success:
        raise ScaleRangeError(f"natural-scale ODE failed near zero: {sol.message}")
    return sol.sol


def _z_pipeline_far(d, s, u1, u_hi, extend=40.0):
    """x(u) and the tail ratio R(u) = m([e^u, inf)) e^{2Q(x(u)) - u} on [u1, u_hi].

    The tail ratio obeys R' = R (2 Q'(x) x' - 1) - 2 and is integrated
    backward from R = 0 at ``u_hi + extend``, which is stable and loses the
    truncated tail at rate e^{-(u_end - u)}.
    """
    u_end = u_hi + extend

    def fwd(u, y):
        return [math.exp(u - float(eval_Q(d, y[0], s)))]

    def jac_fwd(u, y):
        x = y[0]
        return [[-2.0 * float(d.evaluate(x)) * math.exp(u - float(eval_Q(d, x, s)))]]

    xs = integrate.solve_ivp(fwd, (u1, u_end), [1.0], method="Radau", jac=jac_fwd, rtol=1e-12,
                             atol=1e-14, dense_output=True)
    if not xs.success:
        raise ScaleRangeError(f"natural-scale ODE failed toward infinity: {xs.message}")
    xfun = xs.sol

    def back(u, y):
        x = float(xfun(u)[0])
        xp = math.exp(u - float(eval_Q(d, x, s)))
        return [y[0] * (4.0 * float(d.evaluate(x)) * xp - 1.0) - 2.0]

    rs = integrate.solve_ivp(back, (u_end, u1), [0.0], method="Radau", rtol=1e-12, atol=1e-16,
                             dense_output=True)
    if not rs.success:
        raise ScaleRangeError(f"tail ODE failed: {rs.message}")
    return xfun, rs.sol


@dataclass(frozen=True)
class IUReport:
    q: float
    exponent: float
    sup_near_zero: SupEstimate
    sup_at_infinity: SupEstimate
    z_sup_near_zero: SupEstimate
    z_sup_at_infinity: SupEstimate
    z1: float
    pointwise_identity_error: float
    label: str = ""

    @property
    def ultracontractive(self):
        return self.sup_near_zero.finite and self.sup_at_infinity.finite

    def identity_errors(self):
        """Relative error of z_sup = 2 * sup for each pair with both sides finite."""
        out = {}
        for key, xs, zs in (("near_zero", self.sup_near_zero, self.z_sup_near_zero),
                            ("at_infinity", self.sup_at_infinity, self.z_sup_at_infinity)):
            if xs.finite and zs.finite:
                out[key] = abs(math.expm1(zs.log_value - xs.log_value - math.log(2.0)))
        return out

    def to_dict(self):
        return {
            "model": self.label,
            "q": self.q,
            "exponent": self.exponent,
            "z1": self.z1,
            "sup_near_zero": self.sup_near_zero.to_dict(),
            "sup_at_infinity": self.sup_at_infinity.to_dict(),
            "z_sup_near_zero": self.z_sup_near_zero.to_dict(),
            "z_sup_at_infinity": self.z_sup_at_infinity.to_dict(),
            "factor_two_identity_rel_err": self.identity_errors(),
            "pointwise_identity_max_rel_err": self.pointwise_identity_error,
            "ultracontractive": self.ultracontractive,
        }


def iu_criterion(d, q, s=DEFAULT_SETTINGS, x_min=1e-8, x_max=10.0, per_decade=40):
    """Evaluate both suprema in x and in z for exponent ``q``.

    Parameters
    ----------
    x_min, x_max : float
        Scan range; the z scans cover the images of [x_min, 1) and [1, x_max].
    per_decade : int
        Log-spaced scan points per decade before local refinement.

    Raises
    ------
    BadExponent
        If ``q <= 2``.
    ScaleUnboundedAtZero
        If the shifted scale does not exist.
    """
    if not (math.isfinite(q) and q > 2):
        raise BadExponent(f"need q > 2, got {q!r}")
    p = q / (q - 2.0)
    ns = natural_scale(d, s)
    lz1 = ns.log_shifted_scale(1.0)

    # --- x-pipeline ----------------------------------------------------
    def near_x(t):
        x = math.exp(t)
        return p * ns.log_shifted_scale(x) + math.log(speed_mass(d, x, 1.0, s))

    t_near = np.linspace(math.log(x_min), 0.0, int(per_decade * math.log10(1 / x_min)) + 1)[:-1]
    kind, lv, tb, why, _ = _scan_sup(near_x, t_near, "left", t_end=0.0)
    sup_near = SupEstimate(kind, lv, math.exp(tb), why)

    tail1 = speed_tail(d, 1.0, s)
    if not tail1.finite:
        sup_far = SupEstimate("divergent", math.inf, math.inf, "infinite-tail")
    else:
        def far_x(t):
            x = math.exp(t)
            return p * ns.log_shifted_scale(x) + _log_speed_tail(d, x, s)

        t_far = np.linspace(0.0, math.log(x_max), int(per_decade * math.log10(x_max)) + 1)
        kind, lv, tb, why, _ = _scan_sup(far_x, t_far, "right")
        sup_far = SupEstimate(kind, lv, math.exp(tb), why)

    # --- z-pipeline ----------------------------------------------------
    u_lo = ns.log_shifted_scale(x_min)
    near_sol = _z_pipeline_near(d, s, lz1, u_lo)

    def near_z(u):
        _, c = near_sol(u)
        return p * u + math.log(c) if c > 0 else -math.inf

    u_near = np.linspace(u_lo, lz1, t_near.size + 1)[:-1]
    kind, lv, ub, why, _ = _scan_sup(near_z, u_near, "left", t_end=lz1)
    z_near = SupEstimate(kind, lv, math.exp(ub), why)

    point_errs = []
    if not tail1.finite:
        z_far = SupEstimate("divergent", math.inf, math.inf, "infinite-tail")
    else:
        u_hi = ns.log_shifted_scale(x_max)
        xfun, rfun = _z_pipeline_far(d, s, lz1, u_hi)

        def far_z(u):
            x = float(xfun(u)[0])
            r = float(rfun(u)[0])
            return p * u + math.log(r) + u - 2.0 * float(eval_Q(d, x, s)) if r > 0 else -math.inf

        u_far = np.linspace(lz1, u_hi, int(per_decade * math.log10(x_max)) + 1)
        kind, lv, ub, why, _ = _scan_sup(far_z, u_far, "right")
        z_far = SupEstimate(kind, lv, math.exp(ub), why)
        for x in np.geomspace(1.5, min(x_max, 10.0), 4):
            u = ns.log_shifted_scale(x)
            lhs = far_z(u)
            rhs = math.log(2.0) + p * u + _log_speed_tail(d, x, s)
            point_errs.append(abs(math.expm1(lhs - rhs)))
    for x in np.geomspace(max(x_min, 1e-4), 0.5, 4):
        u = ns.log_shifted_scale(x)
        lhs = near_z(u)
        rhs = math.log(2.0) + p * u + math.log(speed_mass(d, x, 1.0, s))
        point_errs.append(abs(math.expm1(lhs - rhs)))

    return IUReport(q=float(q), exponent=p, sup_near_zero=sup_near, sup_at_infinity=sup_far,
                    z_sup_near_zero=z_near, z_sup_at_infinity=z_far, z1=math.exp(lz1),
                    pointwise_identity_error=float(max(point_errs)), label=d.label)


def hitting_law_natural_scale(a, y, b):
    """P_y(hit a before b) = (b - y) / (b - a) for a process in natural scale."""
    if not (a <= y <= b and a < b):
        raise BadBracket(f"need a <= y <= b and a < b, got ({a}, {y}, {b})")
    return (b - y) / (b - a)
