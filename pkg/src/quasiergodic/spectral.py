r"""
Finite-volume spectral solver for the killed generator
======================================================

The generator :math:`Lf = \tfrac12 f'' - \alpha f'` is written in divergence
form :math:`Lf = \tfrac12 e^{Q}(e^{-Q} f')'` and discretized with a
conservative three-point scheme on a truncated grid
:math:`x_{\min} = x_1 < \dots < x_N = x_{\max}`:

.. math::

    (A f)_i = \frac{1}{2 w_i}\Big[c_{i-\frac12}\frac{f_i - f_{i-1}}{h_{i-\frac12}}
              - c_{i+\frac12}\frac{f_{i+1} - f_i}{h_{i+\frac12}}\Big],
    \qquad c = e^{-Q(\text{face})},\; w_i = e^{-Q(x_i)}\,|\text{cell}_i|.

``A`` approximates :math:`-L`. The left ghost value is 0 (absorbing exit
boundary), the right face carries zero flux (entrance boundary). Because
:math:`w_i A_{i,i+1} = w_{i+1} A_{i+1,i}`, the similarity
:math:`W^{1/2} A W^{-1/2}` is a symmetric tridiagonal matrix whose smallest
eigenpairs are computed by Sturm bisection and inverse iteration.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .coeffs import DEFAULT_SETTINGS, eval_Q, speed_mass, speed_tail
from .errors import CoefficientOverflow, DegenerateLimit, EigFailed, GridConfigError, UsageError

__all__ = [
    "Grid",
    "DiscreteOperator",
    "SpectralSolution",
    "RatioLimitReport",
    "build_grid",
    "uniform_grid",
    "auto_right_cut",
    "assemble_operator",
    "solve_eigs",
    "solve_model",
    "sturm_count",
    "count_sign_changes",
    "propagate",
    "survival_probability",
    "ratio_limit_check",
    "orthonormality_residual",
    "cut_sensitivity",
    "richardson_lambda1",
]

DEFAULT_N = 2000
DEFAULT_LEFT_CUT = 1e-4
DEFAULT_K = 64


@dataclass(frozen=True)
class Grid:
    """Truncation of (0, inf) to ``nodes``.

    ``left_ghost`` and ``right_ghost`` are the virtual neighbours outside the
    grid used to place the boundary faces.
    """

    nodes: np.ndarray
    left_cut: float
    right_cut: float
    spacing_rule: str
    left_ghost: float
    right_ghost: float

    @property
    def n(self):
        return self.nodes.size

    @property
    def faces(self):
        ext = np.concatenate(([self.left_ghost], self.nodes, [self.right_ghost]))
        return 0.5 * (ext[1:] + ext[:-1])

    @property
    def cell_widths(self):
        return np.diff(self.faces)

    def metadata(self):
        return {
            "n": int(self.n),
            "left_cut": float(self.left_cut),
            "right_cut": float(self.right_cut),
            "spacing_rule": self.spacing_rule,
            "left_ghost": float(self.left_ghost),
            "right_ghost": float(self.right_ghost),
        }


def _to_s(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 1.0, np.log(np.minimum(x, 1.0)), x - 1.0)


def _from_s(u):
    u = np.asarray(u, dtype=float)
    return np.where(u < 0.0, np.exp(np.minimum(u, 0.0)), u + 1.0)


def build_grid(d, n, left_cut, right_cut):
    """Grid that is geometric on (left_cut, 1) and uniform on (1, right_cut).

    The nodes are equispaced in the coordinate ``s = log x`` (x < 1),
    ``s = x - 1`` (x >= 1), which is C^1 at x = 1, so the spacing is
    continuous across the switch.
    """
    if not (0.0 < left_cut < right_cut) or not math.isfinite(right_cut):
        raise GridConfigError(f"need 0 < left_cut < right_cut < inf, got {left_cut!r}, {right_cut!r}")
    if n < 16:
        raise GridConfigError(f"need at least 16 nodes, got {n}")
    u = np.linspace(_to_s(left_cut), _to_s(right_cut), int(n))
    du = u[1] - u[0]
    nodes = _from_s(u)
    nodes[0], nodes[-1] = left_cut, right_cut
    ghosts = _from_s(np.array([u[0] - du, u[-1] + du]))
    rule = "geometric-near-zero" if left_cut < 1.0 else "uniform"
    return Grid(nodes, float(left_cut), float(right_cut), rule, float(ghosts[0]), float(ghosts[1]))


def uniform_grid(a, b, n):
    """``n`` interior nodes of [a, b] with ghosts exactly at a and b.

    Together with ``right_bc="dirichlet"`` this gives the textbook
    Dirichlet problem on [a, b].
    """
    if not (0.0 <= a < b) or n < 16:
        raise GridConfigError("need 0 <= a < b and n >= 16")
    h = (b - a) / (n + 1)
    nodes = a + h * np.arange(1, n + 1)
    return Grid(nodes, float(nodes[0]), float(nodes[-1]), "uniform", float(a), float(b))


def auto_right_cut(d, s=DEFAULT_SETTINGS, tail_ratio=1e-12, start=1.5, growth=1.05):
    """Smallest probed x with mu([x, inf)) < tail_ratio * mu([1, x)).

    Raises
    ------
    GridConfigError
        If the speed measure has an infinite tail, so no cut qualifies.
    """
    x = start
    for _ in range(2000):
        tail = speed_tail(d, x, s)
        if not tail.finite:
            raise GridConfigError(f"speed measure of {d.label} has infinite mass at infinity")
        if tail.value < tail_ratio * speed_mass(d, 1.0, x, s):
            return float(x)
        x *= growth
    raise GridConfigError("no right cut found below the probe limit")


@dataclass(frozen=True)
class DiscreteOperator:
    """Tridiagonal matrix A approximating -L, plus the mu-weights of the cells.

    ``conductance[j]`` is ``c/(2h)`` on face j (faces 0..N, face j lies left
    of node j); a zero entry means a zero-flux face.
    """

    diag: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    mu_weights: np.ndarray
    conductance: np.ndarray
    grid: Grid
    right_bc: str = "neumann"

    @property
    def offdiag(self):
        return self.upper, self.lower

    def matvec(self, f):
        f = np.asarray(f, dtype=float)
        out = self.diag * f
        out[:-1] += self.upper * f[1:]
        out[1:] += self.lower * f[:-1]
        return out

    def to_dense(self):
        n = self.diag.size
        a = np.diag(self.diag)
        a[np.arange(n - 1), np.arange(1, n)] = self.upper
        a[np.arange(1, n), np.arange(n - 1)] = self.lower
        return a

    def symmetric_form(self):
        """Diagonal and off-diagonal of W^{1/2} A W^{-1/2}."""
        w = self.mu_weights
        return self.diag.copy(), -self.conductance[1:-1] / np.sqrt(w[:-1] * w[1:])


def assemble_operator(d, g, right_bc="neumann", s=DEFAULT_SETTINGS):
    """Conservative discretization of -L on ``g``.

    Parameters
    ----------
    right_bc : {"neumann", "dirichlet"}
        Zero flux through the right face (entrance boundary) or a zero ghost
        value (used for the test harness on a bounded interval).
    """
    if right_bc not in ("neumann", "dirichlet"):
        raise UsageError(f"unknown right boundary condition {right_bc!r}")
    ext = np.concatenate(([g.left_ghost], g.nodes, [g.right_ghost]))
    faces = g.faces
    h = np.diff(ext)
    with np.errstate(over="ignore", under="ignore"):
        q_nodes = np.asarray(eval_Q(d, g.nodes, s), dtype=float)
        q_faces = np.asarray(eval_Q(d, faces, s), dtype=float)
        c_faces = np.exp(-q_faces)
        w = np.exp(-q_nodes) * np.diff(faces)
    bad = ~(np.isfinite(w) & (w > 0))
    if bad.any():
        i = int(np.argmax(bad))
        raise CoefficientOverflow(f"exp(-Q) not representable at node {i} (x = {g.nodes[i]:.6g})", node=i)
    bad = ~(np.isfinite(c_faces) & (c_faces > 0))
    if bad.any():
        j = int(np.argmax(bad))
        raise CoefficientOverflow(f"exp(-Q) not representable at face {j} (x = {faces[j]:.6g})", node=j)
    cond = c_faces / (2.0 * h)
    if right_bc == "neumann":
        cond[-1] = 0.0
    diag = (cond[:-1] + cond[1:]) / w
    upper = -cond[1:-1] / w[:-1]
    lower = -cond[1:-1] / w[1:]
    return DiscreteOperator(diag, upper, lower, w, cond, g, right_bc)


def sturm_count(diag, off, x):
    """Number of eigenvalues of the symmetric tridiagonal (diag, off) below ``x``.

    Counts negative pivots of the LDL^T factorization of T - xI.
    """
    count = 0
    q = 1.0
    tiny = np.finfo(float).tiny
    for i in range(len(diag)):
        q = diag[i] - x - (off[i - 1] ** 2 / q if i > 0 else 0.0)
        if q == 0.0:
            q = -tiny
        if q < 0.0:
            count += 1
    return count


@dataclass(frozen=True)
class SpectralSolution:
    """Smallest eigenpairs of the discretized killed generator.

    ``eigenfunctions[n]`` holds the node values of the (n+1)-th eigenfunction,
    normalized so that ``sum(w * eta_n * eta_m) = delta_nm``.
    """

    grid: Grid
    mu_weights: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    operator: DiscreteOperator = field(repr=False, default=None)

    @property
    def k(self):
        return self.eigenvalues.size

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def lambda1(self):
        return float(self.eigenvalues[0])

    @property
    def gap(self):
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def eta1(self):
        return self.eigenfunctions[0]

    def inner(self, f, g):
        """Discrete inner product in L^2(mu)."""
        return float(np.sum(self.mu_weights * np.asarray(f) * np.asarray(g)))

    def coefficients(self, f):
        return self.eigenfunctions @ (self.mu_weights * np.asarray(f, dtype=float))

    def header(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "grid": self.grid.metadata(),
            "right_bc": self.operator.right_bc if self.operator is not None else None,
        }

    def to_csv(self, path):
        cols = ["node", "mu_weight"] + [f"eta_{i + 1}" for i in range(self.k)]
        data = np.column_stack([self.nodes, self.mu_weights, self.eigenfunctions.T])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")

    def write(self, csv_path, json_path, extra=None):
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump({**self.header(), **(extra or {})}, fh, indent=2, sort_keys=True)


def orthonormality_residual(sol):
    gram = (sol.eigenfunctions * sol.mu_weights) @ sol.eigenfunctions.T
    return float(np.max(np.abs(gram - np.eye(sol.k))))


def solve_eigs(op, k=DEFAULT_K, check=True):
    """The ``k`` smallest eigenpairs of ``op``.

    Uses LAPACK's Sturm-sequence bisection (``stebz``) with the smallest
    admissible absolute tolerance, which resolves the small eigenvalues to
    high relative accuracy even though the largest ones are ~1/h_min^2, and
    inverse iteration (``stein``) for the vectors.

    Raises
    ------
    UsageError
        If ``k`` is not in ``[1, N/4]``.
    EigFailed
        If the solver fails or the solution violates an invariant
        (orthonormality, positivity of eta_1, strictly increasing eigenvalues).
    """
    n = op.diag.size
    if not 1 <= k <= n // 4:
        raise UsageError(f"need 1 <= k <= N/4 = {n // 4}, got k = {k}")
    dsym, esym = op.symmetric_form()
    try:
        vals, vecs = eigh_tridiagonal(
            dsym, esym, select="i", select_range=(0, k - 1),
            lapack_driver="stebz", tol=2 * np.finfo(float).tiny,
        )
    except (LinAlgError, ValueError) as exc:
        raise EigFailed(f"tridiagonal eigensolver failed: {exc}") from exc
    eta = (vecs / np.sqrt(op.mu_weights)[:, None]).T.copy()
    for i in range(k):
        nz = np.flatnonzero(eta[i])
        if nz.size and eta[i, nz[0]] < 0:
            eta[i] = -eta[i]
    if np.all(eta[0] <= 0):
        eta[0] = -eta[0]
    sol = SpectralSolution(op.grid, op.mu_weights, vals, eta, op)
    if check:
        _check_solution(sol)
    return sol


def _check_solution(sol):
    if not sol.eigenvalues[0] > 0:
        raise EigFailed(f"lambda_1 = {sol.eigenvalues[0]:.3g} is not positive", index=1)
    steps = np.diff(sol.eigenvalues)
    if np.any(steps <= 0):
        raise EigFailed("eigenvalues are not strictly increasing", index=int(np.argmin(steps)) + 2)
    if not np.all(sol.eta1 > 0):
        raise EigFailed("first eigenfunction changes sign", index=1)
    res = orthonormality_residual(sol)
    if res > 1e-8:
        raise EigFailed(f"orthonormality residual {res:.2e} exceeds 1e-8")


def solve_model(d, n=DEFAULT_N, k=DEFAULT_K, left_cut=DEFAULT_LEFT_CUT, right_cut=None, s=DEFAULT_SETTINGS):
    """Grid, operator and eigensolve in one call; ``right_cut=None`` uses :func:`auto_right_cut`."""
    if right_cut is None:
        right_cut = auto_right_cut(d, s)
    g = build_grid(d, n, left_cut, right_cut)
    return solve_eigs(assemble_operator(d, g, s=s), k)


def count_sign_changes(sol, n):
    """Strict sign changes of the n-th eigenfunction (1-based) between nodes."""
    if not 1 <= n <= sol.k:
        raise UsageError(f"n must lie in [1, {sol.k}]")
    sg = np.sign(sol.eigenfunctions[n - 1])
    sg = sg[sg != 0]
    return int(np.count_nonzero(sg[1:] != sg[:-1]))


def propagate(sol, f, t):
    """Truncated eigen-expansion of P_t f: sum_i exp(-lambda_i t) <eta_i, f> eta_i."""
    if t < 0:
        raise UsageError("t must be non-negative")
    c = sol.coefficients(f) * np.exp(-sol.eigenvalues * t)
    return c @ sol.eigenfunctions


def _node_index(sol, x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    idx = int(np.argmin(np.abs(sol.nodes - x)))
    if not np.isclose(sol.nodes[idx], x, rtol=1e-12, atol=0.0):
        raise UsageError(f"{x!r} is not a grid node")
    return idx


def survival_probability(sol, x, t):
    """P_x(T_0 > t) from the expansion of the constant function 1.

    ``x`` is a node index or a node value.
    """
    i = _node_index(sol, x)
    val = propagate(sol, np.ones(sol.grid.n), t)[i]
    return float(min(max(val, 0.0), 1.0))


@dataclass(frozen=True)
class RatioLimitReport:
    times: tuple
    lhs: tuple
    rhs: float
    rel_err: tuple

    def to_dict(self):
        return {"times": list(self.times), "lhs": list(self.lhs), "rhs": self.rhs, "rel_err": list(self.rel_err)}


def ratio_limit_check(sol, f, g, times=None):
    """Compare exp(lambda_1 t) <g, P_t f> with <eta_1, f><eta_1, g>.

    Default times are T and 2T with T = 10 / (lambda_2 - lambda_1).

    Raises
    ------
    DegenerateLimit
        If the limit is below 1e-14 in magnitude.
    """
    cf = sol.coefficients(f)
    cg = sol.coefficients(g)
    rhs = float(cf[0] * cg[0])
    if abs(rhs) < 1e-14:
        raise DegenerateLimit(f"<eta_1, f><eta_1, g> = {rhs:.3g}; the limit vanishes")
    if times is None:
        T = 10.0 / sol.gap
        times = (T, 2 * T)
    shifted = sol.eigenvalues - sol.eigenvalues[0]
    lhs = [float(np.sum(np.exp(-shifted * t) * cf * cg)) for t in times]
    rel = [abs(v - rhs) / abs(rhs) for v in lhs]
    return RatioLimitReport(tuple(float(t) for t in times), tuple(lhs), rhs, tuple(rel))


def cut_sensitivity(d, n=DEFAULT_N, k=8, left_cut=DEFAULT_LEFT_CUT, right_cut=None, s=DEFAULT_SETTINGS):
    """Relative change of lambda_1 when the left cut shrinks 10x and the right cut grows 50%."""
    if right_cut is None:
        right_cut = auto_right_cut(d, s)
    base = solve_model(d, n, k, left_cut, right_cut, s).lambda1
    left = solve_model(d, n, k, left_cut / 10.0, right_cut, s).lambda1
    right = solve_model(d, n, k, left_cut, 1.5 * right_cut, s).lambda1
    return {
        "lambda1": base,
        "left_cut_rel_change": abs(left - base) / base,
        "right_cut_rel_change": abs(right - base) / base,
    }


def richardson_lambda1(d, n=DEFAULT_N, left_cut=DEFAULT_LEFT_CUT, right_cut=None, s=DEFAULT_SETTINGS):
    """lambda_1 at n, 2n-1 and 4n-3 nodes plus the second-order Richardson value.

    Node counts 2n-1, 4n-3 halve the spacing in the grid coordinate exactly.
    """
    if right_cut is None:
        right_cut = auto_right_cut(d, s)
    sizes = (n, 2 * n - 1, 4 * n - 3)
    lams = [solve_model(d, m, 4, left_cut, right_cut, s).lambda1 for m in sizes]
    extrap = (4.0 * lams[2] - lams[1]) / 3.0
    diffs = (lams[0] - lams[1], lams[1] - lams[2])
    order = math.log2(abs(diffs[0] / diffs[1])) if diffs[1] != 0 else math.inf
    return {"sizes": sizes, "lambda1": lams, "richardson": extrap, "observed_order": order}
