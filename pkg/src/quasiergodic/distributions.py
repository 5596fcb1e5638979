"""Quasi-stationary and quasi-ergodic distributions on the spectral grid.

With the principal eigenfunction eta_1 normalized in L^2(mu):

* the quasi-ergodic distribution nu_1 has density eta_1**2 against mu,
* the quasi-stationary (Yaglom) distribution nu_2 has density proportional
  to eta_1 against mu.

Measures are node-weight vectors. Each one optionally carries the cell faces
of its grid so that it can be transferred to another grid by proportional
(length-overlap) allocation.
"""
from dataclasses import dataclass
import csv

import numpy as np

from .errors import MeasureMismatch, UsageError

__all__ = [
    "DiscreteMeasure",
    "qed_measure",
    "qsd_measure",
    "qed_raw_total",
    "tv_distance",
    "moment",
    "pushforward_to_Y",
    "rebin",
    "transfer",
    "equal_mass_blocks",
    "coarsen",
    "coarse_tv",
    "doob_stationarity_residual",
]

_COORDS = ("X", "Y")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability weights on increasing positive nodes.

    ``faces`` (length ``n + 1``), when given, delimits the cell of each node.
    """

    nodes: np.ndarray
    weights: np.ndarray
    coordinate: str = "X"
    faces: np.ndarray = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != w.shape or nodes.size == 0:
            raise UsageError("nodes and weights must be 1-d arrays of equal length")
        if self.coordinate not in _COORDS:
            raise UsageError(f"coordinate must be one of {_COORDS}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UsageError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise UsageError(f"weights sum to {w.sum():.15g}, not 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)
        if self.faces is not None:
            f = np.asarray(self.faces, dtype=float)
            if f.shape != (nodes.size + 1,):
                raise UsageError("faces must have one more entry than nodes")
            object.__setattr__(self, "faces", f)

    @classmethod
    def from_masses(cls, nodes, masses, coordinate="X", faces=None):
        """Normalize non-negative masses into a measure."""
        m = np.asarray(masses, dtype=float)
        total = m.sum()
        if not total > 0:
            raise UsageError("total mass must be positive")
        w = m / total
        w /= w.sum()
        return cls(nodes, w, coordinate, faces)

    @classmethod
    def point_mass(cls, x, coordinate="X"):
        return cls(np.array([float(x)]), np.array([1.0]), coordinate)

    def mean(self):
        return moment(self, 1)

    def cdf(self):
        return np.cumsum(self.weights)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["node", "weight", "coordinate"])
            for x, w in zip(self.nodes, self.weights):
                wr.writerow([repr(float(x)), repr(float(w)), self.coordinate])


def qed_raw_total(sol):
    """sum_i w_i eta_1(x_i)**2 before normalization (1 up to solver round-off)."""
    return float(np.sum(sol.eta1 ** 2 * sol.mu_weights))


def qed_measure(sol):
    """nu_1 with weights proportional to eta_1(x_i)**2 w_i."""
    return DiscreteMeasure.from_masses(sol.nodes, sol.eta1 ** 2 * sol.mu_weights, "X", sol.grid.faces)


def qsd_measure(sol):
    """nu_2 with weights proportional to eta_1(x_i) w_i."""
    return DiscreteMeasure.from_masses(sol.nodes, sol.eta1 * sol.mu_weights, "X", sol.grid.faces)


def _check_compatible(a, b):
    if a.coordinate != b.coordinate:
        raise MeasureMismatch(f"coordinate tags differ: {a.coordinate} vs {b.coordinate}")
    if a.nodes.shape != b.nodes.shape or not np.array_equal(a.nodes, b.nodes):
        raise MeasureMismatch("measures live on different nodes; re-bin first")


def tv_distance(a, b):
    """Total-variation distance 0.5 * sum |a_i - b_i| on a common support."""
    _check_compatible(a, b)
    return float(min(1.0, 0.5 * np.abs(a.weights - b.weights).sum()))


def moment(m, p):
    if int(p) != p or p < 1:
        raise UsageError("moment order must be a positive integer")
    return float(np.sum(m.weights * m.nodes ** int(p)))


def pushforward_to_Y(m, gamma):
    """Image of an X-coordinate measure under y = gamma x**2 / 4."""
    if m.coordinate != "X":
        raise MeasureMismatch("pushforward_to_Y needs an X-coordinate measure")
    if not gamma > 0:
        raise UsageError("gamma must be positive")
    faces = None if m.faces is None else gamma * m.faces ** 2 / 4.0
    return DiscreteMeasure(gamma * m.nodes ** 2 / 4.0, m.weights.copy(), "Y", faces)


def rebin(masses, src_faces, dst_faces):
    """Proportional allocation of cell masses onto new cells.

    Mass is spread uniformly (in length) over each source cell; mass outside
    the destination range goes to the nearest end cell, so totals are kept.
    """
    masses = np.asarray(masses, dtype=float)
    src_faces = np.asarray(src_faces, dtype=float)
    dst_faces = np.asarray(dst_faces, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    at = np.interp(dst_faces, src_faces, cum)
    out = np.diff(at)
    out[0] += at[0]
    out[-1] += cum[-1] - at[-1]
    return np.maximum(out, 0.0)


def transfer(m, nodes, faces):
    """Move ``m`` (which must carry faces) onto the cells ``faces`` around ``nodes``."""
    if m.faces is None:
        raise MeasureMismatch("source measure carries no cell faces")
    return DiscreteMeasure.from_masses(nodes, rebin(m.weights, m.faces, faces), m.coordinate, faces)


def equal_mass_blocks(ref, nbins):
    """Split node indices into ``nbins`` contiguous blocks of about equal ``ref`` mass.

    Returns index boundaries ``b`` with ``b[0] = 0`` and ``b[-1] = n``.
    """
    if nbins < 1:
        raise UsageError("need at least one bin")
    cdf = ref.cdf()
    cuts = np.searchsorted(cdf, np.arange(1, nbins) / nbins, side="left") + 1
    bounds = np.unique(np.concatenate(([0], np.clip(cuts, 1, ref.nodes.size - 1), [ref.nodes.size])))
    return bounds


def coarsen(m, bounds):
    """Sum weights over index blocks; block nodes are the block midpoints."""
    bounds = np.asarray(bounds)
    sums = np.add.reduceat(m.weights, bounds[:-1])
    mids = 0.5 * (m.nodes[bounds[:-1]] + m.nodes[bounds[1:] - 1])
    faces = None if m.faces is None else m.faces[bounds]
    return DiscreteMeasure.from_masses(mids, sums, m.coordinate, faces)


def coarse_tv(a, b, ref=None, nbins=16):
    """TV distance after merging nodes into ``nbins`` equal-mass blocks of ``ref``.

    Monte Carlo histograms on a fine grid carry sampling noise in every cell;
    merging into a few blocks keeps the distance a measure of shape rather
    than of noise.
    """
    _check_compatible(a, b)
    bounds = equal_mass_blocks(ref if ref is not None else a, nbins)
    return tv_distance(coarsen(a, bounds), coarsen(b, bounds))


def doob_stationarity_residual(sol, nu=None):
    """Scaled residual of nu^T G, G = D^{-1} (lambda_1 I - A) D, D = diag(eta_1).

    G is the generator of the chain conditioned never to be absorbed; its
    rows sum to zero. The result is ``max_j |(nu^T G)_j| / max_j sum_i nu_i |G_ij|``.
    """
    op = sol.operator
    if nu is None:
        nu = qed_measure(sol)
    eta = sol.eta1
    lam = sol.lambda1
    p = nu.weights
    gd = lam - op.diag
    gu = -op.upper * eta[1:] / eta[:-1]
    gl = -op.lower * eta[:-1] / eta[1:]
    flux = p * gd
    flux[1:] += p[:-1] * gu
    flux[:-1] += p[1:] * gl
    scale = p * np.abs(gd)
    scale[1:] += p[:-1] * np.abs(gu)
    scale[:-1] += p[1:] * np.abs(gl)
    return float(np.max(np.abs(flux)) / np.max(scale))
