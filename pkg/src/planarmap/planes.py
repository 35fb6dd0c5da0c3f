"""Plane sufficient statistics, incremental covariance update, PCA normal
fit, range-uncertainty propagation, and the three-way relative position
classification.

A plane is summarized by (n, centroid, scatter): the raw sample list is never
stored. The scatter is the population covariance of all absorbed points plus
an optional accumulated per-point covariance term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegeneratePlane, GrazingRay
from .geometry import Ray

COS_GRAZING = 0.0175  # |n.l| at ~89 deg incidence

_Z3 = np.zeros((3, 3))


@dataclass
class PlaneStats:
    """Count, centroid and scatter covariance of the absorbed samples."""
    n: int = 0
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scatter: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def copy(self) -> "PlaneStats":
        return PlaneStats(self.n, self.centroid.copy(), self.scatter.copy())


@dataclass
class Plane:
    """Surface patch parameterized by a position and a unit normal."""
    p: np.ndarray
    normal: np.ndarray


@dataclass
class SensorNoiseModel:
    """Per-measurement covariances feeding the range-uncertainty model.

    sigma_noise is the range-axis standard deviation; the matrix terms default
    to zero (poses treated as ground truth, endpoint noise carried by
    sigma_noise alone).
    """
    sigma_noise: float = 0.01
    cov_origin: np.ndarray = field(default_factory=lambda: _Z3.copy())
    cov_dir: np.ndarray = field(default_factory=lambda: _Z3.copy())
    cov_point: np.ndarray = field(default_factory=lambda: _Z3.copy())


@dataclass
class RangeModel:
    """Expected range with its variance budget, term by term."""
    mu: float
    sigma: float
    var_p: float
    var_o: float
    var_n: float
    var_l: float
    var_noise: float


class RelPos(Enum):
    FRONT = "front"
    WITHIN = "within"
    BEHIND = "behind"


@dataclass
class PositionClass:
    rel: RelPos
    z: float


def update_stats(stats: PlaneStats, lp, cov_point: np.ndarray | None = None
                 ) -> PlaneStats:
    """Absorb one sample into (n, centroid, scatter) incrementally.

    With cov_point zero the returned scatter equals the batch population
    covariance of all absorbed points, for any insertion order.
    """
    lp = np.asarray(lp, dtype=np.float64)
    n = stats.n
    mu = (lp + n * stats.centroid) / (1.0 + n)
    dp = stats.centroid - mu
    dlp = lp - mu
    scatter = n * stats.scatter + n * np.outer(dp, dp) + np.outer(dlp, dlp)
    if cov_point is not None:
        scatter = scatter + cov_point
    scatter /= (1.0 + n)
    return PlaneStats(n + 1, mu, scatter)


def eig_scatter(scatter: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and eigenvectors of a symmetric scatter."""
    w, v = np.linalg.eigh(scatter)
    return w, v


def is_degenerate(eigvals: np.ndarray) -> bool:
    eps = 1e-8 * max(float(eigvals.sum()), 1e-300)
    return float(eigvals[1] - eigvals[0]) <= eps


def fit_normal(scatter: np.ndarray, centroid, toward,
               eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Unit smallest-eigenvector normal, oriented toward the sensor side.

    Raises DegeneratePlane when the two smallest eigenvalues are not
    separated (caller keeps its previous normal).
    """
    w, v = eig if eig is not None else eig_scatter(scatter)
    if is_degenerate(w):
        raise DegeneratePlane("no isolated smallest eigenvalue")
    n = v[:, 0]
    side = float(n @ (np.asarray(toward, float) - np.asarray(centroid, float)))
    if side < 0.0:
        n = -n
    return n / math.sqrt(float(n @ n))


def expected_range(plane: Plane, ray: Ray,
                   cos_grazing: float = COS_GRAZING) -> float:
    """Range at which the ray meets the plane; may be negative (plane behind
    the sensor), the caller classifies."""
    ndotl = float(plane.normal @ ray.dir)
    if abs(ndotl) <= cos_grazing:
        raise GrazingRay(f"|n.l| = {abs(ndotl):.5f}")
    return float((plane.p - ray.origin) @ plane.normal) / ndotl


def param_uncertainty(stats: PlaneStats,
                      eig: tuple[np.ndarray, np.ndarray] | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Parameter covariances of the fitted centroid and normal.

    Centroid: covariance of the sample mean, scatter / n. Normal:
    first-order eigenvector perturbation over the two in-plane eigenpairs.
    Both shrink as 1/n.
    """
    if stats.n < 3:
        raise DegeneratePlane("need at least 3 samples")
    w, v = eig if eig is not None else eig_scatter(stats.scatter)
    if is_degenerate(w):
        raise DegeneratePlane("no isolated smallest eigenvalue")
    n = stats.n
    cov_p = stats.scatter / n
    lam0 = float(w[0])
    cov_n = np.zeros((3, 3))
    for i in (1, 2):
        lam = float(w[i])
        coef = lam0 * lam / (n * (lam - lam0) ** 2)
        cov_n += coef * np.outer(v[:, i], v[:, i])
    return cov_p, cov_n


def range_sigma(plane: Plane, stats: PlaneStats, ray: Ray,
                noise: SensorNoiseModel,
                eig: tuple[np.ndarray, np.ndarray] | None = None,
                cos_grazing: float = COS_GRAZING) -> RangeModel:
    """Expected range and its standard deviation from first-order
    propagation of plane, pose and sensor uncertainties.

    Each variance term is J Sigma J^T for the respective Jacobian of the
    expected range:

        J_p =  n / (n.l)           J_n = (lp - o)/(n.l) - mu l/(n.l)
        J_o = -n / (n.l)           J_l = -mu n / (n.l)
    """
    nrm = plane.normal
    ndotl = float(nrm @ ray.dir)
    if abs(ndotl) <= cos_grazing:
        raise GrazingRay(f"|n.l| = {abs(ndotl):.5f}")
    mu = float((plane.p - ray.origin) @ nrm) / ndotl

    cov_p, cov_n = param_uncertainty(stats, eig=eig)
    j_p = nrm / ndotl
    j_o = -j_p
    j_n = (ray.endpoint - ray.origin) / ndotl - (mu / ndotl) * ray.dir
    j_l = (-mu / ndotl) * nrm

    var_p = float(j_p @ cov_p @ j_p)
    var_o = float(j_o @ noise.cov_origin @ j_o)
    var_n = float(j_n @ cov_n @ j_n)
    var_l = float(j_l @ noise.cov_dir @ j_l)
    var_noise = noise.sigma_noise ** 2
    sigma = math.sqrt(var_p + var_o + var_n + var_l + var_noise)
    return RangeModel(mu, sigma, var_p, var_o, var_n, var_l, var_noise)


def classify(d: float, model: RangeModel, z_crit: float = 1.96) -> PositionClass:
    """Z-score hypothesis test: front / within / behind at the critical value."""
    z = (d - model.mu) / model.sigma
    if z < -z_crit:
        rel = RelPos.FRONT
    elif z > z_crit:
        rel = RelPos.BEHIND
    else:
        rel = RelPos.WITHIN
    return PositionClass(rel, z)
