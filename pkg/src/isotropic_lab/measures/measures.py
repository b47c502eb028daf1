#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Log-concave measure families, densities, analytic profiles and isotropization."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np
from scipy import linalg, optimize
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.special import gammaln

from src.isotropic_lab.errors import (
    DegenerateMeasureError,
    UnsupportedMeasureError,
    UsageError,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
LOG_2PI = math.log(2.0 * math.pi)

# Relative slack used when testing membership of boundary points
_SUPPORT_TOL = 1e-12


class Family(str, Enum):
    """Shipped measure families."""

    GAUSSIAN = "gaussian"
    CUBE = "cube"
    EUCLIDEAN_BALL = "euclidean-ball"
    L1_BALL = "l1-ball"
    PRODUCT_EXPONENTIAL = "product-exponential"
    SIMPLEX = "simplex"
    HPOLY_BODY = "hpoly-body"
    MARGINAL = "marginal"


UNIFORM_FAMILIES = frozenset(
    {Family.CUBE, Family.EUCLIDEAN_BALL, Family.L1_BALL, Family.SIMPLEX, Family.HPOLY_BODY}
)
PRODUCT_FAMILIES = frozenset({Family.CUBE, Family.PRODUCT_EXPONENTIAL})


def log_volume_unit_ball(n: int) -> float:
    """log of omega_n = pi^{n/2} / Gamma(n/2 + 1)."""
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


@dataclass(frozen=True)
class AnalyticProfile:
    """Closed-form evaluators; every field is optional.

    ``log_laplace`` accepts an ``(m, n)`` array of points and returns ``m`` values.
    """

    log_density_at_0: Optional[float] = None
    sup_norm_per_dim: Optional[float] = None
    moment_iq: Optional[Callable[[float], float]] = None
    zp_radius: Optional[Callable[[float], float]] = None
    log_laplace: Optional[Callable[[np.ndarray], np.ndarray]] = None
    laplace_domain_radius_per_axis: Optional[float] = None


@dataclass(frozen=True)
class LinearImage:
    """Affine map T(x) = map (x - shift)."""

    shift: np.ndarray
    map: np.ndarray
    log_det: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.shift) @ self.map.T


@dataclass(frozen=True)
class LBracket:
    """Fradelizi bracket [lo, e*lo] of a per-dimension isotropic constant."""

    lo: float
    hi: float
    exact: Optional[float] = None
    stderr: float = 0.0
    log_det_cov: float = 0.0

    @property
    def midpoint(self) -> float:
        """Geometric midpoint of the bracket."""
        return math.sqrt(self.lo * self.hi)

    def contains(self, value: float, tol: float = 1e-12) -> bool:
        return self.lo * (1 - tol) <= value <= self.hi * (1 + tol)


@dataclass(frozen=True, eq=False)
class MeasureModel:
    """An immutable log-concave probability measure on R^dim.

    ``params`` holds family data: the halfspace system of polytopes, the radius of balls,
    the base measure and frame of marginals.
    """

    family: Family
    dim: int
    params: Mapping[str, Any] = field(default_factory=dict)
    profile: Optional[AnalyticProfile] = None
    isotropic: bool = True
    label: str = ""

    @property
    def tag(self) -> str:
        return self.label or f"{self.family.value}:{self.dim}"

    @property
    def is_uniform(self) -> bool:
        return self.family in UNIFORM_FAMILIES

    ####################################################################################
    # Density
    ####################################################################################

    def log_density(self, points: np.ndarray) -> np.ndarray:
        """Vectorised log f at the rows of ``points``; ``-inf`` outside the support."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.dim:
            raise UsageError(f"Points have dimension {x.shape[1]}, measure has {self.dim}")
        n = self.dim
        if self.family is Family.GAUSSIAN:
            return -0.5 * n * LOG_2PI - 0.5 * np.einsum("ij,ij->i", x, x)
        if self.family is Family.PRODUCT_EXPONENTIAL:
            return -0.5 * n * math.log(2.0) - SQRT2 * np.abs(x).sum(axis=1)
        if self.is_uniform:
            inside = self.gauge(x) <= 1.0 + _SUPPORT_TOL
            return np.where(inside, -self.params["log_volume"], -np.inf)
        raise UnsupportedMeasureError(
            f"No pointwise density for {self.tag}; use marginal_density_at_zero"
        )

    def gauge(self, points: np.ndarray) -> np.ndarray:
        """Minkowski functional of a uniform body at the rows of ``points``."""
        y = np.atleast_2d(np.asarray(points, dtype=float))
        if self.family is Family.CUBE:
            return np.abs(y).max(axis=1) / SQRT3
        if self.family is Family.EUCLIDEAN_BALL:
            return np.linalg.norm(y, axis=1) / self.params["radius"]
        if self.family is Family.L1_BALL:
            return np.abs(y).sum(axis=1) / self.params["radius"]
        if self.family in (Family.SIMPLEX, Family.HPOLY_BODY):
            ratios = (y @ self.params["A"].T) / self.params["b"]
            return np.maximum(ratios.max(axis=1), 0.0)
        raise UnsupportedMeasureError(f"{self.tag} is not a uniform measure on a body")

    def support_value(self, x: np.ndarray) -> float:
        """Support function h_K(x) = sup over the support of <z, x>; inf if unbounded."""
        x = np.asarray(x, dtype=float)
        if self.family is Family.CUBE:
            return SQRT3 * float(np.abs(x).sum())
        if self.family is Family.EUCLIDEAN_BALL:
            return self.params["radius"] * float(np.linalg.norm(x))
        if self.family is Family.L1_BALL:
            return self.params["radius"] * float(np.abs(x).max())
        if self.family in (Family.SIMPLEX, Family.HPOLY_BODY):
            return float((self.params["vertices"] @ x).max())
        return math.inf

    @property
    def bounding_radius(self) -> float:
        """Radius of a centred ball containing the support (inf for unbounded families)."""
        if self.family is Family.CUBE:
            return SQRT3 * math.sqrt(self.dim)
        if self.family in (Family.EUCLIDEAN_BALL, Family.L1_BALL):
            return float(self.params["radius"])
        if self.family in (Family.SIMPLEX, Family.HPOLY_BODY):
            return float(np.linalg.norm(self.params["vertices"], axis=1).max())
        return math.inf

    ####################################################################################
    # Laplace domain
    ####################################################################################

    def in_laplace_domain(self, xi: np.ndarray) -> bool:
        """True when the logarithmic Laplace transform is finite at ``xi``."""
        xi = np.asarray(xi, dtype=float)
        if self.family is Family.MARGINAL:
            return self.params["base"].in_laplace_domain(self.params["frame"] @ xi)
        radius = self.profile.laplace_domain_radius_per_axis if self.profile else None
        if radius is None:
            return True
        return bool(np.all(np.abs(xi) < radius))

    def laplace_ray_limit(self, theta: np.ndarray) -> float:
        """Largest t such that t*theta stays in the Laplace domain (open end)."""
        theta = np.asarray(theta, dtype=float)
        if self.family is Family.MARGINAL:
            return self.params["base"].laplace_ray_limit(self.params["frame"] @ theta)
        radius = self.profile.laplace_domain_radius_per_axis if self.profile else None
        if radius is None:
            return math.inf
        peak = float(np.abs(theta).max())
        return math.inf if peak == 0.0 else radius / peak


########################################################################################
# Closed forms
########################################################################################


def _gaussian_profile(n: int) -> AnalyticProfile:
    def moment_iq(q: float) -> float:
        return SQRT2 * math.exp((gammaln(0.5 * (n + q)) - gammaln(0.5 * n)) / q)

    def zp_radius(p: float) -> float:
        return SQRT2 * math.exp((gammaln(0.5 * (p + 1.0)) - 0.5 * math.log(math.pi)) / p)

    def log_laplace(xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        return 0.5 * np.einsum("ij,ij->i", xi, xi)

    return AnalyticProfile(
        log_density_at_0=-0.5 * n * LOG_2PI,
        sup_norm_per_dim=1.0 / math.sqrt(2.0 * math.pi),
        moment_iq=moment_iq,
        zp_radius=zp_radius,
        log_laplace=log_laplace,
    )


def _cube_log_laplace(xi: np.ndarray) -> np.ndarray:
    a = SQRT3 * np.abs(np.atleast_2d(xi))
    safe = np.where(a > 0, a, 1.0)
    terms = np.where(a > 0, safe + np.log1p(-np.exp(-2.0 * safe)) - np.log(2.0 * safe), 0.0)
    return terms.sum(axis=1)


def _product_exponential_log_laplace(xi: np.ndarray) -> np.ndarray:
    xi = np.atleast_2d(xi)
    inside = np.all(np.abs(xi) < SQRT2, axis=1)
    clipped = np.where(np.abs(xi) < SQRT2, xi, 0.0)
    values = -np.log1p(-0.5 * clipped**2).sum(axis=1)
    return np.where(inside, values, np.inf)


def _uniform_profile(n: int, log_volume: float, **extra) -> AnalyticProfile:
    # A centred uniform measure attains its sup norm at the origin
    return AnalyticProfile(
        log_density_at_0=-log_volume,
        sup_norm_per_dim=math.exp(-log_volume / n),
        **extra,
    )


########################################################################################
# Constructors
########################################################################################


def _check_dim(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise UsageError(f"Dimension must be a positive integer, got {n!r}")
    if n > 64:
        raise UsageError("Dimensions above 64 are not supported")


def gaussian(n: int) -> MeasureModel:
    """Standard gaussian measure on R^n."""
    _check_dim(n)
    return MeasureModel(Family.GAUSSIAN, int(n), {}, _gaussian_profile(n))


def cube(n: int) -> MeasureModel:
    """Uniform measure on [-sqrt 3, sqrt 3]^n (unit coordinate variance)."""
    _check_dim(n)
    log_volume = n * math.log(2.0 * SQRT3)
    profile = _uniform_profile(n, log_volume, log_laplace=_cube_log_laplace)
    return MeasureModel(Family.CUBE, int(n), {"log_volume": log_volume}, profile)


def euclidean_ball(n: int) -> MeasureModel:
    """Uniform measure on the ball of radius sqrt(n + 2)."""
    _check_dim(n)
    radius = math.sqrt(n + 2.0)
    log_volume = log_volume_unit_ball(n) + n * math.log(radius)

    def moment_iq(q: float) -> float:
        return radius * (n / (n + q)) ** (1.0 / q)

    def zp_radius(p: float) -> float:
        log_moment = (
            p * math.log(radius)
            + gammaln(0.5 * (p + 1.0))
            + gammaln(0.5 * n + 1.0)
            - 0.5 * math.log(math.pi)
            - gammaln(0.5 * (n + p) + 1.0)
        )
        return math.exp(log_moment / p)

    profile = _uniform_profile(n, log_volume, moment_iq=moment_iq, zp_radius=zp_radius)
    params = {"radius": radius, "log_volume": log_volume}
    return MeasureModel(Family.EUCLIDEAN_BALL, int(n), params, profile)


def l1_ball(n: int) -> MeasureModel:
    """Uniform measure on r B_1^n with r chosen so each coordinate has unit variance."""
    _check_dim(n)
    radius = math.sqrt(0.5 * (n + 1.0) * (n + 2.0))
    log_volume = n * math.log(2.0 * radius) - float(gammaln(n + 1.0))
    params = {"radius": radius, "log_volume": log_volume}
    return MeasureModel(Family.L1_BALL, int(n), params, _uniform_profile(n, log_volume))


def product_exponential(n: int) -> MeasureModel:
    """Product of symmetric Laplace laws with rate sqrt 2 (unit variance)."""
    _check_dim(n)
    profile = AnalyticProfile(
        log_density_at_0=-0.5 * n * math.log(2.0),
        sup_norm_per_dim=1.0 / SQRT2,
        log_laplace=_product_exponential_log_laplace,
        laplace_domain_radius_per_axis=SQRT2,
    )
    return MeasureModel(Family.PRODUCT_EXPONENTIAL, int(n), {}, profile)


def simplex(n: int) -> MeasureModel:
    """Uniform measure on the regular simplex in isotropic position."""
    _check_dim(n)
    scale = math.sqrt((n + 1.0) * (n + 2.0))
    basis = linalg.null_space(np.ones((1, n + 1)))
    A = -basis
    b = np.full(n + 1, scale / (n + 1.0))
    vertices = scale * basis
    log_volume = n * math.log(scale) + 0.5 * math.log(n + 1.0) - float(gammaln(n + 1.0))
    params = {
        "A": A,
        "b": b,
        "vertices": vertices,
        "basis": basis,
        "scale": scale,
        "log_volume": log_volume,
    }
    return MeasureModel(Family.SIMPLEX, int(n), params, _uniform_profile(n, log_volume))


def _check_bounded(A: np.ndarray, b: np.ndarray) -> None:
    n = A.shape[1]
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            result = optimize.linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if result.status == 3:
                raise UsageError("Halfspace system does not describe a bounded body")
            if result.status != 0:
                raise DegenerateMeasureError(f"Could not analyse halfspace system: {result.message}")


def polytope_geometry(A: np.ndarray, b: np.ndarray) -> Dict[str, Any]:
    """Vertices and exact volume of {x : A x <= b} for b > 0.

    Args:
        A: (m, n) outer normals
        b: (m,) positive offsets

    Returns:
        Dict with ``vertices`` and ``log_volume``
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise UsageError("Halfspace matrix and offsets have inconsistent shapes")
    if np.any(b <= 0):
        raise UsageError("The origin must be interior: every offset b must be positive")
    n = A.shape[1]
    _check_bounded(A, b)
    if n == 1:
        a = A[:, 0]
        upper = float(np.min(b[a > 0] / a[a > 0]))
        lower = float(np.max(b[a < 0] / a[a < 0]))
        vertices = np.array([[lower], [upper]])
        return {"vertices": vertices, "log_volume": math.log(upper - lower)}
    halfspaces = np.hstack([A, -b[:, None]])
    intersection = HalfspaceIntersection(halfspaces, np.zeros(n))
    vertices = intersection.intersections
    hull = ConvexHull(vertices)
    return {"vertices": vertices[hull.vertices], "log_volume": math.log(hull.volume)}


def hpoly_body(A: np.ndarray, b: np.ndarray, isotropic: bool = False, label: str = "") -> MeasureModel:
    """Uniform measure on the polytope {x : A x <= b}.

    Args:
        A: (m, n) outer normals
        b: (m,) positive offsets; the origin must be interior
        isotropic: Whether the body is known to be in isotropic position
        label: Spec string echoed in reports

    Returns:
        MeasureModel: The uniform measure
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[1]
    _check_dim(n)
    geometry = polytope_geometry(A, b)
    params = {"A": A, "b": b, **geometry}
    # Sup norm is left unset so the isotropic constant is always reported as a bracket
    profile = AnalyticProfile(log_density_at_0=-geometry["log_volume"])
    logger.info("Built polytope with %d facets in dimension %d", A.shape[0], n)
    return MeasureModel(Family.HPOLY_BODY, n, params, profile, isotropic, label)


def transform_hpoly(m: MeasureModel, image: LinearImage, isotropic: bool = True) -> MeasureModel:
    """Push a polytope measure through an affine image T(x) = M (x - s)."""
    if m.family is not Family.HPOLY_BODY:
        raise UnsupportedMeasureError("Only polytope measures can be transformed in place")
    A = m.params["A"]
    b = m.params["b"]
    new_A = A @ np.linalg.inv(image.map)
    new_b = b - A @ image.shift
    return hpoly_body(new_A, new_b, isotropic=isotropic, label=m.label)


def marginal_of(m: MeasureModel, subspace: Any) -> MeasureModel:
    """The marginal pi_E(m) as a measure on R^k in the coordinates of the frame of E.

    Args:
        m: Base measure
        subspace: Subspace or (n, k) orthonormal frame

    Returns:
        MeasureModel: Gaussian marginals are returned as gaussians; marginals of marginals
        are flattened onto the composed frame.
    """
    frame = np.asarray(getattr(subspace, "frame", subspace), dtype=float)
    if frame.ndim != 2 or frame.shape[0] != m.dim or not 1 <= frame.shape[1] <= m.dim:
        raise UsageError(f"Frame of shape {frame.shape} does not fit dimension {m.dim}")
    k = frame.shape[1]
    if m.family is Family.GAUSSIAN:
        return gaussian(k)
    if m.family is Family.MARGINAL:
        return marginal_of(m.params["base"], m.params["frame"] @ frame)

    profile = None
    base_profile = m.profile
    if base_profile is not None and base_profile.log_laplace is not None:
        base_log_laplace = base_profile.log_laplace

        def log_laplace(xi: np.ndarray) -> np.ndarray:
            return base_log_laplace(np.atleast_2d(xi) @ frame.T)

        profile = AnalyticProfile(log_laplace=log_laplace)
    params = {"base": m, "frame": frame}
    label = f"marginal[{k}]({m.tag})"
    return MeasureModel(Family.MARGINAL, k, params, profile, m.isotropic, label)


def build_measure(family: str, dim: int) -> MeasureModel:
    """Construct a shipped family by name."""
    constructors = {
        Family.GAUSSIAN: gaussian,
        Family.CUBE: cube,
        Family.EUCLIDEAN_BALL: euclidean_ball,
        Family.L1_BALL: l1_ball,
        Family.PRODUCT_EXPONENTIAL: product_exponential,
        Family.SIMPLEX: simplex,
    }
    try:
        key = Family(family)
    except ValueError as e:
        raise UsageError(f"Unknown measure family: {family}") from e
    if key not in constructors:
        raise UsageError(f"Family {family} needs explicit parameters")
    return constructors[key](dim)


########################################################################################
# Operations
########################################################################################


def density_at(m: MeasureModel, x: np.ndarray) -> float:
    """Density f_mu(x); zero outside the support.

    Args:
        m: The measure
        x: Point of dimension m.dim

    Returns:
        float: Non-negative density value
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != m.dim:
        raise UsageError(f"Point has shape {x.shape}, expected ({m.dim},)")
    return float(np.exp(m.log_density(x[None, :])[0]))


def isotropize(samples: Any) -> LinearImage:
    """Affine map sending the empirical law of ``samples`` to isotropic position.

    Args:
        samples: SampleBatch or (count, n) array

    Returns:
        LinearImage: shift = sample mean, map = inverse square root of sample covariance

    Raises:
        DegenerateMeasureError: Fewer than 10 n^2 samples or singular covariance
    """
    points = np.asarray(getattr(samples, "points", samples), dtype=float)
    count, n = points.shape
    if count < 10 * n * n:
        raise DegenerateMeasureError(
            f"{count} samples cannot estimate a covariance in dimension {n} (need {10 * n * n})"
        )
    shift = points.mean(axis=0)
    cov = np.cov(points, rowvar=False).reshape(n, n)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
        raise DegenerateMeasureError("Sample covariance is singular")
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    log_det = -0.5 * float(np.log(eigvals).sum())
    return LinearImage(shift=shift, map=inv_sqrt, log_det=log_det)
