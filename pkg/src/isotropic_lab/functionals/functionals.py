#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Monte Carlo estimators of scalar functionals: I_q, Z_p support and boundary points,
marginal densities at zero, negative moments by sections and c_{n,k}."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import (
    DomainError,
    UnsupportedMeasureError,
    UsageError,
    VarianceRefusalError,
)
from src.isotropic_lab.functionals.estimate import EstimateCI, power_mean
from src.isotropic_lab.measures.measures import (
    LOG_2PI,
    SQRT2,
    SQRT3,
    Family,
    LBracket,
    MeasureModel,
    log_volume_unit_ball,
)
from src.isotropic_lab.sampler.sampler import (
    SampleBatch,
    Seed,
    Subspace,
    draw,
    haar_subspace,
    ordered_map,
    sphere_directions,
)

logger = logging.getLogger(__name__)

# Upper bound on the number of entries of a (rows x directions) block held in memory
BLOCK_ENTRIES = 4_000_000


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Unit directions with probability weights discretising the uniform measure on S^{n-1}."""

    dim: int
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.directions.ndim != 2 or self.directions.shape[1] != self.dim:
            raise UsageError("Direction array does not match the grid dimension")
        if np.abs(np.linalg.norm(self.directions, axis=1) - 1.0).max() > 1e-12:
            raise UsageError("Grid directions must be unit vectors")
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise UsageError("Grid weights must be a probability vector")

    @property
    def size(self) -> int:
        return int(self.directions.shape[0])


def random_direction_grid(dim: int, count: int, seed: Seed) -> DirectionGrid:
    """Grid of ``count`` i.i.d. uniform directions with equal weights."""
    directions = sphere_directions(dim, count, seed)
    return DirectionGrid(dim, directions, np.full(count, 1.0 / count))


def _check_batch(m: MeasureModel, batch: SampleBatch) -> None:
    if batch.dim != m.dim:
        raise UsageError(f"Batch dimension {batch.dim} does not match measure dimension {m.dim}")


def _unit(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if abs(norm - 1.0) > 1e-9:
        raise UsageError(f"Direction must be a unit vector (norm {norm:.6g})")
    return theta


########################################################################################
# Moments and constants
########################################################################################


def cnk(n: int, k: int) -> float:
    """c_{n,k} = ((n-k) omega_{n-k} / (n omega_n))^{1/k}, evaluated in log space."""
    if not 1 <= k <= n - 1:
        raise UsageError(f"c_(n,k) needs 1 <= k <= n-1, got n={n}, k={k}")
    log_c = (
        math.log(n - k) + log_volume_unit_ball(n - k) - math.log(n) - log_volume_unit_ball(n)
    ) / k
    return math.exp(log_c)


def moment_Iq(m: MeasureModel, q: float, batch: SampleBatch) -> EstimateCI:
    """I_q = (E ||x||^q)^{1/q} with delta-method stderr.

    Raises:
        DomainError: q = 0 or q <= -n
        VarianceRefusalError: -n < q <= -n/2
    """
    _check_batch(m, batch)
    n = m.dim
    if q == 0 or q <= -n:
        raise DomainError(f"I_q is defined for q in (-{n}, inf) without 0, got q={q}")
    if q <= -n / 2.0:
        raise VarianceRefusalError(f"Direct I_q estimator has infinite variance at q={q} <= -n/2")
    norms = np.linalg.norm(batch.points, axis=1)
    value, stderr = power_mean(norms, q)
    return EstimateCI(value, stderr, batch.count, "mc")


def covariance(batch: SampleBatch) -> Tuple[np.ndarray, np.ndarray]:
    """Sample covariance with entrywise standard errors."""
    centred = batch.points - batch.points.mean(axis=0)
    products = centred[:, :, None] * centred[:, None, :]
    cov = products.mean(axis=0) * batch.count / max(batch.count - 1, 1)
    stderr = products.std(axis=0, ddof=1) / math.sqrt(batch.count)
    return cov, stderr


########################################################################################
# L_p-centroid bodies
########################################################################################


def support_zp_many(
    points: np.ndarray, p: float, directions: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """h_{Z_p}(theta) = (E |<x, theta>|^p)^{1/p} for each row of ``directions``.

    Reductions run over fixed row blocks so results are bit-reproducible.
    """
    directions = np.atleast_2d(directions)
    count = points.shape[0]
    rows = max(1, BLOCK_ENTRIES // max(directions.shape[0], 1))
    sums = np.zeros(directions.shape[0])
    squares = np.zeros(directions.shape[0])
    for start in range(0, count, rows):
        powered = np.abs(points[start : start + rows] @ directions.T) ** p
        sums += powered.sum(axis=0)
        squares += (powered**2).sum(axis=0)
    mean = sums / count
    var = np.maximum(squares / count - mean**2, 0.0) * count / max(count - 1, 1)
    values = mean ** (1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        stderr = np.where(mean > 0, values / (p * mean) * np.sqrt(var / count), 0.0)
    return values, stderr


def boundary_points_zp_many(points: np.ndarray, p: float, directions: np.ndarray) -> np.ndarray:
    """Touching points h^{1-p} E(|<x,theta>|^{p-1} sign<x,theta> x), one row per direction."""
    directions = np.atleast_2d(directions)
    count = points.shape[0]
    rows = max(1, BLOCK_ENTRIES // max(directions.shape[0], 1))
    weighted = np.zeros((directions.shape[0], points.shape[1]))
    for start in range(0, count, rows):
        block = points[start : start + rows]
        proj = block @ directions.T
        weights = np.sign(proj) * np.abs(proj) ** (p - 1.0)
        weighted += weights.T @ block
    h, _ = support_zp_many(points, p, directions)
    return (h ** (1.0 - p))[:, None] * weighted / count


def _check_p(p: float) -> None:
    if p < 1:
        raise DomainError(f"L_p-centroid bodies need p >= 1, got p={p}")


def support_Zp(
    m: MeasureModel,
    p: float,
    theta: np.ndarray,
    batch: SampleBatch,
    settings: Optional[EstimatorSettings] = None,
) -> EstimateCI:
    """Support function of Z_p(mu) in the unit direction theta.

    Estimates above ``settings.high_variance_p`` carry the ``high-variance`` flag.
    """
    _check_batch(m, batch)
    _check_p(p)
    theta = _unit(theta)
    settings = settings or EstimatorSettings()
    values, stderr = support_zp_many(batch.points, p, theta[None, :])
    estimate = EstimateCI(float(values[0]), float(stderr[0]), batch.count, "mc")
    if p > settings.high_variance_p:
        logger.warning("Support of Z_%g estimated from %d samples is high variance", p, batch.count)
        estimate = estimate.with_flags("high-variance")
    return estimate


def boundary_point_Zp(m: MeasureModel, p: float, theta: np.ndarray, batch: SampleBatch) -> np.ndarray:
    """Point of Z_p(mu) where the supporting hyperplane with normal theta touches."""
    _check_batch(m, batch)
    _check_p(p)
    theta = _unit(theta)
    return boundary_points_zp_many(batch.points, p, theta[None, :])[0]


########################################################################################
# Marginal densities at zero
########################################################################################


def _axis_sample(family: Family, rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    if family is Family.CUBE:
        return rng.uniform(-SQRT3, SQRT3, shape)
    return rng.laplace(0.0, 1.0 / SQRT2, shape)


def _axis_log_density(family: Family, values: np.ndarray) -> np.ndarray:
    k = values.shape[1]
    if family is Family.CUBE:
        inside = np.all(np.abs(values) <= SQRT3, axis=1)
        return np.where(inside, -k * math.log(2.0 * SQRT3), -np.inf)
    return -0.5 * k * math.log(2.0) - SQRT2 * np.abs(values).sum(axis=1)


def _conditional_density(
    m: MeasureModel, frame: np.ndarray, seed: Seed, count: int
) -> EstimateCI:
    # Solve frame^T y = 0 for a well-conditioned block S of coordinates; integrate the rest
    k = frame.shape[1]
    _, _, pivots = linalg.qr(frame.T, pivoting=True)
    solved, free = pivots[:k], pivots[k:]
    block = frame.T[:, solved]
    coupling = -np.linalg.solve(block, frame.T[:, free])
    abs_det = abs(float(np.linalg.det(block)))
    y_free = _axis_sample(m.family, seed.child("conditional").generator(), (count, free.size))
    y_solved = y_free @ coupling.T
    values = np.exp(_axis_log_density(m.family, y_solved)) / abs_det
    stderr = float(values.std(ddof=1) / math.sqrt(count))
    return EstimateCI(float(values.mean()), stderr, count, "conditional-mc")


def _radial_section_density(
    m: MeasureModel, complement: np.ndarray, seed: Seed, count: int
) -> EstimateCI:
    # |K cap E^perp| = omega_m E[rho(theta)^m] over uniform theta in the sphere of E^perp
    dim = complement.shape[1]
    density_at_zero = math.exp(-m.params["log_volume"])
    if dim == 1:
        axis = complement[:, 0]
        length = float((1.0 / m.gauge(np.vstack([axis, -axis]))).sum())
        return EstimateCI.exact(length * density_at_zero, "exact-section")
    directions = sphere_directions(dim, count, seed.child("radial")) @ complement.T
    rho_plus = 1.0 / m.gauge(directions)
    rho_minus = 1.0 / m.gauge(-directions)
    values = 0.5 * (rho_plus**dim + rho_minus**dim)
    scale = math.exp(log_volume_unit_ball(dim)) * density_at_zero
    return EstimateCI(
        float(values.mean()) * scale,
        float(values.std(ddof=1) / math.sqrt(count)) * scale,
        count,
        "radial-mc",
    )


def marginal_density_at_zero(
    m: MeasureModel,
    subspace: Subspace,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
) -> EstimateCI:
    """Density of the marginal pi_E(mu) at the origin.

    Gaussians and Euclidean balls are exact. Product families integrate the coordinates
    left free by a pivoted solve of frame^T y = 0. Other uniform bodies measure the central
    section |K cap E^perp| / |K| in polar coordinates.

    Args:
        m: Measure on R^n
        subspace: E in G_{n,k} with k < n
        seed: Stream seed for the Monte Carlo routes
        settings: Supplies ``inner_samples``

    Returns:
        EstimateCI: f_{pi_E mu}(0)
    """
    n = m.dim
    if subspace.ambient != n:
        raise UsageError(f"Subspace lives in R^{subspace.ambient}, measure in R^{n}")
    k = subspace.k
    if k >= n:
        raise UsageError("marginal_density_at_zero needs k < n (E^perp must be non-trivial)")
    seed = seed or Seed(0)
    settings = settings or EstimatorSettings()

    if m.family is Family.GAUSSIAN:
        return EstimateCI.exact(math.exp(-0.5 * k * LOG_2PI))
    if m.family is Family.MARGINAL:
        composed = Subspace.from_frame(m.params["frame"]).compose(subspace)
        return marginal_density_at_zero(m.params["base"], composed, seed, settings)
    if m.family is Family.EUCLIDEAN_BALL:
        radius = m.params["radius"]
        log_f = (
            log_volume_unit_ball(n - k)
            - log_volume_unit_ball(n)
            - k * math.log(radius)
        )
        return EstimateCI.exact(math.exp(log_f), "exact-section")
    if m.family in (Family.CUBE, Family.PRODUCT_EXPONENTIAL):
        return _conditional_density(m, subspace.frame, seed, settings.inner_samples)
    if m.is_uniform:
        return _radial_section_density(m, subspace.complement_frame(), seed, settings.inner_samples)
    raise UnsupportedMeasureError(f"No marginal density estimator for {m.tag}")


def I_negk_via_sections(
    m: MeasureModel,
    k: int,
    subspace_count: int,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> EstimateCI:
    """I_{-k} = c_{n,k} (average over Haar E in G_{n,k} of f_{pi_E mu}(0))^{-1/k}.

    Stderr by the delta method over the subspace draws. With one subspace the stderr is
    that of its density alone, which misses the spread over E; the estimate is flagged
    ``single-subspace``.
    """
    n = m.dim
    if not 1 <= k <= n - 1:
        raise UsageError(f"Section formula needs 1 <= k <= n-1, got k={k}, n={n}")
    if subspace_count < 1:
        raise UsageError("subspace_count must be positive")
    settings = settings or EstimatorSettings()

    def evaluate(j: int) -> EstimateCI:
        subspace = haar_subspace(n, k, seed.child("section-subspace", j))
        return marginal_density_at_zero(m, subspace, seed.child("section-density", j), settings)

    densities = ordered_map(evaluate, range(subspace_count), settings.threads)
    values = np.array([d.value for d in densities])
    mean = float(values.mean())
    flags: Tuple[str, ...] = ()
    if subspace_count > 1:
        stderr_mean = float(values.std(ddof=1) / math.sqrt(subspace_count))
    else:
        stderr_mean = densities[0].stderr
        flags = ("single-subspace",)
    if mean <= 0:
        raise UnsupportedMeasureError(f"Average section density of {m.tag} is not positive")
    c = cnk(n, k)
    value = c * mean ** (-1.0 / k)
    stderr = value * stderr_mean / (k * mean)
    logger.info("I_-%d of %s by sections: %.6g +/- %.2g", k, m.tag, value, stderr)
    return EstimateCI(value, stderr, subspace_count, "sections", flags)


def marginal_L_surrogate(
    m: MeasureModel,
    subspace: Subspace,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
) -> LBracket:
    """Fradelizi bracket [f^{1/k}, e f^{1/k}] of the isotropic constant of pi_E(mu).

    For a non-isotropic base the bracket is scaled by det Cov(pi_E mu)^{1/(2k)}.
    """
    seed = seed or Seed(0)
    settings = settings or EstimatorSettings()
    k = subspace.k
    density = marginal_density_at_zero(m, subspace, seed, settings)
    if density.value <= 0:
        raise UnsupportedMeasureError("Marginal density vanishes at the origin")
    log_det = 0.0
    if not m.isotropic:
        batch = draw(m, settings.samples, seed.child("marginal-cov"), settings)
        projected = batch.points @ subspace.frame
        log_det = float(np.linalg.slogdet(np.cov(projected, rowvar=False).reshape(k, k))[1])
    scale = math.exp(log_det / (2.0 * k))
    lo = density.value ** (1.0 / k) * scale
    exact = None
    if m.family is Family.GAUSSIAN and m.isotropic:
        exact = 1.0 / math.sqrt(2.0 * math.pi)
    return LBracket(
        lo=lo,
        hi=math.e * lo,
        exact=exact,
        stderr=lo * density.stderr / (k * density.value),
        log_det_cov=log_det,
    )
