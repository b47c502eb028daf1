#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Convex bodies exposed through support functions: Z_p bodies, mean widths and volumes."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import (
    DomainError,
    ScaleRefusalError,
    UnsupportedMeasureError,
    UsageError,
)
from src.isotropic_lab.functionals.estimate import EstimateCI, power_mean
from src.isotropic_lab.functionals.functionals import (
    DirectionGrid,
    boundary_points_zp_many,
    support_zp_many,
)
from src.isotropic_lab.measures.measures import Family, MeasureModel, log_volume_unit_ball
from src.isotropic_lab.sampler.sampler import SampleBatch, Seed, sphere_directions

logger = logging.getLogger(__name__)

MAX_VOLUME_DIM = 6

SupportFn = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class BodyOracle:
    """Convex body with the origin inside, known through its support function.

    ``support_many`` maps an (m, n) array of unit directions to (values, stderrs).
    ``radius_bound`` is an upper bound for h_K on the sphere.
    """

    dim: int
    support_many: SupportFn
    radius_bound: float
    symmetric: bool = True
    boundary_many: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_radius: Optional[float] = None
    sample_count: int = 0
    label: str = ""

    def support_fn(self, theta: np.ndarray) -> EstimateCI:
        values, stderr = self.support_many(np.asarray(theta, dtype=float)[None, :])
        method = "closed-form" if stderr[0] == 0 else "mc"
        return EstimateCI(float(values[0]), float(stderr[0]), self.sample_count, method)


def ball_body(dim: int, radius: float = 1.0) -> BodyOracle:
    """Centred Euclidean ball of the given radius."""

    def support(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        count = np.atleast_2d(directions).shape[0]
        return np.full(count, radius), np.zeros(count)

    def boundary(directions: np.ndarray) -> np.ndarray:
        return radius * np.atleast_2d(directions)

    return BodyOracle(dim, support, radius, True, boundary, radius, 0, f"ball({radius:.6g})")


def function_body(
    dim: int,
    support: Callable[[np.ndarray], np.ndarray],
    radius_bound: float,
    symmetric: bool = True,
) -> BodyOracle:
    """Body given by an exact support function evaluated row-wise."""

    def support_many(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        values = np.asarray(support(np.atleast_2d(directions)), dtype=float)
        return values, np.zeros_like(values)

    return BodyOracle(dim, support_many, radius_bound, symmetric, label="function-body")


def zp_body(
    m: MeasureModel,
    batch: SampleBatch,
    p: float,
    settings: Optional[EstimatorSettings] = None,
) -> BodyOracle:
    """Z_p(mu) as a body oracle.

    Rotation-invariant families with a closed-form Z_p radius give an exact ball; all
    other measures use the batch for every support and boundary evaluation.
    """
    if p < 1:
        raise DomainError(f"L_p-centroid bodies need p >= 1, got p={p}")
    if batch.dim != m.dim:
        raise UsageError("Batch dimension does not match the measure")
    settings = settings or EstimatorSettings()
    profile = m.profile
    rotation_invariant = m.family in (Family.GAUSSIAN, Family.EUCLIDEAN_BALL)
    if rotation_invariant and profile is not None and profile.zp_radius is not None:
        return ball_body(m.dim, profile.zp_radius(p))

    if p > settings.high_variance_p:
        logger.warning("Z_%g body of %s is estimated with high variance", p, m.tag)
    points = batch.points
    norms = np.linalg.norm(points, axis=1)
    radius_bound = float(np.mean(norms**p) ** (1.0 / p))

    def support(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return support_zp_many(points, p, directions)

    def boundary(directions: np.ndarray) -> np.ndarray:
        return boundary_points_zp_many(points, p, directions)

    label = f"Z_{p:g}({m.tag})"
    return BodyOracle(m.dim, support, radius_bound, True, boundary, None, batch.count, label)


########################################################################################
# Widths and radii
########################################################################################


def _power_mean_over_grid(body: BodyOracle, q: float, grid: DirectionGrid, method: str) -> EstimateCI:
    if grid.dim != body.dim:
        raise UsageError(f"Grid dimension {grid.dim} does not match body dimension {body.dim}")
    h, h_stderr = body.support_many(grid.directions)
    value, grid_stderr = power_mean(h, q, grid.weights)
    # Propagate the support-function noise through the power mean as well
    gradient = value ** (1.0 - q) * grid.weights * h ** (q - 1.0)
    support_stderr = float(np.sqrt(np.sum((gradient * h_stderr) ** 2)))
    stderr = math.hypot(grid_stderr, support_stderr)
    if np.all(h == h[0]) and np.all(h_stderr == 0):
        stderr = 0.0
    return EstimateCI(value, stderr, grid.size, method)


def q_mean_width(body: BodyOracle, q: float, grid: DirectionGrid) -> EstimateCI:
    """w_q(K) = (integral of h_K^q over the sphere)^{1/q} on a direction grid.

    Raises:
        DomainError: q = 0 or q <= -dim
    """
    if q == 0 or q <= -body.dim:
        raise DomainError(f"q-mean width needs q != 0 and q > -{body.dim}, got q={q}")
    return _power_mean_over_grid(body, q, grid, "grid")


def polar_width(body: BodyOracle, grid: DirectionGrid) -> EstimateCI:
    """w_{-n}(K) = omega_n^{1/n} / |K°|^{1/n}, by the polar-coordinate formula for |K°|."""
    return _power_mean_over_grid(body, -float(body.dim), grid, "polar-width")


def polar_volume_per_dim(body_dim: int, width: EstimateCI) -> float:
    """|K°|^{1/n} recovered from w_{-n}(K)."""
    return math.exp(log_volume_unit_ball(body_dim) / body_dim) / width.value


def circumradius(body: BodyOracle, grid: DirectionGrid) -> EstimateCI:
    """R(K) = max h_K over the grid and the coordinate axes."""
    axes = np.eye(body.dim)
    directions = np.vstack([grid.directions, axes, -axes])
    h, h_stderr = body.support_many(directions)
    best = int(np.argmax(h))
    method = "closed-form" if body.exact_radius is not None else "grid-max"
    return EstimateCI(float(h[best]), float(h_stderr[best]), directions.shape[0], method)


########################################################################################
# Volume
########################################################################################


@dataclass(frozen=True)
class VolumeBracket:
    """Per-dimension bracket [lower, upper] of |K|^{1/n}."""

    lower: float
    upper: float
    upper_stderr: float
    resolution: int

    @property
    def midpoint(self) -> float:
        return math.sqrt(self.lower * self.upper)

    @property
    def relative_width(self) -> float:
        return self.upper / self.lower - 1.0

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper + 3.0 * self.upper_stderr


def _hull_volume(points: np.ndarray) -> float:
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return float(ConvexHull(points, qhull_options="QJ").volume)


def volume_bracket(
    body: BodyOracle,
    resolution: int,
    seed: Seed,
    volume_points: int = 200_000,
) -> VolumeBracket:
    """Inner/outer bracket of |K|^{1/n} from M support directions.

    The lower end is the hull volume of the touching points; the upper end is a Monte
    Carlo volume of the circumscribed polytope cut by the radius-bound ball.

    Raises:
        ScaleRefusalError: dim > 6
    """
    n = body.dim
    if n > MAX_VOLUME_DIM:
        raise ScaleRefusalError(f"Volume brackets are limited to dimension {MAX_VOLUME_DIM}, got {n}")
    if resolution < 100:
        raise UsageError(f"volume_bracket needs at least 100 directions, got {resolution}")
    if body.boundary_many is None:
        raise UnsupportedMeasureError("Body has no boundary-point oracle for the inner volume")

    directions = sphere_directions(n, resolution, seed.child("volume-directions"))
    if body.symmetric:
        directions = np.vstack([directions, -directions])
    h, _ = body.support_many(directions)
    touching = body.boundary_many(directions)

    if n == 1:
        length = float(touching.max() - touching.min())
        return VolumeBracket(length, max(length, float(h.max() + h.min())), 0.0, resolution)

    lower_volume = _hull_volume(touching)
    radius = body.radius_bound
    log_ball = log_volume_unit_ball(n) + n * math.log(radius)

    if body.exact_radius is not None:
        fraction, fraction_stderr = 1.0, 0.0
    else:
        rng = seed.child("volume-points").generator()
        rows = max(1, 2_000_000 // directions.shape[0])
        inside = 0
        for start in range(0, volume_points, rows):
            size = min(rows, volume_points - start)
            g = rng.standard_normal((size, n))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            points = g * (radius * rng.random(size) ** (1.0 / n))[:, None]
            inside += int(np.all(points @ directions.T <= h, axis=1).sum())
        fraction = inside / volume_points
        fraction_stderr = math.sqrt(max(fraction * (1.0 - fraction), 0.0) / volume_points)

    upper_volume = max(math.exp(log_ball) * fraction, lower_volume)
    upper_stderr = math.exp(log_ball) * fraction_stderr
    lower = lower_volume ** (1.0 / n)
    upper = upper_volume ** (1.0 / n)
    logger.info("Volume bracket of %s: [%.5g, %.5g] per dimension", body.label, lower, upper)
    return VolumeBracket(
        lower=lower,
        upper=upper,
        upper_stderr=upper / (n * upper_volume) * upper_stderr,
        resolution=resolution,
    )
