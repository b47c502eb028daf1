#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Sample-based checks on measures: isotropic constant brackets, normalisation,
log-concavity and isotropy defects."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import UnsupportedMeasureError, UsageError
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.measures.measures import (
    Family,
    LBracket,
    MeasureModel,
    isotropize,
    transform_hpoly,
)
from src.isotropic_lab.sampler.sampler import SampleBatch, Seed, draw

logger = logging.getLogger(__name__)


def log_density_at_zero(m: MeasureModel) -> float:
    """log f_mu(0) from the analytic profile or the density oracle."""
    if m.profile is not None and m.profile.log_density_at_0 is not None:
        return float(m.profile.log_density_at_0)
    return float(m.log_density(np.zeros((1, m.dim)))[0])


def isotropic_constant_bracket(
    m: MeasureModel,
    sample_budget: int,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> LBracket:
    """Fradelizi bracket of the isotropic constant.

    lo = f(0)^{1/n} det(Cov)^{1/(2n)} and hi = e lo. Measures flagged isotropic use
    det Cov = 1; otherwise the covariance is estimated from ``sample_budget`` draws.

    Args:
        m: Centred log-concave measure
        sample_budget: Samples for the covariance when m is not isotropic
        seed: Stream seed
        settings: Estimator settings

    Returns:
        LBracket: Bracket, with the exact value when the profile has the sup norm

    Raises:
        UnsupportedMeasureError: If f(0) = 0
    """
    n = m.dim
    log_f0 = log_density_at_zero(m)
    if not math.isfinite(log_f0):
        raise UnsupportedMeasureError(f"Origin is outside the support of {m.tag}")

    log_det = 0.0
    stderr_log_det = 0.0
    if not m.isotropic:
        batch = draw(m, sample_budget, seed.child("bracket-cov"), settings)
        cov = np.cov(batch.points, rowvar=False).reshape(n, n)
        sign, log_det = np.linalg.slogdet(cov)
        if sign <= 0:
            raise UnsupportedMeasureError(f"Estimated covariance of {m.tag} is not positive definite")
        stderr_log_det = math.sqrt(2.0 * n / batch.count)

    lo = math.exp(log_f0 / n + log_det / (2.0 * n))
    exact = None
    if m.profile is not None and m.profile.sup_norm_per_dim is not None:
        exact = m.profile.sup_norm_per_dim * math.exp(log_det / (2.0 * n))
    return LBracket(
        lo=lo,
        hi=math.e * lo,
        exact=exact,
        stderr=lo * stderr_log_det / (2.0 * n),
        log_det_cov=float(log_det),
    )


def check_normalization(
    m: MeasureModel, seed: Seed, count: int = 200_000
) -> EstimateCI:
    """Monte Carlo estimate of the integral of the density.

    Bounded families are integrated against the uniform law on a box around the support;
    unbounded ones by importance sampling from a rate-one Laplace product.
    """
    n = m.dim
    rng = seed.child("normalization").generator()
    radius = m.bounding_radius
    if math.isfinite(radius):
        points = rng.uniform(-radius, radius, (count, n))
        log_weights = m.log_density(points) + n * math.log(2.0 * radius)
    else:
        points = rng.laplace(0.0, 1.0, (count, n))
        log_proposal = -n * math.log(2.0) - np.abs(points).sum(axis=1)
        log_weights = m.log_density(points) - log_proposal
    weights = np.exp(log_weights)
    return EstimateCI(
        float(weights.mean()),
        float(weights.std(ddof=1) / math.sqrt(count)),
        count,
        "importance-mc",
    )


def check_log_concavity(m: MeasureModel, x: np.ndarray, y: np.ndarray) -> float:
    """Largest violation of log f((x+y)/2) >= (log f(x) + log f(y)) / 2 over paired rows.

    Pairs with a point outside the support are skipped. A non-positive return value
    means no violation was found.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape != y.shape:
        raise UsageError("Point sets must have the same shape")
    lx = m.log_density(x)
    ly = m.log_density(y)
    mask = np.isfinite(lx) & np.isfinite(ly)
    if not np.any(mask):
        return -math.inf
    lm = m.log_density(0.5 * (x[mask] + y[mask]))
    return float(np.max(0.5 * (lx[mask] + ly[mask]) - lm))


@dataclass(frozen=True)
class IsotropyDefect:
    """Distance of a batch from isotropic position, in stderr units."""

    cov_z: float
    mean_norm: float
    mean_stderr: float
    tolerance: float

    @property
    def is_isotropic(self) -> bool:
        return self.cov_z <= self.tolerance and self.mean_norm <= self.tolerance * self.mean_stderr


def isotropy_defect(batch: SampleBatch, alpha: float = 0.0027) -> IsotropyDefect:
    """Entrywise |Cov - I| / stderr and barycentre norm of a batch.

    The tolerance is the two-sided gaussian quantile at ``alpha`` split over the
    n(n+1)/2 covariance entries, which is 3 for a single entry.
    """
    points = batch.points
    count, n = points.shape
    centred = points - points.mean(axis=0)
    products = centred[:, :, None] * centred[:, None, :]
    cov = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(count)
    upper = np.triu_indices(n)
    z = np.abs(cov - np.eye(n))[upper] / se[upper]
    entries = n * (n + 1) // 2
    tolerance = float(stats.norm.isf(alpha / (2.0 * entries)))
    mean_stderr = math.sqrt(float(points.var(axis=0, ddof=1).sum()) / count)
    return IsotropyDefect(
        cov_z=float(z.max()),
        mean_norm=float(np.linalg.norm(points.mean(axis=0))),
        mean_stderr=mean_stderr,
        tolerance=tolerance,
    )


def isotropize_measure(
    m: MeasureModel, seed: Seed, settings: Optional[EstimatorSettings] = None
) -> MeasureModel:
    """Bring a polytope measure into empirical isotropic position."""
    if m.family is not Family.HPOLY_BODY:
        raise UnsupportedMeasureError("Empirical isotropization is only needed for polytope bodies")
    settings = settings or EstimatorSettings()
    batch = draw(m, settings.samples, seed.child("isotropize"), settings)
    image = isotropize(batch)
    logger.info("Isotropized %s (log det of map %.4f)", m.tag, image.log_det)
    return transform_hpoly(m, image, isotropic=True)
