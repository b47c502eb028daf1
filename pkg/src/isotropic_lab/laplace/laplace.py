#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Logarithmic Laplace transform, its level-set bodies Lambda_p and tilted measures."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import DomainError, LaplaceDomainError, UsageError
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.measures.measures import MeasureModel
from src.isotropic_lab.sampler.sampler import SampleBatch, Seed, draw, tilted_draw

logger = logging.getLogger(__name__)

# Fraction of the sample holding the top of the exp-mass in the instability rule
TOP_FRACTION = 0.001
TOP_MASS_LIMIT = 0.5
GAUGE_RELATIVE_TOL = 1e-7
GAUGE_MAX_RADIUS = 1e6


@dataclass(frozen=True, eq=False)
class LogLaplaceOracle:
    """Lambda_mu(xi) = log E exp<x, xi>, closed form when the profile has it, else from a batch."""

    measure: MeasureModel
    batch: Optional[SampleBatch] = None

    def __post_init__(self):
        profile = self.measure.profile
        has_closed_form = profile is not None and profile.log_laplace is not None
        if not has_closed_form and self.batch is None:
            raise UsageError(f"Log-Laplace oracle for {self.measure.tag} needs a sample batch")
        if self.batch is not None and self.batch.dim != self.measure.dim:
            raise UsageError("Batch dimension does not match the measure")

    @property
    def closed_form(self) -> bool:
        profile = self.measure.profile
        return profile is not None and profile.log_laplace is not None

    def domain_check(self, xi: np.ndarray) -> bool:
        return self.measure.in_laplace_domain(xi)

    def evaluate(self, xi: np.ndarray) -> EstimateCI:
        return log_laplace(self.measure, xi, self.batch)

    def evaluate_many(self, xis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorised evaluation; rows outside the domain return +inf.

        Monte Carlo stderrs use the delta method on the mean of exp<x, xi>.
        """
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        inside = np.array([self.domain_check(row) for row in xis])
        values = np.full(xis.shape[0], np.inf)
        stderr = np.zeros(xis.shape[0])
        if not np.any(inside):
            return values, stderr
        if self.closed_form:
            values[inside] = self.measure.profile.log_laplace(xis[inside])
            return values, stderr

        points = self.batch.points
        count = points.shape[0]
        columns = xis[inside].T
        rows = max(1, 4_000_000 // columns.shape[1])
        peak = np.full(columns.shape[1], -np.inf)
        for start in range(0, count, rows):
            peak = np.maximum(peak, (points[start : start + rows] @ columns).max(axis=0))
        sums = np.zeros(columns.shape[1])
        squares = np.zeros(columns.shape[1])
        for start in range(0, count, rows):
            w = np.exp(points[start : start + rows] @ columns - peak)
            sums += w.sum(axis=0)
            squares += (w**2).sum(axis=0)
        mean = sums / count
        var = np.maximum(squares / count - mean**2, 0.0)
        values[inside] = peak + np.log(mean)
        stderr[inside] = np.sqrt(var / count) / mean
        return values, stderr


def log_laplace(m: MeasureModel, xi: np.ndarray, batch: Optional[SampleBatch] = None) -> EstimateCI:
    """Lambda_mu(xi) with jackknife bias and stderr for Monte Carlo evaluations.

    Estimates where the top 0.1% of the sample carries more than half of the exp-mass are
    flagged ``unstable``.

    Raises:
        LaplaceDomainError: If the transform is infinite at xi
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (m.dim,):
        raise UsageError(f"xi has shape {xi.shape}, expected ({m.dim},)")
    if not m.in_laplace_domain(xi):
        raise LaplaceDomainError(f"xi = {xi.tolist()} is outside the Laplace domain of {m.tag}")
    if not np.any(xi):
        return EstimateCI.exact(0.0)
    if m.profile is not None and m.profile.log_laplace is not None:
        return EstimateCI.exact(float(m.profile.log_laplace(xi[None, :])[0]))
    if batch is None:
        raise UsageError(f"Monte Carlo log-Laplace of {m.tag} needs a sample batch")

    scores = batch.points @ xi
    count = scores.shape[0]
    peak = float(scores.max())
    w = np.exp(scores - peak)
    total = float(w.sum())
    value = peak + math.log(total / count)

    shares = np.minimum(w / total, 1.0 - 1e-16)
    leave_one_out = np.log1p(-shares) + math.log(count / (count - 1.0))
    jack_mean = float(leave_one_out.mean())
    variance = (count - 1.0) / count * float(np.sum((leave_one_out - jack_mean) ** 2))
    bias = (count - 1.0) * jack_mean

    estimate = EstimateCI(value, math.sqrt(variance), count, "log-mean-exp", bias=bias)
    top = max(1, int(math.ceil(TOP_FRACTION * count)))
    if float(np.sort(w)[-top:].sum()) > TOP_MASS_LIMIT * total:
        logger.warning("log-mean-exp of %s at |xi|=%.3g is unstable", m.tag, float(np.linalg.norm(xi)))
        estimate = estimate.with_flags("unstable")
    return estimate


def convexity_defect(oracle: LogLaplaceOracle, xi: np.ndarray, eta: np.ndarray) -> EstimateCI:
    """Lambda((xi+eta)/2) - (Lambda(xi) + Lambda(eta))/2; non-positive up to noise."""
    mid = oracle.evaluate(0.5 * (np.asarray(xi) + np.asarray(eta)))
    a = oracle.evaluate(xi)
    b = oracle.evaluate(eta)
    value = mid.value - 0.5 * (a.value + b.value)
    stderr = math.sqrt(mid.stderr**2 + 0.25 * (a.stderr**2 + b.stderr**2))
    return EstimateCI(value, stderr, mid.sample_count, "convexity")


########################################################################################
# Level sets
########################################################################################


@dataclass(frozen=True)
class GaugeResult:
    """Radius t* of the symmetrised level set {Lambda(+-x) <= p} along each direction."""

    t_star: np.ndarray
    domain_limited: np.ndarray
    lambda_values: np.ndarray


def lambda_p_gauges(
    m: MeasureModel,
    p: float,
    directions: np.ndarray,
    batch: Optional[SampleBatch] = None,
) -> GaugeResult:
    """Bisection for the largest t with max(Lambda(t theta), Lambda(-t theta)) <= p.

    All directions are bisected together. Directions where Lambda stays below p up to the
    edge of the Laplace domain return the domain radius and are flagged domain-limited.
    """
    if p < 1:
        raise DomainError(f"Lambda_p is used for p >= 1, got p={p}")
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != m.dim:
        raise UsageError("Directions do not match the measure dimension")
    oracle = LogLaplaceOracle(m, batch)
    count = directions.shape[0]

    def symmetric_lambda(t: np.ndarray) -> np.ndarray:
        stacked = np.vstack([t[:, None] * directions, -t[:, None] * directions])
        values, _ = oracle.evaluate_many(stacked)
        return np.maximum(values[:count], values[count:])

    limits = np.array([m.laplace_ray_limit(theta) for theta in directions])
    cap = np.where(np.isfinite(limits), limits * (1.0 - 1e-12), GAUGE_MAX_RADIUS)
    hi = np.minimum(1.0, 0.5 * cap)
    for _ in range(80):
        below = (symmetric_lambda(hi) <= p) & (hi < cap)
        if not np.any(below):
            break
        hi = np.where(below, np.minimum(2.0 * hi, cap), hi)
    domain_limited = symmetric_lambda(hi) <= p

    lo = np.zeros(count)
    while np.any((hi - lo > GAUGE_RELATIVE_TOL * hi) & ~domain_limited):
        mid = 0.5 * (lo + hi)
        ok = symmetric_lambda(mid) <= p
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    t_star = np.where(domain_limited, hi, lo)
    if np.any(domain_limited):
        logger.warning(
            "%d of %d Lambda_%g gauges of %s are domain-limited",
            int(domain_limited.sum()),
            count,
            p,
            m.tag,
        )
    return GaugeResult(t_star, domain_limited, symmetric_lambda(t_star))


def lambda_p_gauge(
    m: MeasureModel,
    p: float,
    theta: np.ndarray,
    batch: Optional[SampleBatch] = None,
) -> GaugeResult:
    """Single-direction version of lambda_p_gauges."""
    theta = np.asarray(theta, dtype=float)
    if abs(float(np.linalg.norm(theta)) - 1.0) > 1e-9:
        raise UsageError("theta must be a unit vector")
    return lambda_p_gauges(m, p, theta[None, :], batch)


def in_half_lambda_p(
    m: MeasureModel, x: np.ndarray, p: float, batch: Optional[SampleBatch] = None
) -> bool:
    """Membership in (1/2) Lambda_p(mu): ||x|| <= t*(x/||x||) / 2."""
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return True
    gauge = lambda_p_gauge(m, p, x / norm, batch)
    return norm <= 0.5 * float(gauge.t_star[0])


########################################################################################
# Tilted measures
########################################################################################


@dataclass(frozen=True, eq=False)
class TiltedMeasure:
    """mu_x: the tilt mu'_x shifted by its barycentre ``recenter``."""

    base: MeasureModel
    tilt_point: np.ndarray
    recenter: np.ndarray
    recenter_stderr: np.ndarray
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def tag(self) -> str:
        return f"tilt({self.base.tag})"

    def draw(self, count: int, seed: Seed) -> SampleBatch:
        """Samples of mu_x."""
        batch = tilted_draw(self.base, self.tilt_point, count, seed, self.settings)
        return SampleBatch(batch.points - self.recenter, (self.tag, seed))

    def unnormalized_log_density(self, z: np.ndarray) -> np.ndarray:
        """log of e^{<z + recenter, x>} f_mu(z + recenter)."""
        shifted = np.atleast_2d(z) + self.recenter
        return shifted @ self.tilt_point + self.base.log_density(shifted)


def tilt(
    m: MeasureModel,
    x: np.ndarray,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> TiltedMeasure:
    """Tilted and recentred measure mu_x; recenter is the mean of tilted draws (0 at x = 0)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise UsageError(f"Tilt point has shape {x.shape}, expected ({m.dim},)")
    if not m.in_laplace_domain(x):
        raise LaplaceDomainError(f"Tilt point {x.tolist()} is outside the Laplace domain of {m.tag}")
    settings = settings or EstimatorSettings()
    if not np.any(x):
        zeros = np.zeros(m.dim)
        return TiltedMeasure(m, x, zeros, zeros.copy(), settings)
    batch = tilted_draw(m, x, settings.samples, seed.child("tilt-recenter"), settings)
    recenter = batch.points.mean(axis=0)
    stderr = batch.points.std(axis=0, ddof=1) / math.sqrt(batch.count)
    logger.info("Tilt of %s at %s recentred by %s", m.tag, x.tolist(), np.round(recenter, 4).tolist())
    return TiltedMeasure(m, x, recenter, stderr, settings)


@dataclass(frozen=True)
class TiltDerivativeReport:
    """Finite differences of Lambda against the tilted mean and covariance."""

    gradient: np.ndarray
    hessian: np.ndarray
    tilted_mean: np.ndarray
    tilted_cov: np.ndarray
    grad_gap: float
    hess_gap: float
    step: float
    sample_count: int


def tilt_derivative_check(
    m: MeasureModel,
    x: np.ndarray,
    h: Optional[float] = None,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
) -> TiltDerivativeReport:
    """Compare central differences of Lambda at x with bar(mu'_x) and Cov(mu'_x).

    All stencil values share one base batch. The gradient gap is scaled by the square
    root of the Hessian trace, the Hessian gap by its Frobenius norm.

    Raises:
        LaplaceDomainError: If any stencil point leaves the Laplace domain
    """
    x = np.asarray(x, dtype=float)
    n = m.dim
    if x.shape != (n,):
        raise UsageError(f"x has shape {x.shape}, expected ({n},)")
    settings = settings or EstimatorSettings()
    seed = seed or Seed(0)
    step = h if h is not None else settings.fd_step * max(1.0, float(np.linalg.norm(x)))
    eye = np.eye(n) * step

    stencil = [x]
    for i in range(n):
        stencil += [x + eye[i], x - eye[i]]
    for i in range(n):
        for j in range(i + 1, n):
            stencil += [
                x + eye[i] + eye[j],
                x + eye[i] - eye[j],
                x - eye[i] + eye[j],
                x - eye[i] - eye[j],
            ]
    stencil = np.array(stencil)
    for point in stencil:
        if not m.in_laplace_domain(point):
            raise LaplaceDomainError(f"Stencil point {point.tolist()} is outside the Laplace domain")

    has_closed_form = m.profile is not None and m.profile.log_laplace is not None
    batch = None if has_closed_form else draw(m, settings.samples, seed.child("tiltcheck-base"), settings)
    values, _ = LogLaplaceOracle(m, batch).evaluate_many(stencil)

    centre = values[0]
    gradient = np.empty(n)
    hessian = np.empty((n, n))
    for i in range(n):
        plus, minus = values[1 + 2 * i], values[2 + 2 * i]
        gradient[i] = (plus - minus) / (2.0 * step)
        hessian[i, i] = (plus - 2.0 * centre + minus) / step**2
    offset = 1 + 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            pp, pm, mp, mm = values[offset : offset + 4]
            hessian[i, j] = hessian[j, i] = (pp - pm - mp + mm) / (4.0 * step**2)
            offset += 4

    tilted = tilted_draw(m, x, settings.samples, seed.child("tiltcheck-tilted"), settings)
    mean = tilted.points.mean(axis=0)
    cov = np.cov(tilted.points, rowvar=False).reshape(n, n)
    grad_gap = float(np.linalg.norm(gradient - mean) / math.sqrt(max(np.trace(hessian), 1e-300)))
    hess_gap = float(np.linalg.norm(hessian - cov) / max(np.linalg.norm(hessian), 1e-300))
    return TiltDerivativeReport(gradient, hessian, mean, cov, grad_gap, hess_gap, step, tilted.count)
