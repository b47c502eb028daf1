#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Relation catalogue: evaluators, grid builders, verdict rules and constant fitting."""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.isotropic_lab.config.settings import EstimatorSettings, RunConfig
from src.isotropic_lab.errors import ScaleRefusalError, UnsupportedMeasureError, UsageError
from src.isotropic_lab.functionals.bodies import (
    MAX_VOLUME_DIM,
    VolumeBracket,
    circumradius,
    polar_volume_per_dim,
    polar_width,
    q_mean_width,
    volume_bracket,
    zp_body,
)
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.functionals.functionals import (
    I_negk_via_sections,
    marginal_L_surrogate,
    moment_Iq,
    random_direction_grid,
    support_zp_many,
)
from src.isotropic_lab.laplace.laplace import lambda_p_gauges, tilt, tilt_derivative_check
from src.isotropic_lab.measures.empirical import isotropic_constant_bracket, isotropy_defect
from src.isotropic_lab.measures.measures import LBracket, MeasureModel, log_volume_unit_ball
from src.isotropic_lab.parameters.grassmann_search import GrassmannSearchConfig
from src.isotropic_lab.parameters.parameters import hereditary, hereditary_q_minus_c_ladder
from src.isotropic_lab.sampler.sampler import SampleBatch, Seed, draw, haar_subspace, sphere_directions

logger = logging.getLogger(__name__)

IDENTITY_RELATIVE_TOL = 1e-9
SINGLE_BAND = (1.0 / 8.0, 8.0)
CHAINED_BAND = (1.0 / 16.0, 16.0)
GRADIENT_GAP_LIMIT = 0.05
HESSIAN_GAP_LIMIT = 0.10
GOOD_MARGINALS_SLACK = 0.02
THEOREM1_LADDER = tuple(2.0 ** (j / 4.0) for j in range(17))
PAOURIS_DELTA = 4.0


class RelationId(str, Enum):
    """Tags of the executable relations."""

    SECTION_FORMULA = "section-formula"
    PROJECTION_IDENTITY = "projection-identity"
    IK_WIDTH = "Ik-width"
    LZN_IDENTITY = "LZn-identity"
    FRADELIZI = "fradelizi"
    REVERSE_INCLUSION = "reverse-inclusion"
    LAMBDA_POLAR = "lambda-polar"
    TILT_DERIVATIVES = "tilt-derivatives"
    TILT_STABILITY = "tilt-stability"
    THEOREM1_CHAIN = "theorem1-chain"
    COROLLARY34 = "corollary34"
    VOLUME_LOWER = "volume-lower"
    GOOD_MARGINALS = "good-marginals"
    ZP_SQRTP_MONOTONE = "zp-sqrtp-monotone"
    SANTALO_WIDTH = "santalo-width"
    I2_NORMALIZATION = "I2-normalization"
    NEGMOMENT_VIA_L = "negmoment-via-L"
    IP_VOLUME = "ip-volume"
    NEGMOMENT_LINF = "negmoment-linf"
    CIRCUMRADIUS = "circumradius"
    PAOURIS_FLOOR = "paouris-floor"

    @classmethod
    def parse(cls, tag: str) -> "RelationId":
        try:
            return cls(tag)
        except ValueError as e:
            known = ", ".join(r.value for r in cls)
            raise UsageError(f"Unknown relation {tag!r}; known relations: {known}") from e


class RelationKind(str, Enum):
    """How a relation turns its evaluation into a verdict.

    identity: lhs = rhs within 3 combined stderr.
    band: the fitted constant lies inside the declared band.
    inequality: lhs <= rhs within 3 combined stderr.
    gap: the fitted gap does not exceed the upper band edge.
    """

    IDENTITY = "identity"
    BAND = "band"
    INEQUALITY = "inequality"
    GAP = "gap"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class GridPoint:
    """Parameters of one check; unused fields stay None."""

    n: int
    k: Optional[int] = None
    p: Optional[float] = None
    q: Optional[float] = None
    delta: Optional[float] = None
    A: Optional[float] = None

    def to_payload(self) -> Dict[str, Any]:
        return {name: value for name, value in self.__dict__.items() if value is not None}


@dataclass(frozen=True)
class RelationOutcome:
    """Both sides of a relation plus the constant solving it with equality.

    ``fitted_bounds`` encloses the true fitted constant (a confidence interval or a
    deterministic bracket); when absent the 3-stderr interval of ``fitted`` is used.
    """

    lhs: EstimateCI
    rhs: EstimateCI
    fitted: Optional[EstimateCI] = None
    fitted_bounds: Optional[Tuple[float, float]] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def bounds(self) -> Optional[Tuple[float, float]]:
        if self.fitted_bounds is not None:
            return self.fitted_bounds
        if self.fitted is None:
            return None
        return self.fitted.interval(3.0)


@dataclass(frozen=True)
class RelationReport:
    """Result of checking one relation on one measure at one grid point."""

    relation: RelationId
    measure_spec: str
    grid_point: GridPoint
    lhs: EstimateCI
    rhs: EstimateCI
    fitted_constant: Optional[float]
    fitted_stderr: float
    verdict: Verdict
    seed: Tuple[int, int]
    details: Dict[str, Any] = field(default_factory=dict)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "kind": "relation-report",
            "relation": self.relation.value,
            "measure_spec": self.measure_spec,
            "grid_point": self.grid_point.to_payload(),
            "lhs": self.lhs.to_payload(),
            "rhs": self.rhs.to_payload(),
            "fitted_constant": self.fitted_constant,
            "fitted_stderr": self.fitted_stderr,
            "verdict": self.verdict.value,
            "seed": list(self.seed),
            "details": self.details,
        }


Evaluator = Callable[[MeasureModel, GridPoint, Seed, EstimatorSettings], RelationOutcome]
PointBuilder = Callable[[MeasureModel, RunConfig], List[GridPoint]]


@dataclass(frozen=True)
class RelationSpec:
    """Catalogue entry of a relation."""

    relation: RelationId
    kind: RelationKind
    anchor: str
    evaluate: Evaluator
    points: PointBuilder
    band: Tuple[float, float] = (0.0, math.inf)
    orientation: str = "max"
    needs_volume: bool = False


########################################################################################
# Shared helpers
########################################################################################


def _batch(m: MeasureModel, seed: Seed, settings: EstimatorSettings) -> SampleBatch:
    return draw(m, settings.samples, seed.child("batch"), settings)


def _grid(n: int, seed: Seed, settings: EstimatorSettings):
    return random_direction_grid(n, settings.directions, seed.child("grid"))


def _ratio(numerator: EstimateCI, denominator: EstimateCI, method: str = "ratio") -> EstimateCI:
    value = numerator.value / denominator.value
    relative = math.hypot(
        numerator.stderr / abs(numerator.value) if numerator.value else 0.0,
        denominator.stderr / abs(denominator.value),
    )
    count = max(numerator.sample_count, denominator.sample_count)
    return EstimateCI(value, abs(value) * relative, count, method)


def _require_k(point: GridPoint) -> int:
    if point.k is None or not 1 <= point.k <= point.n - 1:
        raise UsageError(f"Relation needs 1 <= k <= n-1, got k={point.k}, n={point.n}")
    return int(point.k)


def _sections(m: MeasureModel, k: int, seed: Seed, settings: EstimatorSettings) -> EstimateCI:
    return I_negk_via_sections(m, k, settings.subspace_count, seed.child("sections", k), settings)


def _volume(body, seed: Seed, settings: EstimatorSettings) -> VolumeBracket:
    return volume_bracket(
        body, settings.resolution_for(body.dim), seed.child("volume"), settings.volume_points
    )


def _l_value(m: MeasureModel, seed: Seed, settings: EstimatorSettings) -> LBracket:
    return isotropic_constant_bracket(m, settings.samples, seed.child("L"), settings)


def _search_config(settings: EstimatorSettings) -> GrassmannSearchConfig:
    return GrassmannSearchConfig.from_settings(settings)


def _chain_config(settings: EstimatorSettings) -> GrassmannSearchConfig:
    return replace(_search_config(settings), haar_samples=settings.chain_haar_samples)


def _r_sharp_hereditary(m: MeasureModel, A: float, seed: Seed, settings: EstimatorSettings):
    return hereditary("r_sharp", m, _chain_config(settings), seed.child("r-sharp-H"), settings, A=A)


def _default_k_values(n: int, config: RunConfig) -> List[int]:
    candidates = config.k_values or [1, n // 3, (2 * n) // 3, n - 1]
    return sorted({k for k in candidates if 1 <= k <= n - 1})


def _ordered_pairs(config: RunConfig) -> List[Tuple[float, float]]:
    values = sorted({v for v in list(config.p_values) + list(config.q_values) if v >= 1})
    pairs = [(p, q) for i, p in enumerate(values) for q in values[i + 1 :]]
    return pairs or [(1.0, 2.0)]


########################################################################################
# Identities
########################################################################################


def _eval_section_formula(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    lhs = _sections(m, k, seed, settings)
    profile = m.profile
    if profile is not None and profile.moment_iq is not None:
        rhs = EstimateCI.exact(profile.moment_iq(-float(k)))
    elif k < point.n / 2.0:
        rhs = moment_Iq(m, -float(k), _batch(m, seed, settings))
    else:
        raise UsageError(f"No admissible direct route for I_-{k} in dimension {point.n}")
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), details={"route": rhs.method})


def _eval_projection_identity(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    q = float(point.q or 2.0)
    batch = _batch(m, seed, settings)
    subspace = haar_subspace(point.n, k, seed.child("subspace"))
    u = sphere_directions(k, 1, seed.child("direction"))[0]
    y = subspace.frame @ u
    full, full_se = support_zp_many(batch.points, q, y[None, :])
    projected, projected_se = support_zp_many(batch.points @ subspace.frame, q, u[None, :])
    lhs = EstimateCI(float(full[0]), float(full_se[0]), batch.count, "mc")
    rhs = EstimateCI(float(projected[0]), float(projected_se[0]), batch.count, "mc-projected")
    relative_gap = abs(lhs.value - rhs.value) / abs(rhs.value)
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), details={"relative_gap": relative_gap})


def _eval_i2_normalization(m, point, seed, settings) -> RelationOutcome:
    batch = _batch(m, seed, settings)
    lhs = moment_Iq(m, 2.0, batch)
    rhs = EstimateCI.exact(math.sqrt(point.n))
    defect = isotropy_defect(batch)
    details = {
        "cov_z": defect.cov_z,
        "mean_norm": defect.mean_norm,
        "isotropic": defect.is_isotropic,
    }
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), details=details)


########################################################################################
# Single-sided bands
########################################################################################


def _eval_ik_width(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    n = point.n
    lhs = _sections(m, k, seed, settings)
    body = zp_body(m, _batch(m, seed, settings), float(k), settings)
    width = q_mean_width(body, -float(k), _grid(n, seed, settings))
    factor = math.sqrt(n / k)
    rhs = EstimateCI(factor * width.value, factor * width.stderr, width.sample_count, "width")
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs))


def _eval_lzn_identity(m, point, seed, settings) -> RelationOutcome:
    n = point.n
    bracket = _l_value(m, seed, settings)
    volume = _volume(zp_body(m, _batch(m, seed, settings), float(n), settings), seed, settings)
    upper = volume.upper + 3.0 * volume.upper_stderr
    if bracket.exact is not None:
        lo_l = hi_l = mid_l = bracket.exact
    else:
        lo_l, hi_l, mid_l = bracket.lo, bracket.hi, bracket.midpoint
    method = "exact" if bracket.exact is not None else "bracket-midpoint"
    lhs = EstimateCI(mid_l, bracket.stderr, 0, method)
    rhs = EstimateCI(volume.midpoint, volume.upper_stderr, volume.resolution, "volume-bracket")
    fitted = EstimateCI(mid_l * volume.midpoint, 0.0, volume.resolution, "product")
    details = {"volume_lower": volume.lower, "volume_upper": volume.upper, "L_exact": bracket.exact}
    return RelationOutcome(lhs, rhs, fitted, (lo_l * volume.lower, hi_l * upper), details)


def _eval_reverse_inclusion(m, point, seed, settings) -> RelationOutcome:
    p, q = float(point.p), float(point.q)
    if not 1 <= p < q:
        raise UsageError(f"reverse-inclusion needs 1 <= p < q, got p={p}, q={q}")
    batch = _batch(m, seed, settings)
    directions = _grid(point.n, seed, settings).directions
    h_p, se_p = zp_body(m, batch, p, settings).support_many(directions)
    h_q, se_q = zp_body(m, batch, q, settings).support_many(directions)
    ratios = (h_q / h_p) * (p / q)
    worst = int(np.argmax(ratios))
    lhs = EstimateCI(float(h_q[worst]), float(se_q[worst]), batch.count, "support")
    rhs = EstimateCI(float(h_p[worst]) * q / p, float(se_p[worst]) * q / p, batch.count, "support")
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), details={"min_ratio": float(ratios.min())})


def _spread_constant(ratios: np.ndarray, stderrs: np.ndarray, count: int) -> EstimateCI:
    # Smallest C with every ratio inside [1/C, C]
    high, low = int(np.argmax(ratios)), int(np.argmin(ratios))
    if ratios[high] >= 1.0 / ratios[low]:
        return EstimateCI(float(ratios[high]), float(stderrs[high]), count, "spread")
    value = 1.0 / float(ratios[low])
    return EstimateCI(value, value * float(stderrs[low] / ratios[low]), count, "spread")


def _eval_lambda_polar(m, point, seed, settings) -> RelationOutcome:
    p = float(point.p or 2.0)
    batch = _batch(m, seed, settings)
    directions = _grid(point.n, seed, settings).directions
    gauges = lambda_p_gauges(m, p, directions, batch)
    h, h_se = zp_body(m, batch, p, settings).support_many(directions)
    ratios = gauges.t_star * h / p
    stderrs = ratios * h_se / h
    fitted = _spread_constant(ratios, stderrs, batch.count)
    lhs = EstimateCI(float(ratios.min()), 0.0, directions.shape[0], "min-ratio")
    rhs = EstimateCI(float(ratios.max()), 0.0, directions.shape[0], "max-ratio")
    details = {
        "spread": float(ratios.max() / ratios.min()),
        "domain_limited": int(gauges.domain_limited.sum()),
    }
    return RelationOutcome(lhs, rhs, fitted, details=details)


def _eval_tilt_stability(m, point, seed, settings) -> RelationOutcome:
    n = point.n
    p = float(point.p or 2.0)
    q = max(float(point.q or p), p)
    theta = sphere_directions(n, 1, seed.child("tilt-direction"))[0]
    base = _batch(m, seed, settings)
    t_star = float(lambda_p_gauges(m, p, theta[None, :], base).t_star[0])
    x = 0.5 * t_star * theta
    tilted = tilt(m, x, seed.child("tilt"), settings)
    tilted_batch = tilted.draw(settings.samples, seed.child("tilted-batch"))
    directions = _grid(n, seed, settings).directions
    h_base, se_base = support_zp_many(base.points, q, directions)
    h_tilt, se_tilt = support_zp_many(tilted_batch.points, q, directions)
    ratios = h_tilt / h_base
    stderrs = ratios * np.hypot(se_tilt / h_tilt, se_base / h_base)
    fitted = _spread_constant(ratios, stderrs, base.count)
    lhs = EstimateCI(float(ratios.min()), 0.0, directions.shape[0], "min-ratio")
    rhs = EstimateCI(float(ratios.max()), 0.0, directions.shape[0], "max-ratio")
    details = {"tilt_point": x.tolist(), "q": q, "recenter": tilted.recenter.tolist()}
    return RelationOutcome(lhs, rhs, fitted, details=details)


def _eval_circumradius(m, point, seed, settings) -> RelationOutcome:
    q = float(point.q or 2.0)
    body = zp_body(m, _batch(m, seed, settings), q, settings)
    lhs = circumradius(body, _grid(point.n, seed, settings))
    rhs = EstimateCI.exact(q)
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs))


########################################################################################
# Volume-bearing relations
########################################################################################


def _eval_volume_lower(m, point, seed, settings) -> RelationOutcome:
    n = point.n
    p = float(point.p or 1.0)
    A = float(point.A or 2.0)
    details: Dict[str, Any] = {}
    if p > 1:
        r_h = _r_sharp_hereditary(m, A, seed, settings)
        details["r_sharp_H"] = r_h.value
        if p > r_h.value:
            raise UsageError(f"volume-lower needs p <= r_sharp^H = {r_h.value:g}, got p={p:g}")
    volume = _volume(zp_body(m, _batch(m, seed, settings), p, settings), seed, settings)
    factor = A * math.sqrt(n / p)
    lhs = EstimateCI(volume.midpoint, volume.upper_stderr, volume.resolution, "volume-bracket")
    rhs = EstimateCI.exact(math.sqrt(p / n) / A)
    fitted = EstimateCI(volume.midpoint * factor, 0.0, volume.resolution, "volume-bracket")
    bounds = (volume.lower * factor, (volume.upper + 3.0 * volume.upper_stderr) * factor)
    return RelationOutcome(lhs, rhs, fitted, bounds, details)


def _eval_zp_sqrtp(m, point, seed, settings) -> RelationOutcome:
    p, q = float(point.p), float(point.q)
    if not 1 <= p < q:
        raise UsageError(f"zp-sqrtp-monotone needs 1 <= p < q, got p={p}, q={q}")
    batch = _batch(m, seed, settings)
    vol_p = _volume(zp_body(m, batch, p, settings), seed.child("p"), settings)
    vol_q = _volume(zp_body(m, batch, q, settings), seed.child("q"), settings)
    scale = math.sqrt(p / q)
    lhs = EstimateCI(vol_q.midpoint / math.sqrt(q), 0.0, vol_q.resolution, "volume-bracket")
    rhs = EstimateCI(vol_p.midpoint / math.sqrt(p), 0.0, vol_p.resolution, "volume-bracket")
    fitted = EstimateCI(scale * vol_q.midpoint / vol_p.midpoint, 0.0, vol_q.resolution, "ratio")
    bounds = (
        scale * vol_q.lower / (vol_p.upper + 3.0 * vol_p.upper_stderr),
        scale * (vol_q.upper + 3.0 * vol_q.upper_stderr) / vol_p.lower,
    )
    return RelationOutcome(lhs, rhs, fitted, bounds)


def _eval_santalo_width(m, point, seed, settings) -> RelationOutcome:
    n = point.n
    p = float(point.p or 2.0)
    body = zp_body(m, _batch(m, seed, settings), p, settings)
    volume = _volume(body, seed, settings)
    omega = math.exp(log_volume_unit_ball(n) / n)
    lhs = EstimateCI.exact(volume.lower / omega, "volume-lower")
    rhs = polar_width(body, _grid(n, seed, settings))
    details = {"polar_volume_per_dim": polar_volume_per_dim(n, rhs), "volume_upper": volume.upper}
    return RelationOutcome(lhs, rhs, _ratio(rhs, lhs), details=details)


def _eval_ip_volume(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    n = point.n
    lhs = _sections(m, k, seed, settings)
    volume = _volume(zp_body(m, _batch(m, seed, settings), float(k), settings), seed, settings)
    factor = n / math.sqrt(k)
    rhs = EstimateCI(
        factor * volume.midpoint, factor * volume.upper_stderr, volume.resolution, "volume-bracket"
    )
    low, high = lhs.interval(3.0)
    bounds = (
        max(low, 0.0) / (factor * (volume.upper + 3.0 * volume.upper_stderr)),
        high / (factor * volume.lower),
    )
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), bounds)


########################################################################################
# Laplace and marginal relations
########################################################################################


def _eval_fradelizi(m, point, seed, settings) -> RelationOutcome:
    profile = m.profile
    if profile is None or profile.sup_norm_per_dim is None or profile.log_density_at_0 is None:
        raise UnsupportedMeasureError(f"fradelizi needs an exact sup norm, unavailable for {m.tag}")
    f0 = math.exp(profile.log_density_at_0 / point.n)
    lhs = EstimateCI.exact(profile.sup_norm_per_dim)
    rhs = EstimateCI.exact(math.e * f0)
    fitted = EstimateCI.exact(profile.sup_norm_per_dim / f0, "multiplier")
    return RelationOutcome(lhs, rhs, fitted)


def _eval_tilt_derivatives(m, point, seed, settings) -> RelationOutcome:
    x = np.zeros(point.n)
    x[0] = 0.5
    report = tilt_derivative_check(m, x, None, seed.child("tiltcheck"), settings)
    lhs = EstimateCI.exact(report.grad_gap, "gradient-gap")
    rhs = EstimateCI.exact(report.hess_gap, "hessian-gap")
    score = max(report.grad_gap / GRADIENT_GAP_LIMIT, report.hess_gap / HESSIAN_GAP_LIMIT)
    details = {"x": x.tolist(), "step": report.step, "sample_count": report.sample_count}
    return RelationOutcome(lhs, rhs, EstimateCI.exact(score, "gap-score"), details=details)


def _l_point(bracket: LBracket) -> float:
    return bracket.exact if bracket.exact is not None else bracket.lo


def _eval_good_marginals(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    n = point.n
    reference = math.e * _l_point(_l_value(m, seed, settings))
    count = settings.haar_samples
    qualifying = 0
    for j in range(count):
        subspace = haar_subspace(n, k, seed.child("good-subspace", j))
        bracket = marginal_L_surrogate(m, subspace, seed.child("good-density", j), settings)
        qualifying += _l_point(bracket) <= reference
    fraction = qualifying / count
    stderr = math.sqrt(fraction * (1.0 - fraction) / count)
    threshold = 1.0 - math.exp(-k) - GOOD_MARGINALS_SLACK
    lhs = EstimateCI.exact(threshold, "threshold")
    rhs = EstimateCI(fraction, stderr, count, "haar-fraction")
    return RelationOutcome(lhs, rhs, rhs, details={"qualifying": qualifying, "subspaces": count})


def _eval_negmoment_via_l(m, point, seed, settings) -> RelationOutcome:
    k = _require_k(point)
    n = point.n
    if k < n / 2.0:
        lhs = moment_Iq(m, -float(k), _batch(m, seed, settings))
    else:
        lhs = _sections(m, k, seed, settings)
    count = settings.subspace_count
    powers = np.empty(count)
    for j in range(count):
        subspace = haar_subspace(n, k, seed.child("via-L-subspace", j))
        bracket = marginal_L_surrogate(m, subspace, seed.child("via-L-density", j), settings)
        powers[j] = _l_point(bracket) ** k
    mean = float(powers.mean())
    mean_se = float(powers.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    value = math.sqrt(n) * mean ** (-1.0 / k)
    rhs = EstimateCI(value, value * mean_se / (k * mean), count, "marginal-L")
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs))


def _eval_negmoment_linf(m, point, seed, settings) -> RelationOutcome:
    p = _require_k(point)
    n = point.n
    lhs = _sections(m, p, seed, settings)
    bracket = _l_value(m, seed, settings)
    if bracket.exact is not None:
        lo_l = hi_l = mid_l = bracket.exact
    else:
        lo_l, hi_l, mid_l = bracket.lo, bracket.hi, bracket.midpoint
    rhs = EstimateCI(math.sqrt(n) / mid_l, 0.0, 0, "sqrt-n-over-L")
    scale = mid_l / math.sqrt(n)
    fitted = EstimateCI(lhs.value * scale, lhs.stderr * scale, lhs.sample_count, "ratio")
    low, high = lhs.interval(3.0)
    bounds = (max(low, 0.0) * lo_l / math.sqrt(n), high * hi_l / math.sqrt(n))
    return RelationOutcome(lhs, rhs, fitted, bounds)


########################################################################################
# Parameter chains
########################################################################################


def _eval_theorem1_chain(m, point, seed, settings) -> RelationOutcome:
    A = float(point.A or 2.0)
    r_h = _r_sharp_hereditary(m, A, seed, settings)
    deltas = [c * A for c in THEOREM1_LADDER]
    q_seed = seed.child("q-minus-c-H")
    ladder = hereditary_q_minus_c_ladder(m, deltas, _chain_config(settings), q_seed, settings)
    fitted_c, q_value = math.inf, ladder[-1].value
    for c, q_h in zip(THEOREM1_LADDER, ladder):
        if r_h.value <= q_h.value:
            fitted_c, q_value = c, q_h.value
            break
    lhs = EstimateCI.exact(r_h.value, "hereditary-search")
    rhs = EstimateCI.exact(q_value, "hereditary-search")
    details = {"A": A, "r_sharp_H": r_h.value, "q_minus_c_H": q_value}
    return RelationOutcome(lhs, rhs, EstimateCI.exact(fitted_c, "ladder"), details=details)


def _eval_corollary34(m, point, seed, settings) -> RelationOutcome:
    n = point.n
    A = float(point.A or 2.0)
    r_h = _r_sharp_hereditary(m, A, seed, settings)
    p_max = max(1, min(n - 1, math.ceil(r_h.value)))
    best: Optional[EstimateCI] = None
    best_moment: Optional[EstimateCI] = None
    for p in range(1, p_max + 1):
        moment = _sections(m, p, seed, settings)
        value = math.sqrt(n) / (A * moment.value)
        candidate = EstimateCI(value, value * moment.stderr / moment.value, moment.sample_count, "ratio")
        if best is None or candidate.value > best.value:
            best, best_moment = candidate, moment
    rhs = EstimateCI.exact(math.sqrt(n) / A)
    details = {"A": A, "r_sharp_H": r_h.value, "p_max": p_max}
    return RelationOutcome(best_moment, rhs, best, details=details)


def _eval_paouris_floor(m, point, seed, settings) -> RelationOutcome:
    delta = float(point.delta or PAOURIS_DELTA)
    (q_h,) = hereditary_q_minus_c_ladder(
        m, [delta], _chain_config(settings), seed.child("q-minus-c-H"), settings
    )
    lhs = EstimateCI.exact(q_h.value, "hereditary-search")
    rhs = EstimateCI.exact(math.sqrt(point.n))
    return RelationOutcome(lhs, rhs, _ratio(lhs, rhs), details={"delta": delta})


########################################################################################
# Grid builders
########################################################################################


def _single(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim)]


def _with_A(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, A=config.A)] if m.dim >= 2 else []


def _with_k(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, k=k) for k in _default_k_values(m.dim, config)]


def _with_p(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, p=p) for p in config.p_values if p >= 1]


def _with_q(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, q=q) for q in config.q_values if q >= 1]


def _with_pq(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, p=p, q=q) for p, q in _ordered_pairs(config)]


def _section_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    closed_form = m.profile is not None and m.profile.moment_iq is not None
    return [point for point in _with_k(m, config) if closed_form or point.k < m.dim / 2.0]


def _projection_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [
        GridPoint(m.dim, k=k, q=q)
        for k in _default_k_values(m.dim, config)
        for q in config.q_values
        if q >= 1
    ]


def _fradelizi_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    profile = m.profile
    has_sup_norm = profile is not None and profile.sup_norm_per_dim is not None
    return [GridPoint(m.dim)] if has_sup_norm else []


def _tilt_stability_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    q_top = max(config.q_values) if config.q_values else 2.0
    return [GridPoint(m.dim, p=p, q=max(p, q_top)) for p in config.p_values if p >= 1]


def _volume_lower_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, p=p, A=config.A) for p in sorted({1.0, *config.p_values}) if p >= 1]


def _paouris_points(m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    return [GridPoint(m.dim, delta=PAOURIS_DELTA)] if m.dim >= 2 else []


########################################################################################
# Catalogue
########################################################################################


def _spec(relation, kind, anchor, evaluate, points, **kwargs) -> RelationSpec:
    return RelationSpec(relation, kind, anchor, evaluate, points, **kwargs)


RELATION_TABLE: Dict[RelationId, RelationSpec] = {
    spec.relation: spec
    for spec in (
        _spec(
            RelationId.SECTION_FORMULA,
            RelationKind.IDENTITY,
            "I_{-k} = c_{n,k} (avg f_{pi_E mu}(0))^{-1/k}",
            _eval_section_formula,
            _section_points,
        ),
        _spec(
            RelationId.PROJECTION_IDENTITY,
            RelationKind.IDENTITY,
            "Proj_E Z_q(mu) = Z_q(pi_E mu)",
            _eval_projection_identity,
            _projection_points,
        ),
        _spec(
            RelationId.IK_WIDTH,
            RelationKind.BAND,
            "I_{-k} ~ sqrt(n/k) w_{-k}(Z_k)",
            _eval_ik_width,
            _with_k,
            band=SINGLE_BAND,
        ),
        _spec(
            RelationId.LZN_IDENTITY,
            RelationKind.BAND,
            "L_mu |Z_n(mu)|^{1/n} ~ 1",
            _eval_lzn_identity,
            _single,
            band=SINGLE_BAND,
            needs_volume=True,
        ),
        _spec(
            RelationId.FRADELIZI,
            RelationKind.INEQUALITY,
            "||mu||_inf^{1/n} <= e f(0)^{1/n}",
            _eval_fradelizi,
            _fradelizi_points,
        ),
        _spec(
            RelationId.REVERSE_INCLUSION,
            RelationKind.BAND,
            "Z_q subset c (q/p) Z_p",
            _eval_reverse_inclusion,
            _with_pq,
            band=(0.0, 8.0),
        ),
        _spec(
            RelationId.LAMBDA_POLAR,
            RelationKind.BAND,
            "Lambda_p(mu) ~ p Z_p(mu)°",
            _eval_lambda_polar,
            _with_p,
            band=(0.0, 8.0),
        ),
        _spec(
            RelationId.TILT_DERIVATIVES,
            RelationKind.GAP,
            "bar(mu'_x) = grad Lambda(x), Cov(mu'_x) = Hess Lambda(x)",
            _eval_tilt_derivatives,
            _single,
            band=(0.0, 1.0),
        ),
        _spec(
            RelationId.TILT_STABILITY,
            RelationKind.BAND,
            "Z_q(mu) ~ Z_q(mu_x) for x in Lambda_p/2, q >= p",
            _eval_tilt_stability,
            _tilt_stability_points,
            band=(0.0, 8.0),
        ),
        _spec(
            RelationId.THEOREM1_CHAIN,
            RelationKind.BAND,
            "r_sharp^H(mu, A) <= q_{-c}^H(mu, C_1 A)",
            _eval_theorem1_chain,
            _with_A,
            band=(0.0, CHAINED_BAND[1]),
        ),
        _spec(
            RelationId.COROLLARY34,
            RelationKind.BAND,
            "I_{-p}(mu) >= I_2(mu) / (C_1 A) for p <= r_sharp^H",
            _eval_corollary34,
            _with_A,
            band=(0.0, CHAINED_BAND[1]),
        ),
        _spec(
            RelationId.VOLUME_LOWER,
            RelationKind.BAND,
            "|Z_p(mu)|^{1/n} >= (c/A) sqrt(p/n)",
            _eval_volume_lower,
            _volume_lower_points,
            band=(CHAINED_BAND[0], math.inf),
            orientation="min",
            needs_volume=True,
        ),
        _spec(
            RelationId.GOOD_MARGINALS,
            RelationKind.INEQUALITY,
            "nu{E : L_{pi_E mu} <= C_1 L_mu} >= 1 - e^{-k}",
            _eval_good_marginals,
            _with_k,
            orientation="min",
        ),
        _spec(
            RelationId.ZP_SQRTP_MONOTONE,
            RelationKind.BAND,
            "|Z_p|^{1/n}/sqrt(p) >> |Z_q|^{1/n}/sqrt(q)",
            _eval_zp_sqrtp,
            _with_pq,
            band=(0.0, 8.0),
            needs_volume=True,
        ),
        _spec(
            RelationId.SANTALO_WIDTH,
            RelationKind.INEQUALITY,
            "w_{-n}(K) = |B|^{1/n}/|K°|^{1/n} >= |K|^{1/n}/|B|^{1/n}",
            _eval_santalo_width,
            _with_p,
            orientation="min",
            needs_volume=True,
        ),
        _spec(
            RelationId.I2_NORMALIZATION,
            RelationKind.IDENTITY,
            "I_2(mu) = sqrt(n)",
            _eval_i2_normalization,
            _single,
        ),
        _spec(
            RelationId.NEGMOMENT_VIA_L,
            RelationKind.BAND,
            "I_{-k} ~ sqrt(n) (avg L_{pi_E mu}^k)^{-1/k}",
            _eval_negmoment_via_l,
            _with_k,
            band=CHAINED_BAND,
        ),
        _spec(
            RelationId.IP_VOLUME,
            RelationKind.BAND,
            "I_{-k} >= c (n/sqrt(k)) |Z_k(mu)|^{1/n}",
            _eval_ip_volume,
            _with_k,
            band=(CHAINED_BAND[0], math.inf),
            orientation="min",
            needs_volume=True,
        ),
        _spec(
            RelationId.NEGMOMENT_LINF,
            RelationKind.BAND,
            "I_{-p} >= c sqrt(n) / ||mu||_inf^{1/n}",
            _eval_negmoment_linf,
            _with_k,
            band=(CHAINED_BAND[0], math.inf),
            orientation="min",
        ),
        _spec(
            RelationId.CIRCUMRADIUS,
            RelationKind.BAND,
            "R(Z_q(mu)) <= c q",
            _eval_circumradius,
            _with_q,
            band=(0.0, 8.0),
        ),
        _spec(
            RelationId.PAOURIS_FLOOR,
            RelationKind.BAND,
            "q_{-c}^H(mu, delta_0) >= c_1 sqrt(n)",
            _eval_paouris_floor,
            _paouris_points,
            band=(CHAINED_BAND[0], math.inf),
            orientation="min",
        ),
    )
}


def relation_spec(relation: RelationId) -> RelationSpec:
    return RELATION_TABLE[RelationId(relation)]


def select_relations(tags: Sequence[str]) -> List[RelationId]:
    """Expand ``all`` and validate tags, keeping catalogue order."""
    if not tags or "all" in tags:
        return list(RELATION_TABLE)
    return [RelationId.parse(tag) for tag in tags]


def grid_points(relation: RelationId, m: MeasureModel, config: RunConfig) -> List[GridPoint]:
    """Admissible grid points of ``relation`` for ``m``; volume relations stop above n = 6."""
    spec = relation_spec(relation)
    if spec.needs_volume and m.dim > MAX_VOLUME_DIM:
        logger.warning(
            "Skipping %s on %s: volume relations stop at n = %d", relation.value, m.tag, MAX_VOLUME_DIM
        )
        return []
    points = spec.points(m, config)
    if not points:
        logger.warning("No admissible grid point for %s on %s", relation.value, m.tag)
    return points


def validate_point(relation: RelationId, point: GridPoint) -> None:
    """Raise on grid points the relation cannot be evaluated at."""
    spec = relation_spec(relation)
    if spec.needs_volume and point.n > MAX_VOLUME_DIM:
        raise ScaleRefusalError(
            f"{relation.value} needs a volume bracket, limited to n <= {MAX_VOLUME_DIM}"
        )
    if point.n < 1:
        raise UsageError("Grid point dimension must be positive")
    if point.k is not None and not 1 <= point.k <= point.n - 1:
        raise UsageError(f"k must satisfy 1 <= k <= n-1, got k={point.k}, n={point.n}")


########################################################################################
# Verdicts and fitted constants
########################################################################################


def decide(spec: RelationSpec, outcome: RelationOutcome) -> Verdict:
    """Verdict of one outcome under the semantics of the relation kind."""
    lhs, rhs = outcome.lhs, outcome.rhs
    sigma = lhs.combined_stderr(rhs)
    scale = max(abs(lhs.value), abs(rhs.value), 1e-300)

    if spec.kind is RelationKind.IDENTITY:
        gap = abs(lhs.value - rhs.value)
        ok = gap <= 3.0 * sigma or gap <= IDENTITY_RELATIVE_TOL * scale
        return Verdict.PASS if ok else Verdict.FAIL

    if spec.kind is RelationKind.INEQUALITY:
        slack = rhs.value - lhs.value
        ok = slack >= -3.0 * sigma or slack >= -IDENTITY_RELATIVE_TOL * scale
        return Verdict.PASS if ok else Verdict.FAIL

    if spec.kind is RelationKind.GAP:
        return Verdict.PASS if outcome.fitted.value <= spec.band[1] else Verdict.FAIL

    low, high = outcome.bounds()
    band_low, band_high = spec.band
    if band_low <= low and high <= band_high:
        return Verdict.PASS
    if high < band_low or low > band_high:
        return Verdict.FAIL
    return Verdict.INDETERMINATE


@dataclass(frozen=True)
class FittedConstant:
    """Constant making a relation hold on every used report."""

    value: float
    used: int
    excluded: int


def fit_constant(relation: RelationId, reports: Sequence[RelationReport]) -> FittedConstant:
    """Max (or min, per orientation) of the per-report constants.

    Indeterminate reports and reports without a fitted constant are excluded and counted.

    Raises:
        UsageError: If no report carries a usable constant
    """
    spec = relation_spec(relation)
    usable = [
        r.fitted_constant
        for r in reports
        if r.relation is spec.relation
        and r.verdict is not Verdict.INDETERMINATE
        and r.fitted_constant is not None
        and not math.isnan(r.fitted_constant)
    ]
    excluded = sum(1 for r in reports if r.relation is spec.relation) - len(usable)
    if not usable:
        raise UsageError(f"No report of {relation.value} carries a usable fitted constant")
    value = max(usable) if spec.orientation == "max" else min(usable)
    if excluded:
        logger.info("fit_constant(%s) excluded %d report(s)", relation.value, excluded)
    return FittedConstant(float(value), len(usable), excluded)
