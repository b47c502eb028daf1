#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Parameters of isotropic measures: q_{-c}, k_*, q_*, r_sharp and their hereditary forms."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import UsageError
from src.isotropic_lab.functionals.bodies import BodyOracle, circumradius, q_mean_width, zp_body
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.functionals.functionals import (
    DirectionGrid,
    I_negk_via_sections,
    marginal_L_surrogate,
    random_direction_grid,
)
from src.isotropic_lab.measures.measures import Family, MeasureModel, marginal_of
from src.isotropic_lab.parameters.grassmann_search import (
    GrassmannSearchConfig,
    grassmann_minimize,
    local_search,
)
from src.isotropic_lab.sampler.sampler import Seed, Subspace, draw, haar_subspace, ordered_map

logger = logging.getLogger(__name__)

# Families whose marginals onto any k-subspace share one law
ROTATION_INVARIANT = frozenset({Family.GAUSSIAN, Family.EUCLIDEAN_BALL})


class BoundKind(str, Enum):
    """Epistemic status of a parameter value."""

    EXACT = "exact"
    LOWER_CERTIFICATE = "lower-certificate"
    UPPER_ESTIMATE = "upper-estimate"


@dataclass(frozen=True)
class ParamEstimate:
    """Value of a parameter with its bound kind, optional witness subspace and config echo."""

    name: str
    value: float
    bound_kind: BoundKind
    witness: Optional[Subspace] = None
    flags: Tuple[str, ...] = ()
    details: Dict[str, Any] = field(default_factory=dict)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "bound_kind": self.bound_kind.value,
            "witness_k": None if self.witness is None else self.witness.k,
            "flags": list(self.flags),
            "details": self.details,
        }


def _require_isotropic(m: MeasureModel, name: str) -> None:
    if not m.isotropic:
        raise UsageError(f"{name} is defined for isotropic measures; {m.tag} is not flagged isotropic")


########################################################################################
# q_{-c}
########################################################################################


def negative_moment_profile(
    m: MeasureModel, seed: Seed, settings: Optional[EstimatorSettings] = None
) -> List[EstimateCI]:
    """I_{-p}(mu) for p = 1, ..., n-1 by the section formula."""
    settings = settings or EstimatorSettings()
    return [
        I_negk_via_sections(m, p, settings.subspace_count, seed.child("negative-moment", p), settings)
        for p in range(1, m.dim)
    ]


def q_minus_c(
    m: MeasureModel,
    delta: float,
    seed: Seed,
    settings: Optional[EstimatorSettings] = None,
) -> ParamEstimate:
    """Largest p <= n-1 with I_{-p}(mu) >= sqrt(n) / delta, by a descending scan.

    Each decision uses the 3-stderr interval of the section estimate; straddling
    intervals double the budget up to ``max_refinements`` times before the scan stops
    with ``indeterminate-at-p``.
    """
    if delta < 1:
        raise UsageError(f"delta must be >= 1, got {delta}")
    _require_isotropic(m, "q_minus_c")
    settings = settings or EstimatorSettings()
    n = m.dim
    echo = {"delta": delta, "n": n}
    if n == 1:
        return ParamEstimate("q_minus_c", 1, BoundKind.EXACT, flags=("one-dimensional",), details=echo)

    threshold = math.sqrt(n) / delta
    for p in range(n - 1, 0, -1):
        decided: Optional[bool] = None
        for level in range(settings.max_refinements + 1):
            budget = settings.scaled(2**level)
            estimate = I_negk_via_sections(
                m, p, budget.subspace_count, seed.child("q-minus-c", p * 16 + level), budget
            )
            low, high = estimate.interval(3.0)
            if low >= threshold:
                decided = True
            elif high < threshold:
                decided = False
            if decided is not None:
                break
            logger.info("q_minus_c at p=%d undecided at budget x%d; refining", p, 2**level)
        if decided is None:
            logger.warning("q_minus_c of %s is indeterminate at p=%d", m.tag, p)
            details = {
                **echo,
                "indeterminate_p": p,
                "estimate": estimate.value,
                "stderr": estimate.stderr,
            }
            return ParamEstimate(
                "q_minus_c", p, BoundKind.UPPER_ESTIMATE, flags=("indeterminate-at-p",), details=details
            )
        if decided:
            return ParamEstimate(
                "q_minus_c",
                p,
                BoundKind.EXACT,
                details={**echo, "estimate": estimate.value, "stderr": estimate.stderr},
            )
    return ParamEstimate("q_minus_c", 0, BoundKind.EXACT, flags=("empty-set",), details=echo)


def q_minus_c_from_profile(profile: Sequence[EstimateCI], n: int, delta: float) -> ParamEstimate:
    """q_{-c} read off a precomputed profile I_{-1}, ..., I_{-(n-1)}.

    Decisions use the 3-stderr interval as in ``q_minus_c``. The profile has a fixed
    budget, so a straddling interval ends the scan with ``indeterminate-at-p``.
    """
    if delta < 1:
        raise UsageError(f"delta must be >= 1, got {delta}")
    echo = {"delta": delta, "n": n}
    if n == 1:
        return ParamEstimate("q_minus_c", 1, BoundKind.EXACT, flags=("one-dimensional",), details=echo)
    if len(profile) != n - 1:
        raise UsageError(f"Profile of a {n}-dimensional measure needs {n - 1} entries")

    threshold = math.sqrt(n) / delta
    for p in range(n - 1, 0, -1):
        estimate = profile[p - 1]
        low, high = estimate.interval(3.0)
        details = {**echo, "estimate": estimate.value, "stderr": estimate.stderr}
        if low >= threshold:
            return ParamEstimate("q_minus_c", p, BoundKind.EXACT, details=details)
        if high >= threshold:
            return ParamEstimate(
                "q_minus_c",
                p,
                BoundKind.UPPER_ESTIMATE,
                flags=("indeterminate-at-p",),
                details={**details, "indeterminate_p": p},
            )
    return ParamEstimate("q_minus_c", 0, BoundKind.EXACT, flags=("empty-set",), details=echo)


########################################################################################
# k_* and q_*
########################################################################################


def k_star(body: BodyOracle, grid: DirectionGrid) -> EstimateCI:
    """Dual Dvoretzky dimension n (w_1(K) / R(K))^2 with the convention constant 1."""
    width = q_mean_width(body, 1.0, grid)
    radius = circumradius(body, grid)
    n = body.dim
    ratio = width.value / radius.value
    stderr = 2.0 * n * ratio * width.stderr / radius.value
    return EstimateCI(n * ratio**2, stderr, grid.size, "k-star")


def q_star(
    m: MeasureModel, seed: Seed, settings: Optional[EstimatorSettings] = None
) -> ParamEstimate:
    """Largest p with k_*(Z_p(mu)) >= p: geometric ladder {1, 2, 4, ...} plus n, then bisection."""
    _require_isotropic(m, "q_star")
    settings = settings or EstimatorSettings()
    n = m.dim
    batch = draw(m, settings.samples, seed.child("q-star-batch"), settings)
    grid = random_direction_grid(n, settings.directions, seed.child("q-star-grid"))
    k_values: Dict[int, float] = {}

    def qualifies(p: int) -> bool:
        if p not in k_values:
            k_values[p] = k_star(zp_body(m, batch, float(p), settings), grid).value
        return k_values[p] >= p

    ladder = []
    p = 1
    while p < n:
        ladder.append(p)
        p *= 2
    ladder.append(n)

    last_ok: Optional[int] = None
    first_fail: Optional[int] = None
    for p in ladder:
        if qualifies(p):
            last_ok = p
        else:
            first_fail = p
            break
    flags: Tuple[str, ...] = ()
    if last_ok is None:
        logger.warning("k_*(Z_1) < 1 for %s; reporting q_star = 1", m.tag)
        last_ok, flags = 1, ("p1-fails",)
    elif first_fail is not None:
        while first_fail - last_ok > 1:
            mid = (last_ok + first_fail) // 2
            if qualifies(mid):
                last_ok = mid
            else:
                first_fail = mid
    details = {"n": n, "k_star": {str(p): v for p, v in sorted(k_values.items())}}
    return ParamEstimate("q_star", last_ok, BoundKind.UPPER_ESTIMATE, flags=flags, details=details)


########################################################################################
# r_sharp
########################################################################################


def _marginal_l_upper(
    m: MeasureModel, subspace: Subspace, seed: Seed, settings: EstimatorSettings
) -> Tuple[float, float]:
    bracket = marginal_L_surrogate(m, subspace, seed, settings)
    if bracket.exact is not None:
        return bracket.exact, 0.0
    return bracket.hi, math.e * bracket.stderr


def r_sharp(
    m: MeasureModel,
    A: float,
    config: Optional[GrassmannSearchConfig] = None,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
) -> ParamEstimate:
    """Largest k <= n-1 with a k-dimensional marginal whose isotropic constant is <= A.

    For k = n-1 down to 1 the upper Fradelizi endpoint (exact L where known) is minimised
    over G_{n,k}; the first k whose witness re-evaluates to an upper endpoint at most A
    with 3 stderr of margin is a lower certificate.
    """
    if A < 1:
        raise UsageError(f"A must be >= 1, got {A}")
    _require_isotropic(m, "r_sharp")
    settings = settings or EstimatorSettings()
    config = config or GrassmannSearchConfig.from_settings(settings)
    seed = seed or Seed(0)
    n = m.dim
    echo = {"A": A, "n": n, "restarts": config.restarts, "local_steps": config.local_steps}
    if n == 1:
        return ParamEstimate("r_sharp", 1, BoundKind.EXACT, flags=("one-dimensional",), details=echo)

    for k in range(n - 1, 0, -1):
        eval_seed = seed.child("r-sharp-eval", k)

        def objective(subspace: Subspace) -> float:
            return _marginal_l_upper(m, subspace, eval_seed, settings)[0]

        result = grassmann_minimize(
            objective, n, k, config, seed.child("r-sharp-search", k), target=A, threads=settings.threads
        )
        if result.value > A:
            logger.info(
                "r_sharp(%s, A=%g): best k=%d marginal has upper L %.4g", m.tag, A, k, result.value
            )
            continue
        upper, stderr = _marginal_l_upper(m, result.best, seed.child("r-sharp-witness", k), settings)
        if upper + 3.0 * stderr <= A:
            logger.info("r_sharp(%s, A=%g) certified at k=%d", m.tag, A, k)
            details = {**echo, "witness_upper_L": upper, "evaluations": result.evaluations}
            return ParamEstimate("r_sharp", k, BoundKind.LOWER_CERTIFICATE, result.best, details=details)
        logger.warning("Witness for r_sharp at k=%d did not reproduce (upper L %.4g)", k, upper)

    return ParamEstimate("r_sharp", 1, BoundKind.EXACT, flags=("convention-floor",), details=echo)


########################################################################################
# Hereditary parameters
########################################################################################

HEREDITARY_PARAMS = ("q_minus_c", "r_sharp", "q_star")


def _inner_parameter(
    param: str,
    delta: Optional[float],
    A: Optional[float],
    config: GrassmannSearchConfig,
    settings: EstimatorSettings,
) -> Callable[[MeasureModel, Seed], ParamEstimate]:
    if param == "q_minus_c":
        if delta is None:
            raise UsageError("hereditary q_minus_c needs delta")
        return lambda measure, seed: q_minus_c(measure, delta, seed, settings)
    if param == "r_sharp":
        if A is None:
            raise UsageError("hereditary r_sharp needs A")
        return lambda measure, seed: r_sharp(measure, A, config, seed, settings)
    if param == "q_star":
        return lambda measure, seed: q_star(measure, seed, settings)
    raise UsageError(f"Unknown hereditary parameter {param!r}; choose from {HEREDITARY_PARAMS}")


def hereditary(
    param: str,
    m: MeasureModel,
    config: Optional[GrassmannSearchConfig] = None,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
    delta: Optional[float] = None,
    A: Optional[float] = None,
) -> ParamEstimate:
    """n times the infimum over k and E in G_{n,k} of param(pi_E mu) / k.

    k is enumerated exhaustively. For each 1 < k < n the infimum over E is sampled from
    ``haar_samples`` Haar subspaces followed by a local search from the best one; marginals
    of rotation-invariant families share one law and are evaluated once. One-dimensional
    marginals contribute the conventional ratio 1.
    """
    settings = settings or EstimatorSettings()
    config = config or GrassmannSearchConfig.from_settings(settings)
    seed = seed or Seed(0)
    _require_isotropic(m, f"hereditary {param}")
    inner = _inner_parameter(param, delta, A, config, settings)
    n = m.dim

    def inner_value(subspace: Subspace, inner_seed: Seed) -> float:
        estimate = inner(marginal_of(m, subspace), inner_seed)
        return float(math.floor(estimate.value)) if param == "q_minus_c" else float(estimate.value)

    ratios: Dict[int, float] = {1: 1.0}
    best_ratio, best_witness, best_k = 1.0, None, 1
    for k in range(2, n + 1):
        k_seed = seed.child(f"hereditary-{param}", k)
        if k == n:
            witness = Subspace(n, n, np.eye(n))
            value = inner_value(witness, k_seed.child("inner"))
        elif m.family in ROTATION_INVARIANT:
            witness = haar_subspace(n, k, k_seed.child("haar"))
            value = inner_value(witness, k_seed.child("inner"))
        else:
            candidates = [
                haar_subspace(n, k, k_seed.child("haar", j)) for j in range(config.haar_samples)
            ]
            values = ordered_map(
                lambda indexed: inner_value(indexed[1], k_seed.child("inner", indexed[0])),
                list(enumerate(candidates)),
                settings.threads,
            )
            start = int(np.argmin(values))
            local_seed = k_seed.child("inner-local")
            result = local_search(
                lambda subspace: inner_value(subspace, local_seed),
                candidates[start],
                values[start],
                config,
                k_seed.child("local").generator(),
                anneal=False,
            )
            witness, value = result.best, result.value
        ratios[k] = value / k
        logger.info("hereditary %s of %s: k=%d ratio %.4g", param, m.tag, k, ratios[k])
        if ratios[k] < best_ratio:
            best_ratio, best_witness, best_k = ratios[k], witness, k
        if best_ratio == 0.0:
            break

    details = {
        "n": n,
        "delta": delta,
        "A": A,
        "argmin_k": best_k,
        "ratios": {str(k): r for k, r in ratios.items()},
        "haar_samples": config.haar_samples,
    }
    return ParamEstimate(
        f"{param}_H", n * best_ratio, BoundKind.UPPER_ESTIMATE, best_witness, details=details
    )


def hereditary_q_minus_c_ladder(
    m: MeasureModel,
    deltas: Sequence[float],
    config: Optional[GrassmannSearchConfig] = None,
    seed: Optional[Seed] = None,
    settings: Optional[EstimatorSettings] = None,
) -> List[ParamEstimate]:
    """q_{-c}^H(mu, delta) for every delta in ``deltas`` from one sweep over k and E.

    Each candidate marginal gets one negative-moment profile and every delta is read off
    it with ``q_minus_c_from_profile``. The infimum over E is the minimum over
    ``haar_samples`` Haar subspaces, without a local search.

    Args:
        m: Isotropic base measure
        deltas: Ladder of delta values, each >= 1
        config: Search config; only ``haar_samples`` is used
        seed: Seed of the sweep
        settings: Estimator budgets of each profile

    Returns:
        List[ParamEstimate]: One upper estimate per delta, in the order given
    """
    settings = settings or EstimatorSettings()
    config = config or GrassmannSearchConfig.from_settings(settings)
    seed = seed or Seed(0)
    _require_isotropic(m, "hereditary q_minus_c")
    if not deltas or min(deltas) < 1:
        raise UsageError(f"deltas must be a non-empty ladder of values >= 1, got {list(deltas)}")
    n = m.dim

    ratios: List[Dict[int, float]] = [{1: 1.0} for _ in deltas]
    best: List[Tuple[float, Optional[Subspace], int]] = [(1.0, None, 1) for _ in deltas]
    for k in range(2, n + 1):
        k_seed = seed.child("hereditary-ladder", k)
        if k == n:
            candidates = [Subspace(n, n, np.eye(n))]
        elif m.family in ROTATION_INVARIANT:
            candidates = [haar_subspace(n, k, k_seed.child("haar"))]
        else:
            candidates = [
                haar_subspace(n, k, k_seed.child("haar", j)) for j in range(config.haar_samples)
            ]
        profiles = ordered_map(
            lambda indexed: negative_moment_profile(
                marginal_of(m, indexed[1]), k_seed.child("profile", indexed[0]), settings
            ),
            list(enumerate(candidates)),
            settings.threads,
        )
        for i, delta in enumerate(deltas):
            values = [
                math.floor(q_minus_c_from_profile(profile, k, delta).value) for profile in profiles
            ]
            j = int(np.argmin(values))
            ratios[i][k] = values[j] / k
            if ratios[i][k] < best[i][0]:
                best[i] = (ratios[i][k], candidates[j], k)
        logger.info("hereditary q_minus_c ladder of %s: k=%d done", m.tag, k)
        if all(ratio == 0.0 for ratio, _, _ in best):
            break

    estimates = []
    for i, delta in enumerate(deltas):
        ratio, witness, argmin_k = best[i]
        details = {
            "n": n,
            "delta": delta,
            "argmin_k": argmin_k,
            "ratios": {str(k): r for k, r in ratios[i].items()},
            "haar_samples": config.haar_samples,
        }
        estimate = ParamEstimate(
            "q_minus_c_H", n * ratio, BoundKind.UPPER_ESTIMATE, witness, details=details
        )
        estimates.append(estimate)
    return estimates
