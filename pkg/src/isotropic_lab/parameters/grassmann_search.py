#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Stochastic minimisation over the Grassmannian by Haar restarts and Givens moves."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import UsageError
from src.isotropic_lab.sampler.sampler import Seed, Subspace, haar_subspace, ordered_map

logger = logging.getLogger(__name__)

# Initial annealing temperature relative to the starting objective value
INITIAL_TEMPERATURE = 0.1


@dataclass(frozen=True)
class GrassmannSearchConfig:
    """Knobs of the Grassmannian search."""

    restarts: int = 4
    local_steps: int = 16
    move_scale: float = 0.5
    cooling_rate: float = 0.9
    haar_samples: int = 256

    def __post_init__(self):
        if self.restarts < 1 or self.haar_samples < 1 or self.local_steps < 0:
            raise UsageError("restarts and haar_samples must be positive, local_steps non-negative")
        if not 0.0 < self.move_scale <= math.pi / 2:
            raise UsageError(f"move_scale must lie in (0, pi/2], got {self.move_scale}")
        if not 0.0 < self.cooling_rate <= 1.0:
            raise UsageError(f"cooling_rate must lie in (0, 1], got {self.cooling_rate}")

    @classmethod
    def from_settings(cls, settings: EstimatorSettings) -> "GrassmannSearchConfig":
        return cls(
            restarts=settings.restarts,
            local_steps=settings.local_steps,
            move_scale=settings.move_scale,
            cooling_rate=settings.cooling_rate,
            haar_samples=settings.haar_samples,
        )


@dataclass(frozen=True)
class SearchResult:
    best: Subspace
    value: float
    evaluations: int


def givens_move(subspace: Subspace, rng: np.random.Generator, move_scale: float) -> Subspace:
    """Rotate one frame column towards one orthocomplement direction by a random angle."""
    complement = subspace.complement_frame()
    if complement.shape[1] == 0:
        return subspace
    i = int(rng.integers(subspace.k))
    j = int(rng.integers(complement.shape[1]))
    angle = float(rng.uniform(-move_scale, move_scale))
    frame = subspace.frame.copy()
    frame[:, i] = math.cos(angle) * frame[:, i] + math.sin(angle) * complement[:, j]
    q, r = np.linalg.qr(frame)
    return Subspace(subspace.ambient, subspace.k, q * np.sign(np.diag(r)))


def local_search(
    objective: Callable[[Subspace], float],
    start: Subspace,
    start_value: float,
    config: GrassmannSearchConfig,
    rng: np.random.Generator,
    target: Optional[float] = None,
    anneal: bool = True,
) -> SearchResult:
    """Givens-move descent from ``start``; with ``anneal`` worse moves are sometimes accepted."""
    current, current_value = start, start_value
    best, best_value = start, start_value
    temperature = INITIAL_TEMPERATURE * max(abs(start_value), 1e-12)
    evaluations = 0
    for _ in range(config.local_steps):
        if target is not None and best_value <= target:
            break
        candidate = givens_move(current, rng, config.move_scale)
        value = objective(candidate)
        evaluations += 1
        uphill = value - current_value
        accept = uphill < 0 or (anneal and rng.random() < math.exp(-uphill / temperature))
        if accept:
            current, current_value = candidate, value
            if value < best_value:
                best, best_value = candidate, value
        temperature *= config.cooling_rate
    return SearchResult(best, best_value, evaluations)


def grassmann_minimize(
    objective: Callable[[Subspace], float],
    n: int,
    k: int,
    config: GrassmannSearchConfig,
    seed: Seed,
    target: Optional[float] = None,
    threads: int = 1,
) -> SearchResult:
    """Minimise ``objective`` over G_{n,k} with annealed Givens moves from Haar restarts.

    Each restart stops as soon as its best value reaches ``target``. Restarts may run
    concurrently; the reduction keeps the first minimum in restart order.
    """

    def run_restart(index: int) -> SearchResult:
        start = haar_subspace(n, k, seed.child("restart", index))
        start_value = objective(start)
        rng = seed.child("moves", index).generator()
        result = local_search(objective, start, start_value, config, rng, target)
        return SearchResult(result.best, result.value, result.evaluations + 1)

    results: List[SearchResult] = ordered_map(run_restart, range(config.restarts), threads)
    best = min(results, key=lambda r: r.value)
    total = sum(r.evaluations for r in results)
    logger.debug("Grassmann search G(%d,%d): best %.6g after %d evaluations", n, k, best.value, total)
    return SearchResult(best.best, best.value, total)
