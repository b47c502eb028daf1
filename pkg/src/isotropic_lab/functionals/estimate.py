#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Monte Carlo estimate with standard error: the universal numeric return."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class EstimateCI:
    """Estimate with standard error, sample count and method tag.

    ``stderr`` is zero only for closed-form evaluations.
    """

    value: float
    stderr: float
    sample_count: int
    method: str
    flags: Tuple[str, ...] = field(default_factory=tuple)
    bias: float = 0.0

    @classmethod
    def exact(cls, value: float, method: str = "closed-form") -> "EstimateCI":
        return cls(float(value), 0.0, 0, method)

    @property
    def is_exact(self) -> bool:
        return self.stderr == 0.0

    def interval(self, z: float = 3.0) -> Tuple[float, float]:
        return (self.value - z * self.stderr, self.value + z * self.stderr)

    def combined_stderr(self, other: "EstimateCI") -> float:
        """Standard error of the difference of two independent estimates."""
        return math.hypot(self.stderr, other.stderr)

    def with_flags(self, *flags: str) -> "EstimateCI":
        merged = tuple(dict.fromkeys(self.flags + tuple(flags)))
        return EstimateCI(self.value, self.stderr, self.sample_count, self.method, merged, self.bias)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "value": float(self.value),
            "stderr": float(self.stderr),
            "sample_count": int(self.sample_count),
            "method": self.method,
            "flags": list(self.flags),
            "bias": float(self.bias),
        }


def power_mean(values: np.ndarray, q: float, weights: np.ndarray = None) -> Tuple[float, float]:
    """(sum w v^q)^{1/q} and its delta-method stderr for i.i.d. values.

    Args:
        values: Positive samples
        q: Non-zero exponent
        weights: Optional probability weights; uniform when omitted

    Returns:
        Tuple of (power mean, stderr)
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    powered = values**q
    if weights is None:
        mean = float(powered.mean())
        var = float(powered.var(ddof=1)) / count if count > 1 else 0.0
    else:
        w = np.asarray(weights, dtype=float)
        mean = float(np.dot(w, powered))
        var = float(np.dot(w**2, (powered - mean) ** 2)) * count / max(count - 1, 1)
    result = mean ** (1.0 / q)
    stderr = abs(result / (q * mean)) * math.sqrt(max(var, 0.0))
    return result, stderr
