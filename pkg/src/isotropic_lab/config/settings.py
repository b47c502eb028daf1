#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Run configuration: estimator budgets, grids, config files and environment defaults."""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.isotropic_lab.errors import UsageError

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.3.0"

SEED_ENV_VAR = "ISOLAB_SEED"
THREADS_ENV_VAR = "ISOLAB_THREADS"
DEFAULT_SEED = 20240917

# Directions used by volume_bracket per ambient dimension; qhull cost grows quickly past n=4
DEFAULT_VOLUME_RESOLUTION = {1: 200, 2: 2000, 3: 5000, 4: 2000, 5: 800, 6: 400}


@dataclass(frozen=True)
class EstimatorSettings:
    """Sample budgets and search knobs shared by every estimator."""

    samples: int = 200_000
    inner_samples: int = 20_000
    subspace_count: int = 128
    directions: int = 200
    volume_points: int = 200_000
    volume_resolution: Optional[int] = None
    burnin_factor: int = 100
    thinning_factor: int = 1
    haar_samples: int = 256
    chain_haar_samples: int = 16
    restarts: int = 4
    local_steps: int = 16
    move_scale: float = 0.5
    cooling_rate: float = 0.9
    max_refinements: int = 3
    high_variance_p: float = 40.0
    fd_step: float = 1e-3
    chunk_size: int = 65_536
    threads: int = 1

    def __post_init__(self):
        for name in (
            "samples",
            "inner_samples",
            "subspace_count",
            "directions",
            "volume_points",
            "burnin_factor",
            "thinning_factor",
            "haar_samples",
            "chain_haar_samples",
            "restarts",
            "chunk_size",
            "threads",
        ):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.local_steps < 0 or self.max_refinements < 0:
            raise UsageError("local_steps and max_refinements must be non-negative")
        if self.volume_resolution is not None and self.volume_resolution < 100:
            raise UsageError("volume_resolution must be at least 100 directions")

    def resolution_for(self, dim: int) -> int:
        """Number of volume_bracket directions to use in dimension ``dim``."""
        if self.volume_resolution is not None:
            return self.volume_resolution
        return DEFAULT_VOLUME_RESOLUTION.get(dim, 400)

    def scaled(self, factor: int) -> "EstimatorSettings":
        """Return a copy with every Monte Carlo budget multiplied by ``factor``."""
        return replace(
            self,
            samples=self.samples * factor,
            inner_samples=self.inner_samples * factor,
            subspace_count=self.subspace_count * factor,
        )


@dataclass
class RunConfig:
    """Everything a command needs to produce a reproducible result record."""

    seed: int = DEFAULT_SEED
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)
    measures: List[str] = field(default_factory=lambda: ["gaussian"])
    n_values: List[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    k_values: List[int] = field(default_factory=list)
    p_values: List[float] = field(default_factory=lambda: [2.0])
    q_values: List[float] = field(default_factory=lambda: [2.0])
    delta: float = 2.0
    A: float = 2.0
    relations: List[str] = field(default_factory=lambda: ["all"])
    output_path: Optional[str] = None
    csv_path: Optional[str] = None

    def digest(self) -> str:
        """SHA-256 over the numeric content of the configuration.

        Thread count and output paths are excluded so that parallelism and file placement
        never change the digest.
        """
        content = asdict(self)
        content.pop("output_path")
        content.pop("csv_path")
        content["settings"].pop("threads")
        canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


########################################################################################
# Config file and environment
########################################################################################


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse flat ``key = value`` text with ``#`` comments.

    Args:
        text: File contents

    Returns:
        Dict of raw string values keyed by name

    Raises:
        UsageError: If a non-comment line has no ``=``
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"Config line {lineno} is not 'key = value': {raw.strip()}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config_file(path: str) -> Dict[str, str]:
    """Read a config file from disk.

    Args:
        path: Path to the config file

    Returns:
        Dict of raw string values keyed by name
    """
    if not os.path.exists(path):
        raise UsageError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def environment_defaults(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Collect defaults from ``ISOLAB_SEED`` and ``ISOLAB_THREADS``."""
    environ = os.environ if environ is None else environ
    values: Dict[str, str] = {}
    if environ.get(SEED_ENV_VAR):
        values["seed"] = environ[SEED_ENV_VAR]
    if environ.get(THREADS_ENV_VAR):
        values["threads"] = environ[THREADS_ENV_VAR]
    return values


def _parse_list(value: str, cast) -> list:
    return [cast(item.strip()) for item in value.split(",") if item.strip()]


_SETTINGS_FIELDS = {f.name: f.type for f in fields(EstimatorSettings)}

_RUN_FIELDS = {
    "seed": int,
    "measures": lambda v: _parse_list(v, str),
    "n_values": lambda v: _parse_list(v, int),
    "k_values": lambda v: _parse_list(v, int),
    "p_values": lambda v: _parse_list(v, float),
    "q_values": lambda v: _parse_list(v, float),
    "delta": float,
    "A": float,
    "relations": lambda v: _parse_list(v, str),
    "output_path": str,
    "csv_path": str,
}


def _cast_setting(name: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    if name == "volume_resolution":
        return None if value.lower() in ("", "none", "auto") else int(value)
    if name in ("move_scale", "cooling_rate", "high_variance_p", "fd_step"):
        return float(value)
    return int(value)


def build_run_config(*layers: Mapping[str, Any]) -> RunConfig:
    """Merge value layers into a RunConfig; later layers override earlier ones.

    Args:
        *layers: Mappings of raw values, e.g. environment, config file, command line.
            ``None`` values in a layer are ignored.

    Returns:
        RunConfig: The resolved configuration

    Raises:
        UsageError: On unknown keys or unparsable values
    """
    merged: Dict[str, Any] = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})

    run_kwargs: Dict[str, Any] = {}
    settings_kwargs: Dict[str, Any] = {}
    for key, value in merged.items():
        try:
            if key in _RUN_FIELDS:
                cast = _RUN_FIELDS[key]
                run_kwargs[key] = cast(value) if isinstance(value, str) else value
            elif key in _SETTINGS_FIELDS:
                settings_kwargs[key] = _cast_setting(key, value)
            else:
                raise UsageError(f"Unknown configuration key: {key}")
        except ValueError as e:
            if isinstance(e, UsageError):
                raise
            raise UsageError(f"Invalid value for {key}: {value!r}") from e

    config = RunConfig(settings=EstimatorSettings(**settings_kwargs), **run_kwargs)
    logger.debug("Resolved run configuration with digest %s", config.digest())
    return config


def relation_grid(
    measures: Sequence[str], n_values: Sequence[int]
) -> Tuple[List[str], List[int]]:
    """Return the measure specs and the sorted, de-duplicated dimensions a grid run sweeps."""
    if not measures or not n_values:
        raise UsageError("Grid must contain at least one measure and one dimension")
    return list(measures), sorted(set(n_values))
