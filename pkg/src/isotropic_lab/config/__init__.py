"""Config module for estimator settings, run configurations and environment defaults."""

from .settings import (
    DEFAULT_SEED,
    EstimatorSettings,
    RunConfig,
    build_run_config,
    environment_defaults,
    load_config_file,
    parse_config_text,
)

__all__ = [
    "DEFAULT_SEED",
    "EstimatorSettings",
    "RunConfig",
    "build_run_config",
    "environment_defaults",
    "load_config_file",
    "parse_config_text",
]
