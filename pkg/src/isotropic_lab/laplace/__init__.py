"""Laplace module for the logarithmic Laplace transform, Lambda_p gauges and tilts."""

from .laplace import (
    GaugeResult,
    LogLaplaceOracle,
    TiltDerivativeReport,
    TiltedMeasure,
    convexity_defect,
    in_half_lambda_p,
    lambda_p_gauge,
    lambda_p_gauges,
    log_laplace,
    tilt,
    tilt_derivative_check,
)

__all__ = [
    "GaugeResult",
    "LogLaplaceOracle",
    "TiltDerivativeReport",
    "TiltedMeasure",
    "convexity_defect",
    "in_half_lambda_p",
    "lambda_p_gauge",
    "lambda_p_gauges",
    "log_laplace",
    "tilt",
    "tilt_derivative_check",
]
