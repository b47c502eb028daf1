"""Measures module for log-concave measure families, densities and isotropization."""

from .measures import (
    AnalyticProfile,
    Family,
    LBracket,
    LinearImage,
    MeasureModel,
    build_measure,
    cube,
    density_at,
    euclidean_ball,
    gaussian,
    hpoly_body,
    isotropize,
    l1_ball,
    log_volume_unit_ball,
    marginal_of,
    product_exponential,
    simplex,
)
from .empirical import (
    IsotropyDefect,
    check_log_concavity,
    check_normalization,
    isotropic_constant_bracket,
    isotropize_measure,
    isotropy_defect,
)
from .measure_spec import load_hpoly, parse_measure_spec, with_dimension

__all__ = [
    "AnalyticProfile",
    "Family",
    "IsotropyDefect",
    "LBracket",
    "LinearImage",
    "MeasureModel",
    "build_measure",
    "check_log_concavity",
    "check_normalization",
    "cube",
    "density_at",
    "euclidean_ball",
    "gaussian",
    "hpoly_body",
    "isotropic_constant_bracket",
    "isotropize",
    "isotropize_measure",
    "isotropy_defect",
    "l1_ball",
    "load_hpoly",
    "log_volume_unit_ball",
    "marginal_of",
    "parse_measure_spec",
    "product_exponential",
    "simplex",
    "with_dimension",
]
