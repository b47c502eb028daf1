"""Functionals module for Monte Carlo estimators of moments, centroid bodies and widths."""

from .estimate import EstimateCI, power_mean
from .functionals import (
    DirectionGrid,
    I_negk_via_sections,
    boundary_point_Zp,
    cnk,
    covariance,
    marginal_density_at_zero,
    marginal_L_surrogate,
    moment_Iq,
    random_direction_grid,
    support_Zp,
)
from .bodies import (
    BodyOracle,
    VolumeBracket,
    ball_body,
    circumradius,
    function_body,
    polar_volume_per_dim,
    polar_width,
    q_mean_width,
    volume_bracket,
    zp_body,
)
from src.isotropic_lab.measures.measures import log_volume_unit_ball

__all__ = [
    "BodyOracle",
    "DirectionGrid",
    "EstimateCI",
    "I_negk_via_sections",
    "VolumeBracket",
    "ball_body",
    "boundary_point_Zp",
    "circumradius",
    "cnk",
    "covariance",
    "function_body",
    "log_volume_unit_ball",
    "marginal_L_surrogate",
    "marginal_density_at_zero",
    "moment_Iq",
    "polar_volume_per_dim",
    "polar_width",
    "power_mean",
    "q_mean_width",
    "random_direction_grid",
    "support_Zp",
    "volume_bracket",
    "zp_body",
]
