"""Parameters module for q_{-c}, k_*, q_*, r_sharp and their hereditary variants."""

from .grassmann_search import GrassmannSearchConfig, grassmann_minimize, givens_move
from .parameters import (
    BoundKind,
    ParamEstimate,
    hereditary,
    hereditary_q_minus_c_ladder,
    k_star,
    negative_moment_profile,
    q_minus_c,
    q_minus_c_from_profile,
    q_star,
    r_sharp,
)

__all__ = [
    "BoundKind",
    "GrassmannSearchConfig",
    "ParamEstimate",
    "givens_move",
    "grassmann_minimize",
    "hereditary",
    "hereditary_q_minus_c_ladder",
    "k_star",
    "negative_moment_profile",
    "q_minus_c",
    "q_minus_c_from_profile",
    "q_star",
    "r_sharp",
]
