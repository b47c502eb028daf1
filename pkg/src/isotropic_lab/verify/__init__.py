"""Verify module for executable relation checks, fitted constants and grid audits."""

from .relations import (
    RELATION_TABLE,
    FittedConstant,
    GridPoint,
    RelationId,
    RelationKind,
    RelationOutcome,
    RelationReport,
    RelationSpec,
    Verdict,
    decide,
    fit_constant,
    grid_points,
    select_relations,
)
from .verify_pipeline import (
    CheckState,
    GridError,
    GridResult,
    GridSummary,
    RelationVerifier,
    trend_slope,
)

__all__ = [
    "RELATION_TABLE",
    "CheckState",
    "FittedConstant",
    "GridError",
    "GridPoint",
    "GridResult",
    "GridSummary",
    "RelationId",
    "RelationKind",
    "RelationOutcome",
    "RelationReport",
    "RelationSpec",
    "RelationVerifier",
    "Verdict",
    "decide",
    "fit_constant",
    "grid_points",
    "select_relations",
    "trend_slope",
]
