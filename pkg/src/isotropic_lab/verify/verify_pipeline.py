#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""LangGraph pipeline that checks one relation at one grid point, and grid drivers around it."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from src.isotropic_lab.config.settings import EstimatorSettings, RunConfig, relation_grid
from src.isotropic_lab.errors import UsageError
from src.isotropic_lab.measures.measure_spec import parse_measure_spec, with_dimension
from src.isotropic_lab.measures.measures import MeasureModel
from src.isotropic_lab.results_manager.results_manager import ResultsManager
from src.isotropic_lab.sampler.sampler import Seed, ordered_map
from src.isotropic_lab.verify.relations import (
    GridPoint,
    RelationId,
    RelationOutcome,
    RelationReport,
    RelationSpec,
    Verdict,
    decide,
    fit_constant,
    grid_points,
    relation_spec,
    validate_point,
)

logger = logging.getLogger(__name__)


class CheckState(TypedDict):
    """State of one relation check.

    The check moves from a validated grid point to the evaluated outcome, then to the
    verdict and finally to the stored report. Any exception stops the graph and is kept
    in ``error``.
    """

    # Input data
    relation: RelationId
    measure: MeasureModel
    grid_point: GridPoint
    seed: Seed
    settings: EstimatorSettings

    # Evaluation data
    spec: Optional[RelationSpec]
    outcome: Optional[RelationOutcome]

    # Decision data
    verdict: Optional[Verdict]
    report: Optional[RelationReport]

    # Error handling
    error: Optional[BaseException]

    # Execution status
    completed: bool


########################################################################################
# Prepare check node
########################################################################################


def prepare_check(state: CheckState) -> CheckState:
    """Validate the grid point against the relation and the measure.

    Args:
        state: Current check state

    Returns:
        Updated check state
    """
    try:
        relation = RelationId(state["relation"])
        point = state["grid_point"]
        m = state["measure"]
        if point.n != m.dim:
            raise UsageError(f"Grid point has n={point.n} but {m.tag} lives in R^{m.dim}")
        validate_point(relation, point)
        return {**state, "relation": relation, "spec": relation_spec(relation), "error": None}
    except Exception as e:
        return {**state, "error": e, "completed": False}


########################################################################################
# Evaluate relation node
########################################################################################


def evaluate_relation(state: CheckState) -> CheckState:
    """Compute both sides and the fitted constant through the owning modules."""
    if state.get("error"):
        return state
    try:
        spec = state["spec"]
        logger.info(
            "Checking %s on %s at %s",
            spec.relation.value,
            state["measure"].tag,
            state["grid_point"].to_payload(),
        )
        outcome = spec.evaluate(state["measure"], state["grid_point"], state["seed"], state["settings"])
        return {**state, "outcome": outcome, "error": None}
    except Exception as e:
        return {**state, "error": e, "completed": False}


########################################################################################
# Decide verdict node
########################################################################################


def decide_verdict(state: CheckState) -> CheckState:
    """Apply the identity, band, inequality or gap rule and assemble the report."""
    if state.get("error"):
        return state
    try:
        spec, outcome = state["spec"], state["outcome"]
        verdict = decide(spec, outcome)
        fitted = outcome.fitted
        seed = state["seed"]
        report = RelationReport(
            relation=spec.relation,
            measure_spec=state["measure"].tag,
            grid_point=state["grid_point"],
            lhs=outcome.lhs,
            rhs=outcome.rhs,
            fitted_constant=None if fitted is None else float(fitted.value),
            fitted_stderr=0.0 if fitted is None else float(fitted.stderr),
            verdict=verdict,
            seed=(seed.master, seed.stream_id),
            details={
                **outcome.details,
                "kind": spec.kind.value,
                "band": list(spec.band),
                "anchor": spec.anchor,
                "fitted_bounds": None if outcome.bounds() is None else list(outcome.bounds()),
            },
        )
        if verdict is not Verdict.PASS:
            logger.warning(
                "%s on %s at %s: %s (fitted %s)",
                spec.relation.value,
                report.measure_spec,
                report.grid_point.to_payload(),
                verdict.value,
                report.fitted_constant,
            )
        return {**state, "verdict": verdict, "report": report, "error": None}
    except Exception as e:
        return {**state, "error": e, "completed": False}


########################################################################################
# Record report node
########################################################################################


def record_report(state: CheckState, results_manager: Optional[ResultsManager]) -> CheckState:
    """Hand the report to the results manager."""
    if state.get("error"):
        return state
    try:
        if results_manager is not None:
            results_manager.add_report(state["report"])
        return {**state, "completed": True, "error": None}
    except Exception as e:
        return {**state, "error": e, "completed": False}


def has_error(state: CheckState) -> bool:
    return state.get("error") is not None


########################################################################################
# Grid results
########################################################################################


@dataclass(frozen=True)
class GridError:
    """A grid point whose check raised."""

    relation: RelationId
    measure_spec: str
    grid_point: Optional[GridPoint]
    error: BaseException

    def to_payload(self) -> Dict[str, Any]:
        return {
            "kind": "grid-error",
            "relation": self.relation.value,
            "measure_spec": self.measure_spec,
            "grid_point": None if self.grid_point is None else self.grid_point.to_payload(),
            "error": f"{type(self.error).__name__}: {self.error}",
        }


@dataclass(frozen=True)
class GridSummary:
    """Aggregate of one relation over a grid."""

    relation: RelationId
    fitted_constant: Optional[float]
    max_fitted_constant: Optional[float]
    trend_slope: Optional[float]
    used: int
    excluded: int
    counts: Dict[str, int] = field(default_factory=dict)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "kind": "grid-summary",
            "relation": self.relation.value,
            "fitted_constant": self.fitted_constant,
            "max_fitted_constant": self.max_fitted_constant,
            "trend_slope": self.trend_slope,
            "used": self.used,
            "excluded": self.excluded,
            "counts": self.counts,
        }


@dataclass
class GridResult:
    reports: List[RelationReport]
    errors: List[GridError]
    summary: GridSummary


def trend_slope(reports: Sequence[RelationReport], orientation: str = "max") -> Optional[float]:
    """Least-squares slope of log fitted constant against log n.

    Per dimension the constant is reduced with the relation's orientation; the slope needs
    two dimensions with positive finite constants.
    """
    per_n: Dict[int, float] = {}
    reduce = max if orientation == "max" else min
    for r in reports:
        c = r.fitted_constant
        if c is None or not math.isfinite(c) or c <= 0 or r.verdict is Verdict.INDETERMINATE:
            continue
        n = r.grid_point.n
        per_n[n] = c if n not in per_n else reduce(per_n[n], c)
    if len(per_n) < 2:
        return None
    dims = sorted(per_n)
    slope, _ = np.polyfit(np.log(dims), np.log([per_n[n] for n in dims]), 1)
    return float(slope)


def summarize(relation: RelationId, reports: Sequence[RelationReport]) -> GridSummary:
    spec = relation_spec(relation)
    counts = {v.value: sum(1 for r in reports if r.verdict is v) for v in Verdict}
    try:
        fitted = fit_constant(relation, reports)
        value, used, excluded = fitted.value, fitted.used, fitted.excluded
    except UsageError:
        value, used, excluded = None, 0, len(reports)
    finite = [r.fitted_constant for r in reports if r.fitted_constant is not None]
    return GridSummary(
        relation=relation,
        fitted_constant=value,
        max_fitted_constant=max(finite) if finite else None,
        trend_slope=trend_slope(reports, spec.orientation),
        used=used,
        excluded=excluded,
        counts=counts,
    )


########################################################################################
# Verifier
########################################################################################


class RelationVerifier:
    """Runs relation checks through the LangGraph pipeline."""

    def __init__(
        self,
        settings: Optional[EstimatorSettings] = None,
        results_manager: Optional[ResultsManager] = None,
    ):
        """Initialize the verifier.

        Args:
            settings: Estimator settings shared by every check
            results_manager: Receives every report (none are stored if None)
        """
        self.settings = settings or EstimatorSettings()
        self.results_manager = results_manager
        self.graph = self._build_graph(results_manager)
        # Grid runs record reports themselves, in grid order
        self.grid_graph = self._build_graph(None)

    def _build_graph(self, results_manager: Optional[ResultsManager]) -> StateGraph:
        """Build the check graph.

        Args:
            results_manager: Manager the record node hands reports to

        Returns:
            StateGraph: The compiled graph
        """
        builder = StateGraph(CheckState)

        builder.add_node("prepare_check", prepare_check)
        builder.add_node("evaluate_relation", evaluate_relation)
        builder.add_node("decide_verdict", decide_verdict)
        builder.add_node("record_report", lambda state: record_report(state, results_manager))

        builder.set_entry_point("prepare_check")
        builder.add_conditional_edges(
            "prepare_check", has_error, {True: END, False: "evaluate_relation"}
        )
        builder.add_conditional_edges(
            "evaluate_relation", has_error, {True: END, False: "decide_verdict"}
        )
        builder.add_conditional_edges("decide_verdict", has_error, {True: END, False: "record_report"})
        builder.add_edge("record_report", END)

        return builder.compile()

    def _invoke(
        self,
        relation: RelationId,
        m: MeasureModel,
        grid_point: GridPoint,
        seed: Seed,
        settings: Optional[EstimatorSettings] = None,
        graph: Any = None,
    ) -> CheckState:
        initial_state: CheckState = {
            "relation": relation,
            "measure": m,
            "grid_point": grid_point,
            "seed": seed,
            "settings": settings or self.settings,
            "spec": None,
            "outcome": None,
            "verdict": None,
            "report": None,
            "error": None,
            "completed": False,
        }
        return (graph or self.graph).invoke(initial_state)

    def run_check(
        self, relation: RelationId, m: MeasureModel, grid_point: GridPoint, seed: Seed
    ) -> RelationReport:
        """Check one relation on one measure at one grid point.

        Raises:
            IsolabError: Any estimator error of the check, re-raised from the pipeline
        """
        state = self._invoke(RelationId(relation), m, grid_point, seed)
        if state.get("error") is not None:
            raise state["error"]
        return state["report"]

    def run_grid(
        self,
        relation: RelationId,
        measure_specs: Sequence[str],
        n_values: Sequence[int],
        seed: Seed,
        config: Optional[RunConfig] = None,
    ) -> GridResult:
        """Check ``relation`` over measures x dimensions x the relation's grid points.

        Grid points run concurrently over ``settings.threads`` and reports come back in
        grid order, dimensions ascending and de-duplicated. Failing points are collected in
        ``errors``.

        Raises:
            UsageError: If the grid is empty
        """
        relation = RelationId(relation)
        measure_specs, n_values = relation_grid(measure_specs, n_values)
        config = config or RunConfig(settings=self.settings)

        tasks: List[Tuple[str, MeasureModel, GridPoint, Seed]] = []
        errors: List[GridError] = []
        for spec_text in measure_specs:
            for n in n_values:
                tag = f"{relation.value}|{spec_text}|{n}"
                try:
                    m = parse_measure_spec(
                        with_dimension(spec_text, n), seed.child("measure", n), self.settings
                    )
                except Exception as e:
                    logger.warning("Cannot build %s at n=%d: %s", spec_text, n, e)
                    errors.append(GridError(relation, spec_text, None, e))
                    continue
                for index, point in enumerate(grid_points(relation, m, config)):
                    tasks.append((spec_text, m, point, seed.child(tag, index)))

        threads = self.settings.threads
        inner = replace(self.settings, threads=1) if threads > 1 else self.settings

        def run_task(task: Tuple[str, MeasureModel, GridPoint, Seed]) -> CheckState:
            _, m, point, task_seed = task
            return self._invoke(relation, m, point, task_seed, inner, self.grid_graph)

        states = ordered_map(run_task, tasks, threads)
        reports: List[RelationReport] = []
        for (spec_text, _, point, _), state in zip(tasks, states):
            if state.get("error") is not None:
                logger.warning(
                    "%s failed on %s at %s: %s",
                    relation.value,
                    spec_text,
                    point.to_payload(),
                    state["error"],
                )
                errors.append(GridError(relation, spec_text, point, state["error"]))
            else:
                reports.append(state["report"])
                if self.results_manager is not None:
                    self.results_manager.add_report(state["report"])
        summary = summarize(relation, reports)
        logger.info(
            "%s: %d report(s), %d error(s), fitted constant %s",
            relation.value,
            len(reports),
            len(errors),
            summary.fitted_constant,
        )
        return GridResult(reports, errors, summary)
