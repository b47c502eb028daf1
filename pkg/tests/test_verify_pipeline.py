#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Unit tests for the relation-check LangGraph pipeline, verdict rules and grid drivers."""

import math
from dataclasses import replace
from typing import Optional
from unittest.mock import MagicMock

import pytest
from pytest_mock import MockerFixture

from src.isotropic_lab.config.settings import EstimatorSettings, RunConfig
from src.isotropic_lab.errors import DomainError, ScaleRefusalError, UsageError
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.measures.measures import cube, gaussian
from src.isotropic_lab.parameters import BoundKind, ParamEstimate
from src.isotropic_lab.results_manager import ResultsManager
from src.isotropic_lab.sampler.sampler import Seed
from src.isotropic_lab.verify import (
    CheckState,
    GridPoint,
    RelationId,
    RelationOutcome,
    RelationReport,
    RelationVerifier,
    Verdict,
    decide,
    fit_constant,
    grid_points,
    trend_slope,
)
from src.isotropic_lab.verify.relations import THEOREM1_LADDER, relation_spec
from src.isotropic_lab.verify.verify_pipeline import (
    decide_verdict,
    evaluate_relation,
    has_error,
    prepare_check,
    record_report,
)


def _state(relation: RelationId, m, point: GridPoint) -> CheckState:
    return {
        "relation": relation,
        "measure": m,
        "grid_point": point,
        "seed": Seed(1),
        "settings": EstimatorSettings(samples=2_000),
        "spec": None,
        "outcome": None,
        "verdict": None,
        "report": None,
        "error": None,
        "completed": False,
    }


def _report(
    relation: RelationId, n: int, fitted: Optional[float], verdict: Verdict
) -> RelationReport:
    return RelationReport(
        relation=relation,
        measure_spec=f"gaussian:{n}",
        grid_point=GridPoint(n),
        lhs=EstimateCI.exact(1.0),
        rhs=EstimateCI.exact(1.0),
        fitted_constant=fitted,
        fitted_stderr=0.0,
        verdict=verdict,
        seed=(1, 0),
    )


@pytest.fixture
def small_settings() -> EstimatorSettings:
    """Create tiny estimator settings for end-to-end checks.

    Returns:
        EstimatorSettings: Settings with small budgets
    """
    return EstimatorSettings(
        samples=2_000,
        inner_samples=500,
        subspace_count=4,
        directions=30,
        volume_points=5_000,
        volume_resolution=100,
        haar_samples=2,
        restarts=1,
        local_steps=1,
    )


class TestPipelineNodes:
    """Unit tests for the node functions of the check graph."""

    @pytest.fixture
    def outcome(self) -> RelationOutcome:
        """Create an exact outcome with fitted constant 0.5.

        Returns:
            RelationOutcome: Outcome of a passing band relation
        """
        return RelationOutcome(
            EstimateCI.exact(1.0), EstimateCI.exact(2.0), EstimateCI.exact(0.5), details={"x": 1}
        )

    def test_prepare_check_sets_spec(self) -> None:
        """Test that a valid point resolves the catalogue entry."""
        result = prepare_check(_state(RelationId.IK_WIDTH, gaussian(3), GridPoint(3, k=1)))
        assert result["error"] is None
        assert result["spec"].relation is RelationId.IK_WIDTH

    def test_prepare_check_dimension_mismatch(self) -> None:
        """Test that the grid point must live in the measure's dimension."""
        result = prepare_check(_state(RelationId.I2_NORMALIZATION, gaussian(2), GridPoint(3)))
        assert isinstance(result["error"], UsageError)
        assert has_error(result)

    def test_prepare_check_invalid_k(self) -> None:
        """Test that k = n is refused before evaluation."""
        result = prepare_check(_state(RelationId.IK_WIDTH, gaussian(3), GridPoint(3, k=3)))
        assert isinstance(result["error"], UsageError)

    def test_prepare_check_volume_scale(self) -> None:
        """Test that volume relations refuse n = 7."""
        result = prepare_check(_state(RelationId.LZN_IDENTITY, gaussian(7), GridPoint(7)))
        assert isinstance(result["error"], ScaleRefusalError)

    def test_evaluate_relation_calls_evaluator(self, outcome: RelationOutcome) -> None:
        """Test that the node hands measure, point, seed and settings to the evaluator.

        Args:
            outcome: Exact outcome
        """
        spec = MagicMock()
        spec.evaluate.return_value = outcome
        state = {**_state(RelationId.CIRCUMRADIUS, gaussian(2), GridPoint(2, q=2.0)), "spec": spec}

        result = evaluate_relation(state)

        spec.evaluate.assert_called_once_with(
            state["measure"], state["grid_point"], state["seed"], state["settings"]
        )
        assert result["outcome"] is outcome

    def test_evaluate_relation_keeps_errors(self) -> None:
        """Test that estimator errors are stored rather than raised."""
        spec = MagicMock()
        spec.evaluate.side_effect = DomainError("p must be >= 1")
        state = {**_state(RelationId.CIRCUMRADIUS, gaussian(2), GridPoint(2)), "spec": spec}

        result = evaluate_relation(state)

        assert isinstance(result["error"], DomainError)
        assert result["completed"] is False

    def test_evaluate_relation_skips_on_error(self) -> None:
        """Test that a state with an error passes through untouched."""
        state = _state(RelationId.CIRCUMRADIUS, gaussian(2), GridPoint(2))
        state = {**state, "error": UsageError("x")}
        assert evaluate_relation(state) is state

    def test_decide_verdict_builds_report(self, outcome: RelationOutcome) -> None:
        """Test that the report carries the verdict, fitted constant and catalogue data.

        Args:
            outcome: Exact outcome
        """
        spec = relation_spec(RelationId.REVERSE_INCLUSION)
        point = GridPoint(2, p=1.0, q=2.0)
        state = {
            **_state(RelationId.REVERSE_INCLUSION, gaussian(2), point),
            "spec": spec,
            "outcome": outcome,
        }

        result = decide_verdict(state)
        report = result["report"]

        assert result["verdict"] is Verdict.PASS
        assert report.fitted_constant == 0.5
        assert report.seed == (1, 0)
        assert report.details["kind"] == "band"
        assert report.details["x"] == 1
        assert report.details["fitted_bounds"] == [0.5, 0.5]

    def test_record_report(self, outcome: RelationOutcome) -> None:
        """Test that the record node hands the report to the manager.

        Args:
            outcome: Exact outcome
        """
        results_manager = MagicMock(spec=ResultsManager)
        state = {
            **_state(RelationId.REVERSE_INCLUSION, gaussian(2), GridPoint(2, p=1.0, q=2.0)),
            "spec": relation_spec(RelationId.REVERSE_INCLUSION),
            "outcome": outcome,
        }
        decided = decide_verdict(state)

        result = record_report(decided, results_manager)

        results_manager.add_report.assert_called_once_with(decided["report"])
        assert result["completed"] is True

    def test_record_report_failure(self, outcome: RelationOutcome, mocker: MockerFixture) -> None:
        """Test that a failing manager turns into a stored error.

        Args:
            outcome: Exact outcome
            mocker: pytest-mock fixture
        """
        results_manager = mocker.MagicMock(spec=ResultsManager)
        results_manager.add_report.side_effect = OSError("disk full")
        state = {
            **_state(RelationId.REVERSE_INCLUSION, gaussian(2), GridPoint(2, p=1.0, q=2.0)),
            "spec": relation_spec(RelationId.REVERSE_INCLUSION),
            "outcome": outcome,
        }

        result = record_report(decide_verdict(state), results_manager)

        assert isinstance(result["error"], OSError)
        assert result["completed"] is False


class TestVerdicts:
    """Unit tests for verdict rules, fitted constants and trends."""

    def test_identity(self) -> None:
        """Test identities within and outside three combined stderrs."""
        spec = relation_spec(RelationId.I2_NORMALIZATION)
        lhs = EstimateCI(1.0, 0.01, 100, "mc")
        assert decide(spec, RelationOutcome(lhs, EstimateCI.exact(1.02))) is Verdict.PASS
        assert decide(spec, RelationOutcome(lhs, EstimateCI.exact(1.1))) is Verdict.FAIL

    def test_inequality(self) -> None:
        """Test lhs <= rhs up to three combined stderrs."""
        spec = relation_spec(RelationId.FRADELIZI)
        lhs = EstimateCI(1.0, 0.01, 100, "mc")
        assert decide(spec, RelationOutcome(lhs, EstimateCI.exact(0.98))) is Verdict.PASS
        assert decide(spec, RelationOutcome(lhs, EstimateCI.exact(0.9))) is Verdict.FAIL

    @pytest.mark.parametrize(
        "value, expected",
        [(1.0, Verdict.PASS), (7.9, Verdict.INDETERMINATE), (9.0, Verdict.FAIL)],
    )
    def test_band(self, value: float, expected: Verdict) -> None:
        """Test the band rule on the interval of the fitted constant.

        Args:
            value: Fitted constant with stderr 0.1
            expected: Verdict against the band (0, 8)
        """
        spec = relation_spec(RelationId.REVERSE_INCLUSION)
        fitted = EstimateCI(value, 0.1, 100, "mc")
        outcome = RelationOutcome(EstimateCI.exact(1.0), EstimateCI.exact(1.0), fitted)
        assert decide(spec, outcome) is expected

    def test_gap(self) -> None:
        """Test that gap relations fail above the band edge."""
        spec = relation_spec(RelationId.TILT_DERIVATIVES)
        exact = EstimateCI.exact(0.0)
        passing = RelationOutcome(exact, exact, EstimateCI.exact(0.5))
        failing = RelationOutcome(exact, exact, EstimateCI.exact(1.5))
        assert decide(spec, passing) is Verdict.PASS
        assert decide(spec, failing) is Verdict.FAIL

    def test_fit_constant_excludes_indeterminate(self) -> None:
        """Test the max over decided reports and the exclusion count."""
        relation = RelationId.CIRCUMRADIUS
        reports = [
            _report(relation, 2, 1.2, Verdict.PASS),
            _report(relation, 3, 1.5, Verdict.FAIL),
            _report(relation, 4, 9.0, Verdict.INDETERMINATE),
            _report(relation, 5, None, Verdict.PASS),
        ]
        fitted = fit_constant(relation, reports)
        assert fitted.value == 1.5
        assert fitted.used == 2
        assert fitted.excluded == 2

    def test_fit_constant_min_orientation(self) -> None:
        """Test that lower-bound relations take the minimum."""
        relation = RelationId.PAOURIS_FLOOR
        reports = [_report(relation, 2, 0.8, Verdict.PASS), _report(relation, 3, 0.6, Verdict.PASS)]
        assert fit_constant(relation, reports).value == 0.6

    def test_fit_constant_without_reports(self) -> None:
        """Test that an empty selection raises UsageError."""
        with pytest.raises(UsageError):
            fit_constant(RelationId.CIRCUMRADIUS, [])

    def test_trend_slope(self) -> None:
        """Test the log-log slope of constants growing like sqrt(n)."""
        relation = RelationId.CIRCUMRADIUS
        reports = [_report(relation, n, math.sqrt(n), Verdict.PASS) for n in (2, 4, 8)]
        assert trend_slope(reports) == pytest.approx(0.5)
        assert trend_slope(reports[:1]) is None


class TestRelationVerifier:
    """End-to-end checks through the compiled graph."""

    @pytest.fixture
    def verifier(self, small_settings: EstimatorSettings) -> RelationVerifier:
        """Create a verifier without a results manager.

        Args:
            small_settings: Tiny estimator settings

        Returns:
            RelationVerifier: Verifier instance
        """
        return RelationVerifier(small_settings)

    def test_gaussian_reverse_inclusion(self, verifier: RelationVerifier) -> None:
        """Test the exact constant sqrt(pi/2)/2 for Z_2 against (2/1) Z_1 of the gaussian.

        Args:
            verifier: RelationVerifier instance
        """
        report = verifier.run_check(
            RelationId.REVERSE_INCLUSION, gaussian(3), GridPoint(3, p=1.0, q=2.0), Seed(1)
        )
        assert report.fitted_constant == pytest.approx(0.6267, abs=1e-4)
        assert report.fitted_stderr == 0.0
        assert report.verdict is Verdict.PASS

    def test_cube_fradelizi_is_tight(self, verifier: RelationVerifier) -> None:
        """Test that uniform measures attain their sup norm at the origin.

        Args:
            verifier: RelationVerifier instance
        """
        report = verifier.run_check(RelationId.FRADELIZI, cube(3), GridPoint(3), Seed(1))
        assert report.fitted_constant == pytest.approx(1.0)
        assert report.verdict is Verdict.PASS

    def test_gaussian_paouris_floor(self, verifier: RelationVerifier) -> None:
        """Test q_{-c}^H(gamma_4, 4) = 2 = sqrt(4).

        Args:
            verifier: RelationVerifier instance
        """
        report = verifier.run_check(
            RelationId.PAOURIS_FLOOR, gaussian(4), GridPoint(4, delta=4.0), Seed(1)
        )
        assert report.fitted_constant == pytest.approx(1.0)

    def test_gaussian_theorem1_chain(self, verifier: RelationVerifier) -> None:
        """Test that the first ladder constant already closes the chain for gamma_3.

        Args:
            verifier: RelationVerifier instance
        """
        point = GridPoint(3, A=2.0)
        report = verifier.run_check(RelationId.THEOREM1_CHAIN, gaussian(3), point, Seed(1))
        assert report.fitted_constant == pytest.approx(1.0)
        assert report.details["r_sharp_H"] == pytest.approx(1.5)

    def test_theorem1_chain_shares_one_ladder_sweep(
        self, verifier: RelationVerifier, mocker: MockerFixture
    ) -> None:
        """Test that every rung comes from one ladder call on the chain Haar budget.

        Args:
            verifier: RelationVerifier instance
            mocker: pytest-mock fixture
        """
        r_sharp_h = ParamEstimate("r_sharp_H", 3.0, BoundKind.UPPER_ESTIMATE)
        hereditary = mocker.patch(
            "src.isotropic_lab.verify.relations.hereditary", return_value=r_sharp_h
        )
        rungs = [
            ParamEstimate("q_minus_c_H", float(j // 4), BoundKind.UPPER_ESTIMATE)
            for j in range(len(THEOREM1_LADDER))
        ]
        ladder = mocker.patch(
            "src.isotropic_lab.verify.relations.hereditary_q_minus_c_ladder", return_value=rungs
        )
        settings = replace(verifier.settings, chain_haar_samples=3)

        report = RelationVerifier(settings).run_check(
            RelationId.THEOREM1_CHAIN, cube(4), GridPoint(4, A=2.0), Seed(1)
        )

        ladder.assert_called_once()
        deltas = ladder.call_args.args[1]
        assert deltas == pytest.approx([2.0 * c for c in THEOREM1_LADDER])
        assert ladder.call_args.args[2].haar_samples == 3
        assert hereditary.call_args.args[2].haar_samples == 3
        # rung j = 12 is the first with q = 3
        assert report.fitted_constant == pytest.approx(THEOREM1_LADDER[12])
        assert report.details["q_minus_c_H"] == 3.0

    def test_run_check_raises_estimator_errors(self, verifier: RelationVerifier) -> None:
        """Test that pipeline errors surface from run_check.

        Args:
            verifier: RelationVerifier instance
        """
        with pytest.raises(UsageError):
            verifier.run_check(RelationId.IK_WIDTH, gaussian(3), GridPoint(3, k=5), Seed(1))

    def test_run_check_records_report(self, small_settings: EstimatorSettings) -> None:
        """Test that the results manager receives the report.

        Args:
            small_settings: Tiny estimator settings
        """
        results_manager = MagicMock(spec=ResultsManager)
        verifier = RelationVerifier(small_settings, results_manager)

        report = verifier.run_check(RelationId.FRADELIZI, cube(2), GridPoint(2), Seed(1))

        results_manager.add_report.assert_called_once_with(report)

    def test_run_grid_is_thread_invariant(self, small_settings: EstimatorSettings) -> None:
        """Test that threaded grids give the same reports in the same order.

        Args:
            small_settings: Tiny estimator settings
        """
        single_manager = ResultsManager()
        threaded_manager = ResultsManager()
        threaded_settings = replace(small_settings, threads=3)

        single = RelationVerifier(small_settings, single_manager).run_grid(
            RelationId.I2_NORMALIZATION, ["gaussian", "cube"], [2, 3], Seed(5)
        )
        threaded = RelationVerifier(threaded_settings, threaded_manager).run_grid(
            RelationId.I2_NORMALIZATION, ["gaussian", "cube"], [2, 3], Seed(5)
        )

        assert len(single.reports) == 4
        assert [r.fitted_constant for r in single.reports] == [
            r.fitted_constant for r in threaded.reports
        ]
        single_lines = [record.payload_json() for record in single_manager.records]
        threaded_lines = [record.payload_json() for record in threaded_manager.records]
        assert single_lines == threaded_lines
        assert single.summary.counts["pass"] + single.summary.counts["fail"] == 4

    def test_run_grid_collects_bad_specs(self, verifier: RelationVerifier) -> None:
        """Test that unbuildable measures become grid errors.

        Args:
            verifier: RelationVerifier instance
        """
        result = verifier.run_grid(RelationId.FRADELIZI, ["nosuch", "cube"], [2], Seed(1))
        assert len(result.errors) == 1
        assert result.errors[0].to_payload()["kind"] == "grid-error"
        assert len(result.reports) == 1

    def test_run_grid_empty(self, verifier: RelationVerifier) -> None:
        """Test that an empty grid is refused.

        Args:
            verifier: RelationVerifier instance
        """
        with pytest.raises(UsageError):
            verifier.run_grid(RelationId.FRADELIZI, [], [2], Seed(1))

    def test_run_grid_sorts_dimensions(self, verifier: RelationVerifier) -> None:
        """Test that repeated dimensions run once and reports come back in ascending n.

        Args:
            verifier: RelationVerifier instance
        """
        result = verifier.run_grid(RelationId.FRADELIZI, ["cube"], [3, 2, 3], Seed(1))
        assert [report.grid_point.n for report in result.reports] == [2, 3]


@pytest.mark.slow
@pytest.mark.parametrize("relation", list(RelationId))
def test_every_relation_runs_on_gaussian(
    relation: RelationId, small_settings: EstimatorSettings
) -> None:
    """Test that every catalogue entry evaluates on gamma_3 at its first grid point.

    Args:
        relation: Catalogue tag
        small_settings: Tiny estimator settings
    """
    config = RunConfig(settings=small_settings, k_values=[1], p_values=[1.0, 2.0], q_values=[2.0])
    points = grid_points(relation, gaussian(3), config)
    assert points

    report = RelationVerifier(small_settings).run_check(relation, gaussian(3), points[0], Seed(3))

    assert report.verdict in set(Verdict)
    assert report.relation is relation
