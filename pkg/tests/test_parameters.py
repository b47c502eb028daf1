#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Unit tests for q_{-c}, k_*, q_*, r_sharp, the hereditary parameters and the Grassmann search."""

import numpy as np
import pytest
from pytest_mock import MockerFixture

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import UsageError
from src.isotropic_lab.functionals import ball_body, random_direction_grid
from src.isotropic_lab.functionals.estimate import EstimateCI
from src.isotropic_lab.measures.measures import cube, gaussian, hpoly_body
from src.isotropic_lab.parameters import (
    BoundKind,
    GrassmannSearchConfig,
    givens_move,
    grassmann_minimize,
    hereditary,
    hereditary_q_minus_c_ladder,
    k_star,
    negative_moment_profile,
    q_minus_c,
    q_minus_c_from_profile,
    q_star,
    r_sharp,
)
from src.isotropic_lab.sampler.sampler import Seed, haar_subspace


@pytest.fixture
def settings() -> EstimatorSettings:
    """Create small parameter settings shared by every test class.

    Returns:
        EstimatorSettings: Settings with small budgets
    """
    return EstimatorSettings(
        samples=5_000,
        inner_samples=2_000,
        subspace_count=4,
        directions=50,
        restarts=1,
        local_steps=2,
        haar_samples=4,
        max_refinements=1,
    )


class TestNegativeMomentParameter:
    """Unit tests for q_minus_c."""

    def test_gaussian_reaches_n_minus_one(self, settings: EstimatorSettings) -> None:
        """Test q_{-c}(gamma_10, 2) = 9 from exact gaussian sections.

        Args:
            settings: Small parameter settings
        """
        estimate = q_minus_c(gaussian(10), 2.0, Seed(1), settings)
        assert estimate.value == 9
        assert estimate.bound_kind is BoundKind.EXACT
        assert estimate.details["delta"] == 2.0

    def test_empty_set(self, settings: EstimatorSettings) -> None:
        """Test that delta = 1 leaves no admissible p since I_{-p} < sqrt(n).

        Args:
            settings: Small parameter settings
        """
        estimate = q_minus_c(gaussian(10), 1.0, Seed(1), settings)
        assert estimate.value == 0
        assert "empty-set" in estimate.flags

    def test_one_dimensional(self, settings: EstimatorSettings) -> None:
        """Test the one-dimensional convention.

        Args:
            settings: Small parameter settings
        """
        assert q_minus_c(gaussian(1), 2.0, Seed(1), settings).value == 1

    def test_delta_below_one(self, settings: EstimatorSettings) -> None:
        """Test that delta < 1 is refused.

        Args:
            settings: Small parameter settings
        """
        with pytest.raises(UsageError):
            q_minus_c(gaussian(3), 0.5, Seed(1), settings)

    def test_requires_isotropic(self, settings: EstimatorSettings) -> None:
        """Test that a polytope not flagged isotropic is refused.

        Args:
            settings: Small parameter settings
        """
        square = hpoly_body(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        with pytest.raises(UsageError, match="isotropic"):
            q_minus_c(square, 2.0, Seed(1), settings)

    def test_negative_moment_profile(self, settings: EstimatorSettings) -> None:
        """Test that the profile lists I_{-1}, ..., I_{-(n-1)} in increasing order of p.

        Args:
            settings: Small parameter settings
        """
        profile = negative_moment_profile(gaussian(4), Seed(2), settings)
        assert len(profile) == 3
        values = [estimate.value for estimate in profile]
        assert values == sorted(values, reverse=True)

    @pytest.mark.parametrize("delta", [1.0, 1.5, 2.0, 4.0])
    def test_profile_readout_matches_scan(self, settings: EstimatorSettings, delta: float) -> None:
        """Test that reading q_{-c} off the gaussian profile agrees with the scan.

        Args:
            settings: Small parameter settings
            delta: Constant of the threshold sqrt(n) / delta
        """
        m = gaussian(6)
        profile = negative_moment_profile(m, Seed(2), settings)
        readout = q_minus_c_from_profile(profile, 6, delta)
        scanned = q_minus_c(m, delta, Seed(2), settings)
        assert readout.value == scanned.value
        assert readout.flags == scanned.flags

    def test_profile_straddle_is_indeterminate(self) -> None:
        """Test that an interval around the threshold ends the readout as an upper estimate."""
        profile = [EstimateCI.exact(2.0), EstimateCI(1.0, 0.1, 100, "sections")]
        estimate = q_minus_c_from_profile(profile, 3, 2.0)
        assert estimate.value == 2
        assert estimate.bound_kind is BoundKind.UPPER_ESTIMATE
        assert "indeterminate-at-p" in estimate.flags
        assert estimate.details["indeterminate_p"] == 2

    def test_profile_length_must_match(self) -> None:
        """Test that a profile of the wrong dimension is refused."""
        with pytest.raises(UsageError, match="entries"):
            q_minus_c_from_profile([EstimateCI.exact(1.0)], 4, 2.0)


class TestDvoretzkyParameters:
    """Unit tests for k_* and q_*."""

    def test_k_star_of_ball(self) -> None:
        """Test k_*(B) = n since w_1 equals the circumradius."""
        grid = random_direction_grid(5, 40, Seed(3))
        estimate = k_star(ball_body(5, 2.0), grid)
        assert estimate.value == pytest.approx(5.0)

    def test_q_star_of_gaussian(self, settings: EstimatorSettings) -> None:
        """Test that every Z_p of the gaussian is a ball so q_* reaches n.

        Args:
            settings: Small parameter settings
        """
        estimate = q_star(gaussian(4), Seed(4), settings)
        assert estimate.value == 4
        assert estimate.bound_kind is BoundKind.UPPER_ESTIMATE
        assert set(estimate.details["k_star"]) == {"1", "2", "4"}


class TestMarginalParameters:
    """Unit tests for r_sharp and the hereditary parameters."""

    def test_gaussian_r_sharp(self, settings: EstimatorSettings) -> None:
        """Test r_sharp(gamma_n, 1.5) = n - 1 with a certified witness.

        Args:
            settings: Small parameter settings
        """
        estimate = r_sharp(gaussian(5), 1.5, seed=Seed(5), settings=settings)
        assert estimate.value == 4
        assert estimate.bound_kind is BoundKind.LOWER_CERTIFICATE
        assert estimate.witness.k == 4

    def test_r_sharp_needs_A_at_least_one(self, settings: EstimatorSettings) -> None:
        """Test that A < 1 is refused.

        Args:
            settings: Small parameter settings
        """
        with pytest.raises(UsageError):
            r_sharp(gaussian(3), 0.5, seed=Seed(1), settings=settings)

    @pytest.mark.parametrize(
        "stderr, expected, kind",
        [(0.0, 2, BoundKind.LOWER_CERTIFICATE), (0.1, 1, BoundKind.EXACT)],
    )
    def test_r_sharp_witness_needs_margin(
        self,
        settings: EstimatorSettings,
        mocker: MockerFixture,
        stderr: float,
        expected: int,
        kind: BoundKind,
    ) -> None:
        """Test that a witness certifies only when upper L plus 3 stderr stays below A.

        Args:
            settings: Small parameter settings
            mocker: pytest-mock fixture
            stderr: Standard error of the re-evaluated upper endpoint
            expected: Resulting r_sharp value
            kind: Resulting bound kind
        """
        mocker.patch(
            "src.isotropic_lab.parameters.parameters._marginal_l_upper",
            return_value=(1.95, stderr),
        )
        estimate = r_sharp(cube(3), 2.0, seed=Seed(5), settings=settings)
        assert estimate.value == expected
        assert estimate.bound_kind is kind

    def test_hereditary_r_sharp(self, settings: EstimatorSettings) -> None:
        """Test r_sharp^H(gamma_n, 1.5) = n/2, attained at k = 2.

        Args:
            settings: Small parameter settings
        """
        estimate = hereditary("r_sharp", gaussian(4), seed=Seed(6), settings=settings, A=1.5)
        assert estimate.name == "r_sharp_H"
        assert estimate.value == pytest.approx(2.0)
        assert estimate.details["argmin_k"] == 2

    def test_hereditary_q_minus_c(self, settings: EstimatorSettings) -> None:
        """Test q_{-c}^H(gamma_3, 2) = 3/2.

        Args:
            settings: Small parameter settings
        """
        estimate = hereditary("q_minus_c", gaussian(3), seed=Seed(7), settings=settings, delta=2.0)
        assert estimate.value == pytest.approx(1.5)
        assert estimate.details["ratios"]["3"] == pytest.approx(2.0 / 3.0)

    def test_hereditary_needs_its_constant(self, settings: EstimatorSettings) -> None:
        """Test that missing delta or unknown names are refused.

        Args:
            settings: Small parameter settings
        """
        with pytest.raises(UsageError, match="delta"):
            hereditary("q_minus_c", gaussian(3), settings=settings)
        with pytest.raises(UsageError, match="Unknown"):
            hereditary("k_star", gaussian(3), settings=settings)

    def test_ladder_matches_hereditary(self, settings: EstimatorSettings) -> None:
        """Test the gaussian ladder against closed-form hereditary values.

        delta = 1 empties the 2-dimensional marginal since I_{-1}(gamma_2) < sqrt(2).

        Args:
            settings: Small parameter settings
        """
        deltas = [2.0, 1.0, 4.0]
        ladder = hereditary_q_minus_c_ladder(gaussian(3), deltas, seed=Seed(7), settings=settings)
        single = hereditary("q_minus_c", gaussian(3), seed=Seed(7), settings=settings, delta=2.0)
        assert [estimate.value for estimate in ladder] == pytest.approx([1.5, 0.0, 1.5])
        assert ladder[0].value == pytest.approx(single.value)
        assert ladder[1].details["argmin_k"] == 2
        assert all(estimate.bound_kind is BoundKind.UPPER_ESTIMATE for estimate in ladder)

    def test_ladder_reads_one_profile_per_subspace(
        self, settings: EstimatorSettings, mocker: MockerFixture
    ) -> None:
        """Test that the number of profiles does not depend on the number of deltas.

        Args:
            settings: Small parameter settings
            mocker: pytest-mock fixture
        """
        spy = mocker.patch(
            "src.isotropic_lab.parameters.parameters.negative_moment_profile",
            wraps=negative_moment_profile,
        )
        deltas = [2.0 ** (j / 4.0) * 2.0 for j in range(17)]
        ladder = hereditary_q_minus_c_ladder(cube(3), deltas, seed=Seed(8), settings=settings)

        assert len(ladder) == 17
        # four Haar candidates at k = 2 plus the identity at k = 3
        assert spy.call_count == settings.haar_samples + 1
        values = [estimate.value for estimate in ladder]
        assert values == sorted(values)

    def test_ladder_refuses_small_delta(self, settings: EstimatorSettings) -> None:
        """Test that every delta of the ladder must be at least 1.

        Args:
            settings: Small parameter settings
        """
        with pytest.raises(UsageError, match="ladder"):
            hereditary_q_minus_c_ladder(gaussian(3), [2.0, 0.5], settings=settings)


class TestGrassmannSearch:
    """Unit tests for Givens moves and the restart search."""

    def test_givens_move_keeps_orthonormality(self) -> None:
        """Test that moves stay on the Grassmannian."""
        rng = np.random.default_rng(0)
        subspace = haar_subspace(6, 3, Seed(1))
        for _ in range(20):
            subspace = givens_move(subspace, rng, 0.5)
        np.testing.assert_allclose(subspace.frame.T @ subspace.frame, np.eye(3), atol=1e-10)

    def test_full_subspace_does_not_move(self) -> None:
        """Test that G_{n,n} has a single point."""
        subspace = haar_subspace(3, 3, Seed(1))
        assert givens_move(subspace, np.random.default_rng(0), 0.5) is subspace

    def test_config_validation(self) -> None:
        """Test that invalid knobs are refused."""
        with pytest.raises(UsageError):
            GrassmannSearchConfig(restarts=0)
        with pytest.raises(UsageError):
            GrassmannSearchConfig(move_scale=2.0)

    def test_search_improves_on_start_and_is_reproducible(self) -> None:
        """Test that the search finds lines close to e_1 and ignores the thread count."""
        config = GrassmannSearchConfig(restarts=3, local_steps=30)

        def distance_to_axis(subspace) -> float:
            return 1.0 - float(subspace.frame[0, 0] ** 2)

        starts = [
            distance_to_axis(haar_subspace(4, 1, Seed(8).child("restart", i))) for i in range(3)
        ]
        single = grassmann_minimize(distance_to_axis, 4, 1, config, Seed(8))
        threaded = grassmann_minimize(distance_to_axis, 4, 1, config, Seed(8), threads=3)

        assert single.value <= min(starts)
        assert single.value == threaded.value
        assert single.evaluations == 3 * 31

    def test_cube_search_is_seeded(self, settings: EstimatorSettings) -> None:
        """Test that r_sharp on the cube is reproducible for a fixed seed.

        Args:
            settings: Small parameter settings
        """
        first = r_sharp(cube(3), 1.5, seed=Seed(9), settings=settings)
        second = r_sharp(cube(3), 1.5, seed=Seed(9), settings=settings)
        assert first.value == second.value == 2
