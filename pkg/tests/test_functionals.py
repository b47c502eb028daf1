#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Unit tests for moment, centroid-body and marginal-density estimators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st
from scipy.special import gammaln

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import DomainError, UsageError, VarianceRefusalError
from src.isotropic_lab.functionals import (
    EstimateCI,
    I_negk_via_sections,
    boundary_point_Zp,
    cnk,
    covariance,
    marginal_density_at_zero,
    marginal_L_surrogate,
    moment_Iq,
    power_mean,
    random_direction_grid,
    support_Zp,
)
from src.isotropic_lab.measures.measures import (
    cube,
    euclidean_ball,
    gaussian,
    hpoly_body,
    marginal_of,
    product_exponential,
)
from src.isotropic_lab.sampler.sampler import Seed, Subspace, draw, haar_subspace


class TestEstimateCI:
    """Unit tests for the estimate record."""

    def test_exact_has_zero_stderr(self) -> None:
        """Test the closed-form constructor."""
        estimate = EstimateCI.exact(2.5)
        assert estimate.is_exact
        assert estimate.interval() == (2.5, 2.5)

    def test_flags_merge_without_duplicates(self) -> None:
        """Test that flags accumulate in order."""
        estimate = EstimateCI(1.0, 0.1, 10, "mc").with_flags("unstable").with_flags("unstable", "x")
        assert estimate.flags == ("unstable", "x")

    def test_payload(self) -> None:
        """Test the serialisable payload."""
        payload = EstimateCI(1.0, 0.1, 10, "mc", ("a",)).to_payload()
        assert payload == {
            "value": 1.0,
            "stderr": 0.1,
            "sample_count": 10,
            "method": "mc",
            "flags": ["a"],
            "bias": 0.0,
        }

    def test_power_mean_of_constants(self) -> None:
        """Test that a constant sample has zero spread."""
        value, stderr = power_mean(np.full(20, 3.0), -2.0)
        assert value == pytest.approx(3.0)
        assert stderr == pytest.approx(0.0)

    @given(
        values=st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=2, max_size=30),
        exponents=st.lists(
            st.floats(min_value=-5.0, max_value=5.0).filter(lambda q: abs(q) > 0.05),
            min_size=2,
            max_size=2,
        ),
    )
    @hypothesis_settings(max_examples=100, deadline=None)
    def test_power_mean_is_monotone_in_q(self, values: list, exponents: list) -> None:
        """Test that the power mean never decreases as the exponent grows.

        Args:
            values: Positive sample
            exponents: Two non-zero exponents
        """
        low_q, high_q = sorted(exponents)
        low, _ = power_mean(np.array(values), low_q)
        high, _ = power_mean(np.array(values), high_q)
        assert low <= high * (1.0 + 1e-9)


class TestMoments:
    """Unit tests for I_q and the section constants."""

    @pytest.fixture
    def batch(self):
        """Create a gaussian batch in dimension 10.

        Returns:
            SampleBatch: 50k standard gaussian draws
        """
        return draw(gaussian(10), 50_000, Seed(10))

    def test_cnk_values(self) -> None:
        """Test c_{2,1} = 1/pi and c_{3,2}."""
        assert cnk(2, 1) == pytest.approx(1.0 / math.pi)
        assert cnk(3, 2) == pytest.approx(0.39894, abs=1e-5)

    def test_cnk_range(self) -> None:
        """Test that k must lie in [1, n-1]."""
        with pytest.raises(UsageError):
            cnk(3, 3)

    def test_I2_is_sqrt_n(self, batch) -> None:
        """Test I_2 = sqrt(10) for the isotropic gaussian.

        Args:
            batch: Gaussian batch
        """
        estimate = moment_Iq(gaussian(10), 2.0, batch)
        assert abs(estimate.value - 3.16228) <= 4.0 * estimate.stderr

    def test_direct_negative_moment_matches_closed_form(self, batch) -> None:
        """Test I_{-2} by direct sampling against the closed form.

        Args:
            batch: Gaussian batch
        """
        m = gaussian(10)
        estimate = moment_Iq(m, -2.0, batch)
        exact = m.profile.moment_iq(-2.0)
        assert abs(estimate.value - exact) <= 4.0 * estimate.stderr

    def test_moment_domain(self, batch) -> None:
        """Test q = 0 and q <= -n are refused, -n < q <= -n/2 too.

        Args:
            batch: Gaussian batch
        """
        m = gaussian(10)
        with pytest.raises(DomainError):
            moment_Iq(m, 0.0, batch)
        with pytest.raises(DomainError):
            moment_Iq(m, -10.0, batch)
        with pytest.raises(VarianceRefusalError, match="I_negk_via_sections"):
            moment_Iq(m, -6.0, batch)

    def test_batch_dimension_mismatch(self, batch) -> None:
        """Test that a batch of the wrong dimension is refused.

        Args:
            batch: Gaussian batch
        """
        with pytest.raises(UsageError):
            moment_Iq(gaussian(3), 2.0, batch)

    def test_covariance_of_gaussian(self, batch) -> None:
        """Test that the sample covariance is close to the identity.

        Args:
            batch: Gaussian batch
        """
        cov, stderr = covariance(batch)
        assert np.all(np.abs(cov - np.eye(10)) <= 5.0 * stderr)


class TestSections:
    """Unit tests for marginal densities at zero and the section formula."""

    @pytest.fixture
    def settings(self) -> EstimatorSettings:
        """Create small section settings.

        Returns:
            EstimatorSettings: Settings with small inner budgets
        """
        return EstimatorSettings(samples=20_000, inner_samples=20_000, subspace_count=8)

    @given(n=st.integers(min_value=2, max_value=60), data=st.data())
    @hypothesis_settings(max_examples=50, deadline=None)
    def test_cnk_matches_gamma_ratio(self, n: int, data) -> None:
        """Test c_{n,k}^k = pi^{-k/2} Gamma(n/2) / Gamma((n-k)/2) for every admissible k.

        Args:
            n: Ambient dimension
            data: Hypothesis data source for k
        """
        k = data.draw(st.integers(min_value=1, max_value=n - 1))
        log_ratio = -0.5 * k * math.log(math.pi) + gammaln(0.5 * n) - gammaln(0.5 * (n - k))
        assert cnk(n, k) == pytest.approx(math.exp(log_ratio / k), rel=1e-10)

    def test_gaussian_I_minus_one_in_plane(self, settings: EstimatorSettings) -> None:
        """Test I_{-1}(gamma_2) = sqrt(2/pi), exact for gaussians.

        Args:
            settings: Small section settings
        """
        estimate = I_negk_via_sections(gaussian(2), 1, 4, Seed(1), settings)
        assert estimate.value == pytest.approx(math.sqrt(2.0 / math.pi))
        assert estimate.stderr == pytest.approx(0.0)

    def test_gaussian_I_minus_nine(self, settings: EstimatorSettings) -> None:
        """Test I_{-9}(gamma_10), beyond the range of direct sampling.

        Args:
            settings: Small section settings
        """
        estimate = I_negk_via_sections(gaussian(10), 9, 4, Seed(1), settings)
        assert estimate.value == pytest.approx(1.8891, abs=1e-4)

    def test_sections_match_closed_form_for_ball(self, settings: EstimatorSettings) -> None:
        """Test the section formula against the closed-form ball moment.

        Args:
            settings: Small section settings
        """
        m = euclidean_ball(4)
        estimate = I_negk_via_sections(m, 2, 4, Seed(2), settings)
        assert estimate.value == pytest.approx(m.profile.moment_iq(-2.0), rel=1e-9)

    def test_cube_axis_marginal(self, settings: EstimatorSettings) -> None:
        """Test that the coordinate marginal of the cube has density 1/(2 sqrt 3) at 0.

        Args:
            settings: Small section settings
        """
        estimate = marginal_density_at_zero(cube(4), Subspace.coordinate(4, [0]), Seed(3), settings)
        assert estimate.value == pytest.approx(0.288675, abs=1e-6)

    def test_cube_routes_agree(self, settings: EstimatorSettings) -> None:
        """Test that the conditional and radial routes agree on the same cube.

        Args:
            settings: Small section settings
        """
        root3 = math.sqrt(3.0)
        normals = np.vstack([np.eye(3), -np.eye(3)])
        as_polytope = hpoly_body(normals, np.full(6, root3), isotropic=True)
        subspace = haar_subspace(3, 1, Seed(4))

        conditional = marginal_density_at_zero(cube(3), subspace, Seed(5), settings)
        radial = marginal_density_at_zero(as_polytope, subspace, Seed(6), settings)

        sigma = conditional.combined_stderr(radial)
        assert abs(conditional.value - radial.value) <= 4.0 * sigma + 1e-9

    def test_product_exponential_plane_section(self, settings: EstimatorSettings) -> None:
        """Test the one-dimensional marginal along e_1 of the Laplace product.

        Args:
            settings: Small section settings
        """
        estimate = marginal_density_at_zero(
            product_exponential(3), Subspace.coordinate(3, [0]), Seed(7), settings
        )
        assert estimate.value == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-9)

    def test_marginal_of_marginal(self, settings: EstimatorSettings) -> None:
        """Test that a section of a marginal is taken on the composed frame.

        Args:
            settings: Small section settings
        """
        plane = marginal_of(product_exponential(3), Subspace.coordinate(3, [1, 0]))
        estimate = marginal_density_at_zero(plane, Subspace.coordinate(2, [1]), Seed(7), settings)
        assert estimate.value == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-9)

    def test_full_subspace_rejected(self, settings: EstimatorSettings) -> None:
        """Test that k = n is refused.

        Args:
            settings: Small section settings
        """
        with pytest.raises(UsageError):
            marginal_density_at_zero(cube(2), Subspace.coordinate(2, [0, 1]), Seed(1), settings)

    def test_section_range(self, settings: EstimatorSettings) -> None:
        """Test that k = n is refused by the section formula.

        Args:
            settings: Small section settings
        """
        with pytest.raises(UsageError):
            I_negk_via_sections(gaussian(3), 3, 4, Seed(1), settings)

    def test_single_subspace_is_flagged(self, settings: EstimatorSettings) -> None:
        """Test that a one-subspace estimate carries the single-subspace flag.

        Args:
            settings: Small section settings
        """
        single = I_negk_via_sections(cube(3), 1, 1, Seed(3), settings)
        averaged = I_negk_via_sections(cube(3), 1, 2, Seed(3), settings)
        assert single.flags == ("single-subspace",)
        assert averaged.flags == ()

    def test_gaussian_marginal_L_is_exact(self, settings: EstimatorSettings) -> None:
        """Test that gaussian marginals report L = (2 pi)^{-1/2}.

        Args:
            settings: Small section settings
        """
        bracket = marginal_L_surrogate(gaussian(5), haar_subspace(5, 3, Seed(8)), Seed(9), settings)
        assert bracket.exact == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))
        assert bracket.contains(bracket.exact)


class TestCentroidSupport:
    """Unit tests for support functions and boundary points of Z_p."""

    @pytest.fixture
    def batch(self):
        """Create a gaussian batch in the plane.

        Returns:
            SampleBatch: 100k gaussian draws
        """
        return draw(gaussian(2), 100_000, Seed(11))

    def test_support_Z1_gaussian(self, batch) -> None:
        """Test h_{Z_1}(theta) = sqrt(2/pi) for gaussians.

        Args:
            batch: Gaussian batch
        """
        theta = np.array([0.6, 0.8])
        estimate = support_Zp(gaussian(2), 1.0, theta, batch)
        assert abs(estimate.value - math.sqrt(2.0 / math.pi)) <= 4.0 * estimate.stderr

    def test_support_Z2_is_unit_for_isotropic(self, batch) -> None:
        """Test h_{Z_2} = 1 in isotropic position.

        Args:
            batch: Gaussian batch
        """
        estimate = support_Zp(gaussian(2), 2.0, np.array([1.0, 0.0]), batch)
        assert abs(estimate.value - 1.0) <= 4.0 * estimate.stderr

    def test_high_p_is_flagged(self, batch) -> None:
        """Test that large p carries the high-variance flag.

        Args:
            batch: Gaussian batch
        """
        settings = EstimatorSettings(high_variance_p=10.0)
        estimate = support_Zp(gaussian(2), 12.0, np.array([1.0, 0.0]), batch, settings)
        assert "high-variance" in estimate.flags

    def test_non_unit_direction(self, batch) -> None:
        """Test that theta must be a unit vector.

        Args:
            batch: Gaussian batch
        """
        with pytest.raises(UsageError, match="unit"):
            support_Zp(gaussian(2), 2.0, np.array([1.0, 1.0]), batch)

    def test_p_below_one(self, batch) -> None:
        """Test that p < 1 is outside the centroid-body range.

        Args:
            batch: Gaussian batch
        """
        with pytest.raises(DomainError):
            support_Zp(gaussian(2), 0.5, np.array([1.0, 0.0]), batch)

    def test_boundary_point_touches(self, batch) -> None:
        """Test that <boundary point, theta> equals the support value.

        Args:
            batch: Gaussian batch
        """
        theta = np.array([0.0, 1.0])
        point = boundary_point_Zp(gaussian(2), 3.0, theta, batch)
        support = support_Zp(gaussian(2), 3.0, theta, batch)
        assert float(point @ theta) == pytest.approx(support.value, rel=1e-9)

    def test_direction_grid_weights(self) -> None:
        """Test that random grids carry uniform probability weights."""
        grid = random_direction_grid(3, 50, Seed(1))
        assert grid.size == 50
        assert grid.weights.sum() == pytest.approx(1.0)
