#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Unit tests for measure families, spec strings and sample-based measure checks."""

import math
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from src.isotropic_lab.config.settings import EstimatorSettings
from src.isotropic_lab.errors import DegenerateMeasureError, UnsupportedMeasureError, UsageError
from src.isotropic_lab.measures import (
    Family,
    build_measure,
    check_log_concavity,
    check_normalization,
    cube,
    density_at,
    euclidean_ball,
    gaussian,
    hpoly_body,
    isotropic_constant_bracket,
    isotropize,
    isotropy_defect,
    l1_ball,
    load_hpoly,
    log_volume_unit_ball,
    marginal_of,
    parse_measure_spec,
    product_exponential,
    simplex,
    with_dimension,
)
from src.isotropic_lab.sampler.sampler import Seed, Subspace, draw


class TestMeasureFamilies:
    """Unit tests for the shipped log-concave families."""

    @pytest.fixture
    def settings(self) -> EstimatorSettings:
        """Create small estimator settings.

        Returns:
            EstimatorSettings: Settings with modest budgets
        """
        return EstimatorSettings(samples=20_000, inner_samples=2_000, burnin_factor=20)

    def test_gaussian_density_at_origin(self) -> None:
        """Test f_gamma(0) = (2 pi)^{-n/2}."""
        assert density_at(gaussian(3), np.zeros(3)) == pytest.approx(0.063494, rel=1e-4)

    def test_density_outside_support_is_zero(self) -> None:
        """Test that uniform densities vanish outside the body."""
        assert density_at(cube(2), np.array([2.0, 0.0])) == 0.0
        assert density_at(cube(2), np.zeros(2)) == pytest.approx(1.0 / 12.0)

    def test_density_dimension_mismatch(self) -> None:
        """Test that a point of the wrong dimension is a usage error."""
        with pytest.raises(UsageError):
            density_at(gaussian(3), np.zeros(2))

    def test_unit_ball_volume(self) -> None:
        """Test omega_3^{1/3}."""
        assert math.exp(log_volume_unit_ball(3) / 3.0) == pytest.approx(1.6119, abs=1e-4)

    @given(n=st.integers(min_value=2, max_value=200))
    @hypothesis_settings(max_examples=50, deadline=None)
    def test_unit_ball_volume_recursion(self, n: int) -> None:
        """Test omega_n = (2 pi / n) omega_{n-2} with omega_0 = 1.

        Args:
            n: Dimension
        """
        recursed = math.log(2.0 * math.pi / n) + log_volume_unit_ball(n - 2)
        assert log_volume_unit_ball(n) == pytest.approx(recursed, abs=1e-9)

    @pytest.mark.parametrize("builder", [cube, euclidean_ball, l1_ball, simplex])
    def test_uniform_bodies_have_unit_normalisation(self, builder) -> None:
        """Test that uniform densities integrate to one.

        Args:
            builder: Family constructor
        """
        estimate = check_normalization(builder(2), Seed(3), count=100_000)
        assert abs(estimate.value - 1.0) <= 4.0 * estimate.stderr + 1e-9

    def test_product_exponential_normalisation(self) -> None:
        """Test importance-sampled normalisation of an unbounded family."""
        estimate = check_normalization(product_exponential(2), Seed(4), count=100_000)
        assert abs(estimate.value - 1.0) <= 4.0 * estimate.stderr

    @pytest.mark.parametrize(
        "builder", [gaussian, cube, euclidean_ball, l1_ball, product_exponential, simplex]
    )
    def test_families_are_isotropic(self, builder, settings: EstimatorSettings) -> None:
        """Test that every family has identity covariance and zero barycentre.

        Args:
            builder: Family constructor
            settings: Small estimator settings
        """
        batch = draw(builder(3), 40_000, Seed(5).child(builder.__name__), settings)
        assert isotropy_defect(batch, alpha=1e-4).is_isotropic

    def test_log_concavity_holds(self) -> None:
        """Test that no midpoint violation is found for the simplex."""
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, (500, 3))
        y = rng.uniform(-2, 2, (500, 3))
        assert check_log_concavity(simplex(3), x, y) <= 1e-12

    def test_bad_dimension(self) -> None:
        """Test that non-positive dimensions are refused."""
        with pytest.raises(UsageError):
            gaussian(0)


class TestIsotropicConstant:
    """Unit tests for the isotropic constant bracket."""

    def test_gaussian_is_exact(self) -> None:
        """Test that L_gamma = (2 pi)^{-1/2} sits inside its bracket."""
        bracket = isotropic_constant_bracket(gaussian(4), 1000, Seed(1))
        assert bracket.exact == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))
        assert bracket.lo == pytest.approx(bracket.exact)
        assert bracket.hi == pytest.approx(math.e * bracket.lo)

    def test_product_exponential_bracket(self) -> None:
        """Test the lower endpoint f(0)^{1/n} = 2^{-1/2} for the Laplace product."""
        bracket = isotropic_constant_bracket(product_exponential(5), 1000, Seed(1))
        assert bracket.lo == pytest.approx(0.7071, abs=1e-4)
        assert bracket.contains(bracket.exact)

    def test_cube_marginal_keeps_exact_density(self) -> None:
        """Test that the cube's sup norm equals its density at the origin."""
        bracket = isotropic_constant_bracket(cube(3), 1000, Seed(1))
        assert bracket.exact == pytest.approx(1.0 / (2.0 * math.sqrt(3.0)))
        assert bracket.lo == pytest.approx(bracket.exact)

    @given(
        family=st.sampled_from(
            ["gaussian", "cube", "euclidean-ball", "l1-ball", "product-exponential"]
        ),
        n=st.integers(min_value=1, max_value=10),
    )
    @hypothesis_settings(max_examples=40, deadline=None)
    def test_bracket_ratio_is_e(self, family: str, n: int) -> None:
        """Test hi / lo = e for every isotropic family, with the exact value inside.

        Args:
            family: Shipped family name
            n: Dimension
        """
        bracket = isotropic_constant_bracket(build_measure(family, n), 1000, Seed(1))
        assert bracket.hi / bracket.lo == pytest.approx(math.e, rel=1e-12)
        if bracket.exact is not None:
            assert bracket.contains(bracket.exact, tol=1e-9)

    def test_non_isotropic_polytope_uses_covariance(self) -> None:
        """Test that a scaled square gets its covariance correction."""
        A = np.vstack([np.eye(2), -np.eye(2)])
        b = np.array([2.0, 2.0, 2.0, 2.0])
        m = hpoly_body(A, b)
        settings = EstimatorSettings(burnin_factor=20, chunk_size=20_000)

        bracket = isotropic_constant_bracket(m, 40_000, Seed(2), settings)

        # Scale-invariant: the square has the cube's isotropic constant
        assert bracket.lo == pytest.approx(1.0 / (2.0 * math.sqrt(3.0)), rel=0.05)
        assert bracket.exact is None


class TestMeasureSpec:
    """Unit tests for spec strings and .hpoly files."""

    def test_parse_family_with_alias(self) -> None:
        """Test that aliases resolve and the spec string labels the measure."""
        m = parse_measure_spec("ball:4")
        assert m.family is Family.EUCLIDEAN_BALL
        assert m.dim == 4
        assert m.tag == "ball:4"

    @pytest.mark.parametrize("spec", ["gaussian", "gaussian:x", "nosuch:3", "cube:3,foo=1"])
    def test_bad_specs(self, spec: str) -> None:
        """Test that malformed specs are usage errors.

        Args:
            spec: Bad spec string
        """
        with pytest.raises(UsageError):
            parse_measure_spec(spec)

    def test_with_dimension(self) -> None:
        """Test that dimension substitution keeps options."""
        assert with_dimension("cube:3", 5) == "cube:5"
        assert with_dimension("hpoly:2,file=a.hpoly", 2) == "hpoly-body:2,file=a.hpoly"

    def test_hpoly_file(self) -> None:
        """Test loading a polytope from a halfspace file."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "square.hpoly")
            with open(path, "w", encoding="utf-8") as f:
                f.write("# unit square\n1 0 1\n-1 0 1\n0 1 1\n0 -1 1\n")

            A, b = load_hpoly(path)
            m = parse_measure_spec(f"hpoly:2,file={path}")

        assert A.shape == (4, 2)
        assert b.tolist() == [1.0, 1.0, 1.0, 1.0]
        assert m.family is Family.HPOLY_BODY
        assert math.exp(m.params["log_volume"]) == pytest.approx(4.0)
        assert not m.isotropic

    def test_hpoly_unbounded(self) -> None:
        """Test that an unbounded halfspace system is refused."""
        with pytest.raises(UsageError, match="bounded"):
            hpoly_body(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))

    def test_hpoly_origin_outside(self) -> None:
        """Test that a non-positive offset is refused."""
        A = np.vstack([np.eye(2), -np.eye(2)])
        with pytest.raises(UsageError, match="origin"):
            hpoly_body(A, np.array([1.0, 1.0, 0.0, 1.0]))


class TestMarginalsAndIsotropize:
    """Unit tests for marginals and empirical isotropization."""

    def test_gaussian_marginal_is_gaussian(self) -> None:
        """Test that gaussian marginals are standard gaussians."""
        marginal = marginal_of(gaussian(5), Subspace.coordinate(5, [0, 2]))
        assert marginal.family is Family.GAUSSIAN
        assert marginal.dim == 2

    def test_marginal_of_marginal_flattens(self) -> None:
        """Test that nested marginals keep the original base."""
        first = marginal_of(cube(4), Subspace.coordinate(4, [0, 1, 2]))
        second = marginal_of(first, Subspace.coordinate(3, [1]))
        assert second.family is Family.MARGINAL
        assert second.params["base"].family is Family.CUBE
        np.testing.assert_allclose(second.params["frame"], np.eye(4)[:, [1]])

    def test_marginal_without_density(self) -> None:
        """Test that marginals have no pointwise density."""
        marginal = marginal_of(cube(3), Subspace.coordinate(3, [0]))
        with pytest.raises(UnsupportedMeasureError):
            density_at(marginal, np.zeros(1))

    def test_isotropize_maps_to_identity_covariance(self) -> None:
        """Test that the isotropizing map whitens the sample."""
        rng = np.random.default_rng(1)
        points = rng.standard_normal((20_000, 2)) @ np.array([[2.0, 0.0], [1.0, 0.5]]) + 3.0
        image = isotropize(points)
        whitened = image.apply(points)
        np.testing.assert_allclose(np.cov(whitened, rowvar=False), np.eye(2), atol=1e-8)
        np.testing.assert_allclose(whitened.mean(axis=0), 0.0, atol=1e-8)

    def test_isotropize_needs_samples(self) -> None:
        """Test that too few samples are refused."""
        with pytest.raises(DegenerateMeasureError):
            isotropize(np.zeros((10, 3)))
