"""Tests for the N-particle generator and its limit/correction decomposition."""

import numpy as np
import pytest

POSITIONS = {
    2: np.array([-0.4, 0.9]),
    5: np.array([-1.2, -0.3, 0.1, 0.8, 1.5]),
    8: np.linspace(-1.5, 1.2, 8),
}


@pytest.fixture
def coeffs():
    from meanfield.model import build_model

    return build_model("ou-common", gamma=0.5)


@pytest.fixture
def policy():
    from meanfield.policies import LinearFeedbackPolicy

    return LinearFeedbackPolicy(0.0, 0.5, -10.0, 10.0)


class TestDecomposition:
    """A_N F = Λ_lim F + Λ_corr F / N at atomic measures."""

    @pytest.mark.parametrize("n", sorted(POSITIONS))
    @pytest.mark.parametrize("name", ["x", "x^2", "tanh(x)", "xy", "cos(x-y)", "(x-y)^2"])
    def test_residual_is_small(self, coeffs, policy, n, name):
        from meanfield.generators import decomposition_residual, linear
        from meanfield.moments import get_moment

        F = linear(get_moment(name))
        assert decomposition_residual(coeffs, policy, F, POSITIONS[n]) < 1e-6

    def test_variable_common_noise(self, policy):
        """The identity holds with state-dependent σ_com."""
        from meanfield.generators import decomposition_residual, linear
        from meanfield.model import build_model
        from meanfield.moments import get_moment

        coeffs = build_model("var-a", gamma=0.3)
        F = linear(get_moment("cos(x-y)"))
        assert decomposition_residual(coeffs, policy, F, POSITIONS[5]) < 1e-6

    def test_combined_functional(self, coeffs, policy):
        """Weighted sums of moments decompose part by part."""
        from meanfield.generators import CylinderFunctional, decomposition_residual
        from meanfield.moments import get_moment

        F = CylinderFunctional(
            ((1.0, get_moment("x^2")), (-0.5, get_moment("xy"))), name="mix"
        )
        assert not F.is_linear
        assert decomposition_residual(coeffs, policy, F, POSITIONS[8]) < 1e-6


class TestLimitAndCorrection:
    """Tests for Λ_lim and Λ_corr on their own."""

    def test_linear_has_no_correction(self, coeffs):
        """Λ_corr vanishes for functionals linear in μ."""
        from meanfield.generators import apply_lambda_corr, linear
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        F = linear(get_moment("tanh(x)"))
        assert F.is_linear
        assert apply_lambda_corr(coeffs, F, EmpiricalMeasure(POSITIONS[5])) == 0.0

    def test_mean_generator_is_mean_drift(self, coeffs, policy):
        """Λ_lim of the first moment is the average drift."""
        from meanfield.generators import apply_lambda_lim, linear
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        x = POSITIONS[5]
        mu = EmpiricalMeasure(x)
        expected = coeffs.drift(0.0, x, mu, policy(0.0, x, mu)).mean()
        np.testing.assert_allclose(
            apply_lambda_lim(coeffs, policy, linear(get_moment("x")), mu),
            expected,
            rtol=1e-12,
        )

    def test_weight_scales(self, coeffs, policy):
        """linear(F, w) scales the generator by w."""
        from meanfield.generators import apply_lambda_lim, linear
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure(POSITIONS[8])
        F = get_moment("xy")
        np.testing.assert_allclose(
            apply_lambda_lim(coeffs, policy, linear(F, 3.0), mu),
            3.0 * apply_lambda_lim(coeffs, policy, linear(F), mu),
            rtol=1e-12,
        )


class TestValidation:
    """Tests for argument checks."""

    def test_too_many_particles(self, coeffs, policy):
        """Finite differences are limited to 64 particles."""
        from meanfield.generators import apply_AN_fd, linear
        from meanfield.moments import get_moment

        with pytest.raises(ValueError, match="64"):
            apply_AN_fd(coeffs, policy, linear(get_moment("x")), np.zeros(65))

    def test_empty_functional(self):
        """A cylinder functional needs at least one part."""
        from meanfield.generators import CylinderFunctional

        with pytest.raises(ValueError):
            CylinderFunctional(())

    def test_non_finite_weight(self):
        """Weights must be finite."""
        from meanfield.generators import CylinderFunctional
        from meanfield.moments import get_moment

        with pytest.raises(ValueError):
            CylinderFunctional(((np.nan, get_moment("x")),))
