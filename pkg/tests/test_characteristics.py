"""Tests for the common-noise flow and the transformed coefficients."""

import numpy as np
import pytest


@pytest.fixture
def grid():
    from meanfield.grid import Grid1D

    return Grid1D(-8.0, 8.0, 161)


def _flow(grid, **params):
    from meanfield.characteristics import build_flow
    from meanfield.model import build_model

    name = "var-a" if "a0" in params else "ou-common"
    return build_flow(build_model(name, **params), grid, horizon=1.0)


class TestFlow:
    """Tests for Y(t, x) = Φ⁻¹(Φ(x) − t)."""

    def test_unit_noise(self, grid):
        """With A ≡ 1 the flow is x − t."""
        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a=1.0)
        assert flow_Y(ft, 0.7, 0.2) == pytest.approx(-0.5, abs=1e-10)

    def test_constant_noise(self, grid):
        """With A ≡ 2 the flow is x − 2t."""
        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a=2.0)
        x = np.linspace(-3.0, 3.0, 7)
        np.testing.assert_allclose(flow_Y(ft, 0.3, x), x - 0.6, atol=1e-10)

    def test_time_zero_is_identity(self, grid):
        """Y(0, x) = x."""
        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a0=1.0, a1=0.5)
        x = np.array([-1.0, 0.0, 2.5])
        np.testing.assert_array_equal(flow_Y(ft, 0.0, x), x)

    def test_group_property(self, grid):
        """Y(s, Y(t, x)) = Y(s + t, x)."""
        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a0=1.0, a1=0.5)
        x = np.linspace(-3.0, 3.0, 13)
        np.testing.assert_allclose(
            flow_Y(ft, 0.4, flow_Y(ft, -0.7, x)), flow_Y(ft, -0.3, x), atol=1e-5
        )

    def test_flow_solves_ode(self, grid):
        """∂Y/∂t = −A(Y)."""
        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a0=1.0, a1=0.5)
        x = np.linspace(-2.0, 2.0, 9)
        e = 1e-2
        dYdt = (flow_Y(ft, 0.5 + e, x) - flow_Y(ft, 0.5 - e, x)) / (2 * e)
        np.testing.assert_allclose(dYdt, -ft.A(flow_Y(ft, 0.5, x)), atol=2e-3)

    def test_matches_ode_integrator(self, grid):
        """The tabulated flow agrees with a direct integration of ẏ = −A(y)."""
        from scipy.integrate import solve_ivp

        from meanfield.characteristics import flow_Y

        ft = _flow(grid, a0=1.0, a1=0.5)
        x = np.linspace(-2.0, 2.0, 5)
        sol = solve_ivp(
            lambda t, y: -ft.A(y), (0.0, 0.5), x, rtol=1e-10, atol=1e-12
        )
        np.testing.assert_allclose(flow_Y(ft, 0.5, x), sol.y[:, -1], atol=1e-4)

    def test_jacobian_and_curvature(self, grid):
        """dY_dx and d2Y_dx2 agree with differences of the flow."""
        from meanfield.characteristics import d2Y_dx2, dY_dx, flow_Y

        ft = _flow(grid, a0=1.0, a1=0.5)
        x = np.linspace(-2.0, 2.0, 9)
        e = 1e-2
        first = (flow_Y(ft, 0.6, x + e) - flow_Y(ft, 0.6, x - e)) / (2 * e)
        second = (dY_dx(ft, 0.6, x + e) - dY_dx(ft, 0.6, x - e)) / (2 * e)
        np.testing.assert_allclose(dY_dx(ft, 0.6, x), first, atol=5e-3)
        np.testing.assert_allclose(d2Y_dx2(ft, 0.6, x), second, atol=5e-3)

    def test_leaving_the_table(self, grid):
        """Flow times beyond the padding raise FlowDomainError."""
        from meanfield.characteristics import FlowDomainError, flow_Y

        ft = _flow(grid, a=1.0)
        with pytest.raises(FlowDomainError):
            flow_Y(ft, 100.0, 0.0)

    def test_needs_positive_noise(self, grid):
        """Characteristics need A > 0."""
        from meanfield.model import CoefficientError

        with pytest.raises(CoefficientError):
            _flow(grid, a=0.0)


class TestPushforward:
    """Tests for transporting densities along ẋ = +A(x)."""

    def test_constant_noise_shifts(self, grid):
        """With A ≡ 1, pushing forward by t moves the mean by +t."""
        from meanfield.characteristics import pushforward
        from meanfield.grid import GridMeasure

        ft = _flow(grid, a=1.0)
        v = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        moved = pushforward(ft, v, 0.5)
        np.testing.assert_allclose(moved.mass(), 1.0, atol=1e-6)
        np.testing.assert_allclose(moved.moment(1), 0.5, atol=1e-5)

    def test_variable_noise_keeps_mass(self, grid):
        """The Jacobian factor keeps mass for non-constant A."""
        from meanfield.characteristics import pushforward
        from meanfield.grid import GridMeasure

        ft = _flow(grid, a0=1.0, a1=0.5)
        v = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        np.testing.assert_allclose(pushforward(ft, v, -0.8).mass(), 1.0, atol=1e-6)

    def test_leak_raises(self, grid):
        """Mass carried off the grid raises PaddingError."""
        from meanfield.characteristics import PaddingError, pushforward
        from meanfield.grid import GridMeasure

        ft = _flow(grid, a=1.0)
        v = GridMeasure.from_function(grid, lambda x: np.exp(-2.0 * (x - 6.0) ** 2), True)
        with pytest.raises(PaddingError):
            pushforward(ft, v, 3.0)


class TestTransformedCoefficients:
    """Tests for the coefficients of the transformed equation."""

    def test_constant_noise(self, grid):
        """With A constant: σ̃² = σ_ind² and b̃(x) = b(x + aW)."""
        from meanfield.characteristics import build_flow, transformed_coeffs
        from meanfield.grid import GridMeasure
        from meanfield.model import build_model
        from meanfield.policies import ZeroPolicy

        coeffs = build_model("ou-common", a=0.5, coupling=0.0)
        ft = build_flow(coeffs, grid, horizon=1.0)
        g = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        sigma2, drift = transformed_coeffs(ft, coeffs, ZeroPolicy(), 0.0, 0.4, g)
        np.testing.assert_allclose(sigma2, 1.0, rtol=1e-10)
        np.testing.assert_allclose(drift, -(grid.nodes + 0.2), atol=1e-9)

    def test_zero_common_path(self, grid):
        """At W_t = 0 the coefficients are σ_ind² and b − ½AA′."""
        from meanfield.characteristics import build_flow, transformed_state
        from meanfield.grid import GridMeasure
        from meanfield.model import build_model
        from meanfield.policies import ZeroPolicy

        coeffs = build_model("var-a", gamma=0.3)
        ft = build_flow(coeffs, grid, horizon=1.0)
        g = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * (x - 0.5) ** 2), True)
        state = transformed_state(ft, coeffs, ZeroPolicy(), 0.0, 0.0, g)
        x = grid.nodes
        expected = coeffs.stratonovich_drift(0.0, x, g, np.zeros_like(x))
        np.testing.assert_allclose(state.sigma2, 1.0, rtol=1e-12)
        np.testing.assert_allclose(state.drift, expected, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(state.v.density, g.density)
