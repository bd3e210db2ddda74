"""Tests for best responses, the HJB sweep and the Picard fixed point."""

import numpy as np
import pytest


@pytest.fixture
def lq():
    """Decoupled linear-quadratic model without common noise."""
    from meanfield.model import build_model

    return build_model("ou-common", a=0.0, coupling=0.0)


def _frozen_path(grid, v0, dt, n_steps):
    from meanfield.spde import MeasurePath

    times = dt * np.arange(n_steps + 1)
    return MeasurePath(grid, times, [v0] * (n_steps + 1), np.zeros(n_steps + 1))


def _riccati(dt, n_steps, kappa=1.0):
    """Discrete backward recursion for V = ½P·x² + c."""
    P = np.empty(n_steps + 1)
    P[-1] = 1.0
    for n in range(n_steps - 1, -1, -1):
        P[n] = P[n + 1] - dt * (2.0 * kappa * P[n + 1] + P[n + 1] ** 2)
    return P


class TestBestResponse:
    """Tests for the pointwise minimizer."""

    def test_quadratic_closed_form(self, lq):
        """For J = u²/2 the minimizer is −∂V/∂x."""
        from meanfield.mfg import best_response

        x = np.linspace(-1.0, 1.0, 5)
        np.testing.assert_allclose(best_response(lq, 2.0 * x, 0.0, x, None), -2.0 * x)

    def test_scalar_input(self, lq):
        """Scalar input gives a float."""
        from meanfield.mfg import best_response

        assert best_response(lq, 0.5, 0.0, 0.0, None) == pytest.approx(-0.5)

    def test_clamping(self):
        """Minimizers outside u_box are clamped and counted."""
        from meanfield.mfg import best_response
        from meanfield.model import build_model

        coeffs = build_model("ou-common", a=0.0, u_max=1.0)
        u, clamped = best_response(
            coeffs, np.array([-5.0, 0.2, 5.0]), 0.0, np.zeros(3), None, return_clamped=True
        )
        np.testing.assert_allclose(u, [1.0, -0.2, -1.0])
        assert clamped == 2

    def test_quartic_first_order_condition(self):
        """With a quartic term, ∂J/∂u(u*) = −∂V/∂x."""
        from meanfield.mfg import best_response
        from meanfield.model import build_model

        coeffs = build_model("ou-common", a=0.0, quartic=0.25)
        Vx = np.array([-3.0, -0.5, 0.0, 0.7, 2.0])
        u = best_response(coeffs, Vx, 0.0, np.zeros(5), None)
        np.testing.assert_allclose(coeffs.running_cost.control.du(u), -Vx, atol=1e-10)


class TestHJB:
    """Tests for the backward sweep."""

    def test_riccati(self, lq):
        """On the decoupled LQ model the sweep reproduces the discrete Riccati recursion."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import hjb_backward

        grid = Grid1D(-6.0, 6.0, 121)
        v0 = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        dt, n_steps = 0.005, 100
        value, policy = hjb_backward(lq, _frozen_path(grid, v0, dt, n_steps))
        P = _riccati(dt, n_steps)
        expected = -P[1:, None] * grid.nodes[None, :]
        np.testing.assert_allclose(policy.u_values, expected, atol=1e-8)
        np.testing.assert_allclose(value.V_values[-1], 0.5 * grid.nodes**2)
        assert policy.context["clamped"] == 0

    def test_residual_is_first_order(self, lq):
        """Halving dt roughly halves the plug-in residual."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import hjb_backward, hjb_residual

        grid = Grid1D(-6.0, 6.0, 121)
        v0 = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        residuals = []
        for dt, n_steps in ((0.01, 50), (0.005, 100)):
            path = _frozen_path(grid, v0, dt, n_steps)
            value, _ = hjb_backward(lq, path)
            residuals.append(hjb_residual(lq, value, path))
        assert residuals[1] < 0.75 * residuals[0]

    def test_constant_cost_shift(self, lq):
        """A running cost shift c raises V by (T - t)·c and leaves the policy alone."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import hjb_backward
        from meanfield.model import build_model

        grid = Grid1D(-6.0, 6.0, 121)
        v0 = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        path = _frozen_path(grid, v0, 0.005, 100)
        base, base_policy = hjb_backward(lq, path)
        shifted, policy = hjb_backward(
            build_model("ou-common", a=0.0, coupling=0.0, cost_shift=0.3), path
        )
        remaining = (path.times[-1] - path.times)[:, None]
        np.testing.assert_allclose(
            shifted.V_values - base.V_values,
            np.broadcast_to(0.3 * remaining, base.V_values.shape),
            atol=1e-10,
        )
        np.testing.assert_allclose(policy.u_values, base_policy.u_values, atol=1e-12)

    def test_cfl(self, lq):
        """dt > h²/σ² raises StabilityError."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import hjb_backward
        from meanfield.spde import StabilityError

        grid = Grid1D(-6.0, 6.0, 121)
        v0 = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        with pytest.raises(StabilityError):
            hjb_backward(lq, _frozen_path(grid, v0, 0.05, 10))

    def test_incomplete_path(self, lq):
        """A path missing slices is refused."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import hjb_backward
        from meanfield.spde import MeasurePath

        grid = Grid1D(-6.0, 6.0, 121)
        v0 = GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), True)
        path = MeasurePath(grid, 0.005 * np.arange(11), [v0] * 5, np.zeros(11))
        with pytest.raises(ValueError, match="complete"):
            hjb_backward(lq, path)


class TestPolicyField:
    """Tests for tabulated feedback controls."""

    def test_interpolation_and_rows(self):
        """Row n serves [t_n, t_{n+1}); nodes are linearly interpolated."""
        from meanfield.grid import Grid1D
        from meanfield.mfg import PolicyField

        grid = Grid1D(0.0, 7.0, 8)
        times = np.array([0.0, 0.1, 0.2])
        u = np.vstack([grid.nodes, 2.0 * grid.nodes])
        field = PolicyField(times, grid, u)
        np.testing.assert_allclose(field(0.05, [0.5, 3.0]), [0.5, 3.0])
        np.testing.assert_allclose(field(0.1, [0.5]), [1.0])
        np.testing.assert_allclose(field(0.2, [20.0]), [14.0])
        assert field.step_index(-1.0) == 0

    def test_shape_checked(self):
        """u_values must be (n_steps, n_points)."""
        from meanfield.grid import Grid1D
        from meanfield.mfg import PolicyField

        grid = Grid1D(0.0, 7.0, 8)
        with pytest.raises(ValueError):
            PolicyField(np.array([0.0, 0.1, 0.2]), grid, np.zeros((3, 8)))

    def test_blend_and_gap(self):
        """blend is the convex combination; max_gap the sup distance."""
        from meanfield.grid import Grid1D
        from meanfield.mfg import PolicyField

        grid = Grid1D(0.0, 7.0, 8)
        times = np.array([0.0, 0.1])
        a = PolicyField.constant(times, grid, 1.0, source="a")
        b = PolicyField.constant(times, grid, 3.0)
        mixed = a.blend(b, 0.25, iteration=1)
        np.testing.assert_allclose(mixed.u_values, 1.5)
        assert mixed.context == {"source": "a", "iteration": 1}
        assert a.max_gap(b) == pytest.approx(2.0)
        assert a.within((-1.0, 1.0))
        assert not b.within((-1.0, 1.0))
        assert len(a.to_frame()) == 8


class TestFixedPoint:
    """Tests for the Picard loop."""

    @pytest.fixture
    def setup(self):
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.model import build_model

        grid = Grid1D(-4.0, 4.0, 41)
        v0 = GridMeasure.from_function(
            grid, lambda x: np.exp(-2.0 * (x - 0.5) ** 2), True
        )
        return build_model("ou-common", a=0.0), v0

    def test_converges(self, setup):
        """The damped loop reaches the tolerance on the coupled LQ model."""
        from meanfield.mfg import mfg_fixed_point_deterministic

        coeffs, v0 = setup
        result = mfg_fixed_point_deterministic(coeffs, v0, 0.01, 20, n_iter=40)
        assert result.converged
        assert result.residuals[-1] <= 1e-4
        assert result.metadata["mode"] == "deterministic"
        assert result.metadata["iterations"] == len(result.residuals)
        np.testing.assert_allclose([s.mass() for s in result.path.slices], 1.0, atol=1e-10)

    def test_per_path_without_noise_is_deterministic(self, setup):
        """With W ≡ 0 the per-path loop matches the deterministic loop exactly."""
        from meanfield.mfg import mfg_fixed_point_deterministic, mfg_fixed_point_per_path

        coeffs, v0 = setup
        det = mfg_fixed_point_deterministic(coeffs, v0, 0.01, 20, n_iter=40)
        per = mfg_fixed_point_per_path(coeffs, v0, np.zeros(21), 0.01, n_iter=40)
        np.testing.assert_array_equal(det.policy.u_values, per.policy.u_values)
        assert det.residuals == per.residuals
        assert per.metadata["anticipative"] is False

    def test_max_iter_status(self, setup):
        """Running out of iterations is reported, not raised."""
        from meanfield.mfg import mfg_fixed_point_deterministic

        coeffs, v0 = setup
        result = mfg_fixed_point_deterministic(coeffs, v0, 0.01, 20, n_iter=1, tol=1e-12)
        assert result.status == "max_iter"
        assert not result.converged
        assert len(result.residuals) == 1

    def test_zero_damping_keeps_policy(self, setup):
        """With damping 0 the policy never moves, so the residual is constant."""
        from meanfield.mfg import mfg_fixed_point_deterministic

        coeffs, v0 = setup
        result = mfg_fixed_point_deterministic(
            coeffs, v0, 0.01, 20, n_iter=5, damping=0.0, tol=1e-12
        )
        assert len(result.residuals) == 5
        assert result.residuals == [result.residuals[0]] * 5
        assert result.status == "max_iter"
        np.testing.assert_array_equal(result.policy.u_values, 0.0)

    def test_common_noise_rejected(self, setup):
        """The deterministic loop refuses models with common noise."""
        from meanfield.mfg import mfg_fixed_point_deterministic
        from meanfield.model import ModelError, build_model

        _, v0 = setup
        with pytest.raises(ModelError):
            mfg_fixed_point_deterministic(build_model("ou-common"), v0, 0.01, 20)

    @pytest.mark.parametrize("kwargs", [{"damping": 1.5}, {"n_iter": 0}])
    def test_invalid_loop_settings(self, setup, kwargs):
        from meanfield.mfg import mfg_fixed_point_deterministic

        coeffs, v0 = setup
        with pytest.raises(ValueError):
            mfg_fixed_point_deterministic(coeffs, v0, 0.01, 20, **kwargs)


class TestProjection:
    """Tests for the measure-feature projection."""

    def test_exact_for_m1_policies(self):
        """u = sin(x) + x·m₁(μ_t) is reproduced with zero gap."""
        from meanfield.grid import Grid1D, GridMeasure
        from meanfield.mfg import FixedPointResult, PolicyField, measure_feature_projection
        from meanfield.spde import MeasurePath

        grid = Grid1D(-6.0, 6.0, 61)
        times = 0.1 * np.arange(4)
        results = []
        for shift in (-0.5, 0.0, 0.8):
            slices = [
                GridMeasure.from_function(
                    grid, lambda x, c=shift + 0.1 * n: np.exp(-0.5 * (x - c) ** 2), True
                )
                for n in range(4)
            ]
            path = MeasurePath(grid, times, slices, np.zeros(4))
            m1 = path.moments(1)[:-1]
            u = np.sin(grid.nodes)[None, :] + grid.nodes[None, :] * m1[:, None]
            policy = PolicyField(times, grid, u)
            results.append(FixedPointResult(policy, path, None, policy, [], "converged"))
        projection = measure_feature_projection(results)
        assert projection.max_gap < 1e-10
        np.testing.assert_allclose(
            projection.slope, np.broadcast_to(grid.nodes, (3, 61)), atol=1e-10
        )
        assert len(projection.projected) == 3

    def test_needs_two_paths(self):
        from meanfield.mfg import measure_feature_projection

        with pytest.raises(ValueError):
            measure_feature_projection([])
