"""Tests for grids, grid measures and the finite-volume operators."""

import numpy as np
import pytest


@pytest.fixture
def grid():
    from meanfield.grid import Grid1D

    return Grid1D(-6.0, 6.0, 121)


@pytest.fixture
def gaussian(grid):
    from meanfield.grid import GridMeasure

    return GridMeasure.from_function(grid, lambda x: np.exp(-0.5 * x * x), normalize=True)


class TestGrid1D:
    """Tests for the uniform grid."""

    def test_spacing_and_weights(self, grid):
        """Trapezoid weights should sum to the interval length."""
        assert grid.h == pytest.approx(0.1)
        np.testing.assert_allclose(grid.weights.sum(), 12.0, rtol=1e-14)
        assert grid.weights[0] == pytest.approx(0.5 * grid.h)

    def test_rejects_inverted_interval(self):
        """x_min must lie below x_max."""
        from meanfield.grid import DomainError, Grid1D

        with pytest.raises(DomainError):
            Grid1D(1.0, -1.0, 11)

    def test_rejects_too_few_points(self):
        """Grids need at least eight nodes."""
        from meanfield.grid import DimensionError, Grid1D

        with pytest.raises(DimensionError):
            Grid1D(0.0, 1.0, 5)

    def test_padded_keeps_spacing(self, grid):
        """Padding should extend both ends by whole cells."""
        padded = grid.padded(1.05, factor=2)
        assert padded.h == pytest.approx(grid.h / 2)
        assert padded.x_min <= grid.x_min - 1.05
        assert padded.x_max >= grid.x_max + 1.05
        assert padded.contains(grid.nodes).all()

    def test_check_values_shape(self, grid):
        """Arrays of the wrong length are rejected."""
        from meanfield.grid import DimensionError

        with pytest.raises(DimensionError):
            grid.check_values(np.zeros(10))


class TestGridMeasure:
    """Tests for densities on a grid."""

    def test_normalized_probability(self, gaussian):
        """from_function(normalize=True) should give unit trapezoid mass."""
        assert gaussian.is_probability
        np.testing.assert_allclose(gaussian.mass(), 1.0, rtol=1e-14)
        np.testing.assert_allclose(gaussian.moment(1), 0.0, atol=1e-14)
        np.testing.assert_allclose(gaussian.moment(2), 1.0, rtol=1e-6)

    def test_density_is_read_only(self, gaussian):
        """Stored densities cannot be modified in place."""
        with pytest.raises(ValueError):
            gaussian.density[0] = 1.0

    def test_negative_probability_rejected(self, grid):
        """Probability measures must be nonnegative."""
        from meanfield.grid import DomainError, GridMeasure

        density = -np.ones(grid.n_points)
        with pytest.raises(DomainError):
            GridMeasure(grid, density, is_probability=True)

    def test_unnormalized_probability_rejected(self, grid):
        """Probability measures must carry unit mass."""
        from meanfield.grid import DomainError, GridMeasure

        with pytest.raises(DomainError):
            GridMeasure(grid, np.ones(grid.n_points), is_probability=True)

    def test_arithmetic(self, gaussian):
        """Signed combinations keep the grid and combine linearly."""
        diff = gaussian - gaussian * 0.5
        np.testing.assert_allclose(diff.density, 0.5 * gaussian.density)
        assert not diff.is_probability
        np.testing.assert_allclose((-gaussian).negative_mass(), 1.0, rtol=1e-14)
        assert gaussian.l1_distance(gaussian) == 0.0

    def test_arithmetic_needs_shared_grid(self, gaussian):
        """Measures on different grids cannot be combined."""
        from meanfield.grid import DimensionError, Grid1D, GridMeasure

        other = GridMeasure.zeros(Grid1D(-6.0, 6.0, 61))
        with pytest.raises(DimensionError):
            gaussian + other

    def test_pair_with_constant(self, gaussian, grid):
        """(1, m) is the mass."""
        from meanfield.grid import pair

        assert pair(np.ones(grid.n_points), gaussian) == pytest.approx(gaussian.mass())

    def test_csv(self, gaussian, tmp_path):
        """A measure written to CSV reads back unchanged."""
        from meanfield.grid import GridMeasure

        path = tmp_path / "mu.csv"
        gaussian.to_csv(path)
        loaded = GridMeasure.read_csv(path)
        assert loaded.grid.n_points == gaussian.grid.n_points
        np.testing.assert_allclose(loaded.density, gaussian.density, rtol=1e-15)


class TestMollifiedDelta:
    """Tests for point-mass proxies and empirical smoothing."""

    def test_unit_mass_and_center(self, grid):
        """The bump has unit mass and is centered at x0."""
        from meanfield.grid import mollified_delta

        delta = mollified_delta(grid, 0.0, 0.25)
        np.testing.assert_allclose(delta.mass(), 1.0, rtol=1e-14)
        np.testing.assert_allclose(delta.moment(1), 0.0, atol=1e-13)

    def test_too_close_to_boundary(self, grid):
        """x0 needs four bandwidths of room on both sides."""
        from meanfield.grid import DomainError, mollified_delta

        with pytest.raises(DomainError):
            mollified_delta(grid, 5.5, 0.25)

    def test_bandwidth_floor(self, grid):
        """Bandwidths below 2h are rejected."""
        from meanfield.grid import DomainError, mollified_delta

        with pytest.raises(DomainError):
            mollified_delta(grid, 0.0, 0.1)

    def test_single_particle_matches_delta(self, grid):
        """Smoothing one particle is the mollified delta at its position."""
        from meanfield.grid import empirical_to_grid, mollified_delta

        smooth = empirical_to_grid([0.3], grid, 0.25)
        np.testing.assert_allclose(
            smooth.density, mollified_delta(grid, 0.3, 0.25).density, rtol=1e-14
        )

    def test_empty_positions(self, grid):
        """Smoothing needs at least one position."""
        from meanfield.grid import empirical_to_grid

        with pytest.raises(ValueError):
            empirical_to_grid([], grid, 0.25)

    def test_boundary_positions_are_clamped(self, grid):
        """Particles near the edge are pulled inside with a warning."""
        from meanfield.grid import empirical_to_grid

        with pytest.warns(UserWarning, match="clamped"):
            smooth = empirical_to_grid([0.0, 5.9], grid, 0.25)
        np.testing.assert_allclose(smooth.mass(), 1.0, rtol=1e-14)


class TestOperators:
    """Tests for derivative and divergence operators."""

    def test_derivatives_of_quadratic(self, grid):
        """diff1 and diff2 are exact on quadratics, boundaries included."""
        from meanfield.grid import GridMeasure, diff1, diff2

        m = GridMeasure(grid, grid.nodes**2)
        np.testing.assert_allclose(diff1(m).density, 2.0 * grid.nodes, atol=1e-10)
        np.testing.assert_allclose(diff2(m).density, 2.0, atol=1e-8)

    def test_divergence_sums_to_zero(self, grid):
        """Zero-flux boundaries conserve the weighted sum."""
        from meanfield.grid import divergence

        rng = np.random.default_rng(0)
        r = divergence(grid, rng.standard_normal(grid.n_points - 1))
        assert abs(grid.weights @ r) < 1e-12

    def test_fokker_planck_conserves_mass(self, gaussian, grid):
        """The Fokker-Planck operator has zero trapezoid integral."""
        from meanfield.grid import fokker_planck

        x = grid.nodes
        out = fokker_planck(grid, gaussian.density, 1.0 + 0.5 * np.tanh(x) ** 2, -x)
        assert abs(grid.weights @ out) < 1e-12

    def test_second_derivative_rate(self):
        """diff2 of sin converges at second order, boundary rows included."""
        from meanfield.grid import Grid1D, GridMeasure, diff2

        errors = []
        for n_points in (41, 81):
            grid = Grid1D(0.0, np.pi, n_points)
            m = GridMeasure(grid, np.sin(grid.nodes))
            errors.append(np.max(np.abs(diff2(m).density + np.sin(grid.nodes))))
        assert errors[1] < errors[0] / 3.0
