"""Tests for moment functionals and their variational derivatives."""

import numpy as np
import pytest

GALLERY = ["mass", "x", "x^2", "tanh(x)", "xy", "1", "cos(x-y)", "(x-y)^2"]


@pytest.fixture
def grid():
    from meanfield.grid import Grid1D

    return Grid1D(-6.0, 6.0, 121)


@pytest.fixture
def measures(grid):
    """A probability measure and two signed directions on the grid."""
    from meanfield.grid import GridMeasure

    x = grid.nodes
    mu = GridMeasure.from_function(grid, lambda z: np.exp(-0.5 * (z - 0.3) ** 2), True)
    nu1 = GridMeasure(grid, np.exp(-2.0 * (x - 1.0) ** 2) - np.exp(-2.0 * (x + 0.5) ** 2))
    nu2 = GridMeasure(grid, x * np.exp(-0.5 * x * x))
    return mu, nu1, nu2


class TestValues:
    """Closed-form values on atomic measures."""

    def test_first_moment(self):
        """m1 of three atoms is their mean."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        assert get_moment("x").value(EmpiricalMeasure([1.0, 2.0, 3.0])) == pytest.approx(2.0)

    def test_product_pair_is_squared_mean(self):
        """(xy, μ⊗μ) = m1(μ)²."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        assert get_moment("xy").value(EmpiricalMeasure([1.0, 3.0])) == pytest.approx(4.0)

    def test_squared_distance_is_twice_variance(self):
        """((x-y)², μ⊗μ) = 2 Var(μ)."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure([0.0, 2.0])
        assert get_moment("(x-y)^2").value(mu) == pytest.approx(2.0)

    def test_vd1_of_product_pair(self):
        """δ(m1²)/δμ(x) = 2·x·m1."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure([1.0, 3.0])
        np.testing.assert_allclose(get_moment("xy").vd1(mu, [0.5, -1.0]), [2.0, -4.0])

    def test_module_functions(self):
        """moment_value, moment_vd1 and moment_vd2 evaluate the functional."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment, moment_value, moment_vd1, moment_vd2

        F = get_moment("xy")
        mu = EmpiricalMeasure([1.0, 3.0])
        assert moment_value(F, mu) == pytest.approx(4.0)
        np.testing.assert_allclose(moment_vd1(F, mu, [0.5]), [2.0])
        np.testing.assert_allclose(moment_vd2(F, mu, 0.5, -1.0), -1.0)

    def test_grid_and_atomic_agree(self, grid):
        """Both measure kinds go through the same atoms view."""
        from meanfield.grid import EmpiricalMeasure, GridMeasure
        from meanfield.moments import get_moment

        density = np.zeros(grid.n_points)
        density[70] = 1.0 / grid.h
        atom = GridMeasure(grid, density)
        F = get_moment("cos(x-y)")
        assert F.value(atom) == pytest.approx(F.value(EmpiricalMeasure([grid.nodes[70]])))


class TestVariations:
    """Variational derivatives against exact finite differences."""

    @pytest.mark.parametrize("name", GALLERY)
    def test_first_variation(self, name, measures):
        """Central differences are exact for functionals of order at most two."""
        from meanfield.moments import get_moment

        mu, nu, _ = measures
        F = get_moment(name)
        eps = 1e-3
        fd = (F.value(mu + nu * eps) - F.value(mu - nu * eps)) / (2 * eps)
        np.testing.assert_allclose(F.first_variation(mu, nu), fd, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("name", GALLERY)
    def test_second_variation(self, name, measures):
        """The mixed difference of a quadratic functional is its second variation."""
        from meanfield.moments import get_moment

        mu, nu1, nu2 = measures
        F = get_moment(name)
        mixed = (
            F.value(mu + nu1 + nu2) - F.value(mu + nu1) - F.value(mu + nu2) + F.value(mu)
        )
        np.testing.assert_allclose(F.second_variation(nu1, nu2), mixed, atol=1e-10)

    @pytest.mark.parametrize("name", GALLERY)
    def test_space_derivatives(self, name):
        """vd1_dx and vd1_dxx are the x-derivatives of vd1."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure([-0.5, 0.2, 1.1])
        F = get_moment(name)
        x = np.linspace(-2.0, 2.0, 9)
        e = 1e-5
        d1 = (F.vd1(mu, x + e) - F.vd1(mu, x - e)) / (2 * e)
        d2 = (F.vd1_dx(mu, x + e) - F.vd1_dx(mu, x - e)) / (2 * e)
        np.testing.assert_allclose(F.vd1_dx(mu, x), d1, atol=1e-7)
        np.testing.assert_allclose(F.vd1_dxx(mu, x), d2, atol=1e-7)

    @pytest.mark.parametrize("name", GALLERY)
    def test_mixed_kernel_derivative(self, name):
        """vd2_dxy is the mixed derivative of vd2."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure([0.0])
        F = get_moment(name)
        x, y = np.meshgrid(np.linspace(-1.5, 1.5, 5), np.linspace(-1.0, 2.0, 4))
        e = 1e-4
        fd = (
            F.vd2(mu, x + e, y + e)
            - F.vd2(mu, x + e, y - e)
            - F.vd2(mu, x - e, y + e)
            + F.vd2(mu, x - e, y - e)
        ) / (4 * e * e)
        np.testing.assert_allclose(F.vd2_dxy(x, y), fd, atol=1e-5)

    def test_order_one_has_no_second_variation(self, measures):
        """Linear functionals have δ²F = 0."""
        from meanfield.moments import get_moment

        mu, nu1, nu2 = measures
        F = get_moment("tanh(x)")
        assert F.second_variation(nu1, nu2) == 0.0
        np.testing.assert_array_equal(F.vd2(mu, [0.0, 1.0], [2.0, 3.0]), [0.0, 0.0])


def _enumerated_mean(F, atoms, probs, n, tagged=None):
    """E[F(μ̂_n)] by summing over every draw of the random atoms."""
    import itertools

    from meanfield.grid import EmpiricalMeasure

    fixed = [] if tagged is None else [tagged]
    total = 0.0
    for draw in itertools.product(range(len(atoms)), repeat=n - len(fixed)):
        weight = np.prod([probs[i] for i in draw])
        total += weight * F.value(EmpiricalMeasure(fixed + [atoms[i] for i in draw]))
    return total


class TestFiniteSampleBias:
    """E[F(μ̂_n)] − F(μ) against exhaustive enumeration."""

    @pytest.fixture
    def law(self):
        from meanfield.grid import EmpiricalMeasure

        atoms, probs = [-1.0, 0.5, 2.0], [0.2, 0.5, 0.3]
        mu = EmpiricalMeasure(np.repeat(atoms, [2, 5, 3]))
        return atoms, probs, mu

    @pytest.mark.parametrize("name", GALLERY)
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_independent_draws(self, name, n, law):
        """Matches the exact mean over all n-tuples of draws."""
        from meanfield.moments import get_moment

        atoms, probs, mu = law
        F = get_moment(name)
        exact = _enumerated_mean(F, atoms, probs, n) - F.value(mu)
        assert F.finite_sample_bias(mu, n) == pytest.approx(exact, abs=1e-12)

    @pytest.mark.parametrize("name", GALLERY)
    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_tagged_atom(self, name, n, law):
        """One atom pinned at y, the rest drawn."""
        from meanfield.moments import get_moment

        atoms, probs, mu = law
        F = get_moment(name)
        exact = _enumerated_mean(F, atoms, probs, n, tagged=1.3) - F.value(mu)
        assert F.finite_sample_bias(mu, n, tagged=1.3) == pytest.approx(exact, abs=1e-12)

    def test_squared_distance(self):
        """((x-y)², μ̂_n⊗μ̂_n) underestimates 2 Var(μ) by 2 Var(μ)/n."""
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        mu = EmpiricalMeasure([0.0, 2.0])
        assert get_moment("(x-y)^2").finite_sample_bias(mu, 4) == pytest.approx(-0.5)

    def test_needs_a_sample(self):
        from meanfield.grid import EmpiricalMeasure
        from meanfield.moments import get_moment

        with pytest.raises(ValueError):
            get_moment("x").finite_sample_bias(EmpiricalMeasure([0.0]), 0)


class TestGallery:
    """Tests for gallery lookup and kernel checks."""

    def test_unknown_moment(self):
        """Unknown names raise KeyError listing the gallery."""
        from meanfield.moments import get_moment

        with pytest.raises(KeyError, match="available"):
            get_moment("x^3")

    def test_asymmetric_kernel_rejected(self):
        """Pair kernels must be symmetric."""
        from meanfield.moments import MomentFunctional

        def first(x, y):
            return np.broadcast_to(x, np.broadcast(x, y).shape).astype(float)

        with pytest.raises(ValueError, match="symmetric"):
            MomentFunctional(2, first, first, first, d12=first, name="x")

    def test_bad_order(self):
        """Only orders 1 and 2 are supported."""
        from meanfield.moments import MomentFunctional

        with pytest.raises(ValueError):
            MomentFunctional(3, np.sin, np.cos, np.sin)
