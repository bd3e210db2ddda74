"""
Moment functionals F(μ) = ∫F̃ dμ^{⊗k} for k = 1, 2.

Variational derivatives are closed form:
    k=1: δF/δμ(x) = F̃(x),            δ²F/δμδμ = 0
    k=2: δF/δμ(x) = 2∫F̃(x, z)μ(dz),  δ²F/δμ(x)δμ(y) = 2F̃(x, y)

Every function here accepts either a GridMeasure (trapezoid quadrature) or an
EmpiricalMeasure (exact sums over atoms) through the shared atoms() view.

Kernels and their derivatives are module-level callables so that functionals
pickle cleanly into worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Measure

SYMMETRY_TOL = 1e-12
_SYMMETRY_POINTS = np.linspace(-3.0, 3.0, 13)


@dataclass(frozen=True)
class MomentFunctional:
    """
    Moment functional of order 1 or 2 with its kernel derivatives.

    For k=1 the derivative callables take x; for k=2 they take (x, y) and
    differentiate in the first argument (d1, d2) or in both (d12).

    Attributes:
        order: 1 or 2
        kernel: F̃ as a vectorized callable
        d1: ∂F̃/∂x
        d2: ∂²F̃/∂x²
        d12: ∂²F̃/∂x∂y (order 2 only)
        name: Label used in reports
    """

    order: int
    kernel: Callable
    d1: Callable
    d2: Callable
    d12: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"Moment order must be 1 or 2, got {self.order}")
        if self.order == 2:
            if self.d12 is None:
                raise ValueError(f"Pair moment {self.name!r} needs d12")
            points = _SYMMETRY_POINTS
            x, y = np.meshgrid(points, points + 0.37, indexing="ij")
            gap = np.max(np.abs(self.kernel(x, y) - self.kernel(y, x)))
            if gap > SYMMETRY_TOL:
                raise ValueError(
                    f"Pair kernel {self.name!r} is not symmetric (gap {gap:.2e})"
                )

    def _pair_matrix(self, fn: Callable, x, points) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return fn(x[..., None], points)

    def value(self, mu: Measure) -> float:
        points, masses = mu.atoms()
        if self.order == 1:
            return float(masses @ self.kernel(points))
        matrix = self.kernel(points[:, None], points[None, :])
        return float(masses @ matrix @ masses)

    def vd1(self, mu: Measure, x) -> np.ndarray:
        """δF/δμ evaluated at x."""
        if self.order == 1:
            return np.asarray(self.kernel(np.asarray(x, dtype=float)), dtype=float)
        points, masses = mu.atoms()
        return 2.0 * self._pair_matrix(self.kernel, x, points) @ masses

    def vd1_dx(self, mu: Measure, x) -> np.ndarray:
        """∂/∂x of δF/δμ(x)."""
        if self.order == 1:
            return np.asarray(self.d1(np.asarray(x, dtype=float)), dtype=float)
        points, masses = mu.atoms()
        return 2.0 * self._pair_matrix(self.d1, x, points) @ masses

    def vd1_dxx(self, mu: Measure, x) -> np.ndarray:
        """∂²/∂x² of δF/δμ(x)."""
        if self.order == 1:
            return np.asarray(self.d2(np.asarray(x, dtype=float)), dtype=float)
        points, masses = mu.atoms()
        return 2.0 * self._pair_matrix(self.d2, x, points) @ masses

    def vd2(self, mu: Measure, x, y) -> np.ndarray:
        """δ²F/δμ(x)δμ(y); independent of μ for moment functionals."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.order == 1:
            return np.zeros(x.shape)
        return 2.0 * self.kernel(x, y)

    def vd2_dxy(self, x, y) -> np.ndarray:
        """∂²/∂x∂y of δ²F/δμ(x)δμ(y)."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.order == 1:
            return np.zeros(x.shape)
        return 2.0 * self.d12(x, y)

    def second_variation(self, nu1: Measure, nu2: Measure) -> float:
        """∬ δ²F/δμδμ dν1 dν2 for signed grid or atomic measures."""
        if self.order == 1:
            return 0.0
        p1, q1 = nu1.atoms()
        p2, q2 = nu2.atoms()
        return float(q1 @ (2.0 * self.kernel(p1[:, None], p2[None, :])) @ q2)

    def first_variation(self, mu: Measure, nu: Measure) -> float:
        """∫ δF/δμ(x) ν(dx)."""
        points, masses = nu.atoms()
        return float(masses @ self.vd1(mu, points))

    def finite_sample_bias(
        self, mu: Measure, n: int, tagged: Optional[float] = None
    ) -> float:
        """
        E[F(μ̂_n)] − F(μ) for the empirical measure μ̂_n of n draws from μ.

        The draws are independent. With tagged = y one atom of μ̂_n sits at y
        and only the other n − 1 are drawn from μ. μ must have unit mass.
        """
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        F = self.value(mu)
        if self.order == 1:
            if tagged is None:
                return 0.0
            return (float(self.kernel(np.array([float(tagged)]))[0]) - F) / n
        points, masses = mu.atoms()
        diagonal = float(masses @ self.kernel(points, points))
        if tagged is None:
            return (diagonal - F) / n
        y = np.array([float(tagged)])
        cross = float(masses @ self.kernel(y, points))
        own = float(self.kernel(y, y)[0])
        expected = (
            (n - 1) * (n - 2) * F + 2 * (n - 1) * cross + (n - 1) * diagonal + own
        ) / n**2
        return expected - F


def moment_value(F: MomentFunctional, mu: Measure) -> float:
    return F.value(mu)


def moment_vd1(F: MomentFunctional, mu: Measure, x) -> np.ndarray:
    return F.vd1(mu, x)


def moment_vd2(F: MomentFunctional, mu: Measure, x, y) -> np.ndarray:
    return F.vd2(mu, x, y)


def _zero(x, y=None):
    return np.zeros(np.broadcast(x, x if y is None else y).shape)


def _one(x):
    return np.ones(np.shape(x))


def _identity(x):
    return np.asarray(x, dtype=float)


def _square(x):
    return np.asarray(x, dtype=float) ** 2


def _twice(x):
    return 2.0 * np.asarray(x, dtype=float)


def _constant_two(x):
    return np.full(np.shape(x), 2.0)


def _product(x, y):
    return x * y


def _second_argument(x, y):
    return np.broadcast_to(y, np.broadcast(x, y).shape).astype(float)


def _pair_one(x, y):
    return np.ones(np.broadcast(x, y).shape)


def _cos_diff(x, y):
    return np.cos(x - y)


def _neg_sin_diff(x, y):
    return -np.sin(x - y)


def _neg_cos_diff(x, y):
    return -np.cos(x - y)


def _sqdist(x, y):
    return (x - y) ** 2


def _sqdist_dx(x, y):
    return 2.0 * (x - y)


def _sqdist_dxx(x, y):
    return np.full(np.broadcast(x, y).shape, 2.0)


def _sqdist_dxy(x, y):
    return np.full(np.broadcast(x, y).shape, -2.0)


def _tanh(x):
    return np.tanh(x)


def _tanh_d1(x):
    return 1.0 - np.tanh(x) ** 2


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def mass_moment() -> MomentFunctional:
    return MomentFunctional(1, _one, _zero, _zero, name="mass")


def first_moment() -> MomentFunctional:
    """m₁(μ) = (x, μ)."""
    return MomentFunctional(1, _identity, _one, _zero, name="x")


def second_moment() -> MomentFunctional:
    return MomentFunctional(1, _square, _twice, _constant_two, name="x^2")


def tanh_moment() -> MomentFunctional:
    return MomentFunctional(1, _tanh, _tanh_d1, _tanh_d2, name="tanh(x)")


def product_pair() -> MomentFunctional:
    """(F̃, μ⊗μ) with F̃(x, y) = xy, i.e. m₁(μ)²."""
    return MomentFunctional(
        2, _product, _second_argument, _zero, d12=_pair_one, name="xy"
    )


def unit_pair() -> MomentFunctional:
    return MomentFunctional(2, _pair_one, _zero, _zero, d12=_zero, name="1")


def cosine_pair() -> MomentFunctional:
    """F̃(x, y) = cos(x − y)."""
    return MomentFunctional(
        2, _cos_diff, _neg_sin_diff, _neg_cos_diff, d12=_cos_diff, name="cos(x-y)"
    )


def squared_distance_pair() -> MomentFunctional:
    """F̃(x, y) = (x − y)², twice the variance of μ for probabilities."""
    return MomentFunctional(
        2, _sqdist, _sqdist_dx, _sqdist_dxx, d12=_sqdist_dxy, name="(x-y)^2"
    )


MOMENT_GALLERY = {
    "mass": mass_moment,
    "x": first_moment,
    "x^2": second_moment,
    "tanh(x)": tanh_moment,
    "xy": product_pair,
    "1": unit_pair,
    "cos(x-y)": cosine_pair,
    "(x-y)^2": squared_distance_pair,
}


def get_moment(name: str) -> MomentFunctional:
    if name not in MOMENT_GALLERY:
        raise KeyError(
            f"Unknown moment {name!r}; available: {sorted(MOMENT_GALLERY)}"
        )
    return MOMENT_GALLERY[name]()
