"""
Uniform 1D grids and measures sampled on them.

A measure is stored as a density on the grid nodes. Every integral in the
package uses the same trapezoid rule, and every divergence-form operator is
written as a finite-volume update over trapezoid cells, so discrete mass is
conserved exactly up to rounding.

Example:
    >>> grid = Grid1D(-5.0, 5.0, 501)
    >>> delta = mollified_delta(grid, 0.0, 0.1)
    >>> round(delta.mass(), 12)
    1.0
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

MIN_POINTS = 8
KERNEL_SUPPORT = 4.0


class DimensionError(ValueError):
    """Raised when an array does not match the grid it is used with."""
    pass


class DomainError(ValueError):
    """Raised when a point or measure falls outside the usable grid domain."""
    pass


@dataclass(frozen=True)
class Grid1D:
    """
    Uniform grid on [x_min, x_max] with n_points nodes.

    Attributes:
        x_min: Left end point
        x_max: Right end point
        n_points: Number of nodes (at least 8)
    """

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise DomainError(
                f"Grid needs x_min < x_max, got [{self.x_min}, {self.x_max}]"
            )
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise DimensionError(
                f"Grid needs an integer n_points >= {MIN_POINTS}, got {self.n_points}"
            )

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights (h inside, h/2 at both ends)."""
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.x_min) & (x <= self.x_max)

    def padded(self, pad: float, factor: int = 1) -> Grid1D:
        """Grid extended by at least pad on both sides, spacing h/factor."""
        h = self.h / factor
        extra = int(np.ceil(pad / h))
        return Grid1D(
            self.x_min - extra * h,
            self.x_max + extra * h,
            (self.n_points - 1) * factor + 1 + 2 * extra,
        )

    def check_values(self, values, name: str = "values") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_points,):
            raise DimensionError(
                f"{name} has shape {values.shape}, grid has {self.n_points} points"
            )
        return values


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """
    Signed measure given by its density on a Grid1D.

    The density array is made read-only on construction. Measures flagged as
    probabilities are checked for nonnegativity and unit mass.

    Attributes:
        grid: Grid the density lives on
        density: Density values at the grid nodes
        is_probability: Whether the probability invariants are enforced
    """

    grid: Grid1D
    density: np.ndarray
    is_probability: bool = False

    def __post_init__(self):
        density = np.array(self.grid.check_values(self.density, "density"))
        density.setflags(write=False)
        object.__setattr__(self, "density", density)
        if not np.all(np.isfinite(density)):
            raise DomainError("GridMeasure density has non-finite values")
        if self.is_probability:
            if density.min() < 0.0:
                raise DomainError(
                    f"Probability density is negative (min {density.min():.3e})"
                )
            if abs(self.mass() - 1.0) > 1e-8:
                raise DomainError(
                    f"Probability density has mass {self.mass():.12f}, expected 1"
                )

    @classmethod
    def zeros(cls, grid: Grid1D) -> GridMeasure:
        return cls(grid, np.zeros(grid.n_points))

    @classmethod
    def from_function(cls, grid: Grid1D, fn, normalize: bool = False) -> GridMeasure:
        """Sample fn on the nodes, optionally rescaled to unit trapezoid mass."""
        density = np.asarray(fn(grid.nodes), dtype=float)
        if normalize:
            density = density / float(grid.weights @ density)
        return cls(grid, density, is_probability=normalize)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and masses (weights times density)."""
        return self.grid.nodes, self.grid.weights * self.density

    def mass(self) -> float:
        return float(self.grid.weights @ self.density)

    def total_variation(self) -> float:
        return float(self.grid.weights @ np.abs(self.density))

    def negative_mass(self) -> float:
        return float(self.grid.weights @ np.maximum(-self.density, 0.0))

    def moment(self, k: int) -> float:
        return pair(self.grid.nodes**k, self)

    def l1_distance(self, other: GridMeasure) -> float:
        return (self - other).total_variation()

    def as_probability(self) -> GridMeasure:
        return GridMeasure(self.grid, self.density, is_probability=True)

    def _coerce(self, other: GridMeasure) -> np.ndarray:
        if other.grid != self.grid:
            raise DimensionError("GridMeasure arithmetic needs a shared grid")
        return other.density

    def __add__(self, other: GridMeasure) -> GridMeasure:
        return GridMeasure(self.grid, self.density + self._coerce(other))

    def __sub__(self, other: GridMeasure) -> GridMeasure:
        return GridMeasure(self.grid, self.density - self._coerce(other))

    def __mul__(self, scalar: float) -> GridMeasure:
        return GridMeasure(self.grid, float(scalar) * self.density)

    __rmul__ = __mul__

    def __neg__(self) -> GridMeasure:
        return GridMeasure(self.grid, -self.density)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid.nodes, "density": self.density})

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> GridMeasure:
        """Load a measure written by to_csv; the nodes must be uniform."""
        df = pd.read_csv(path)
        x = df["x"].to_numpy(dtype=float)
        grid = Grid1D(float(x[0]), float(x[-1]), len(x))
        if not np.allclose(x, grid.nodes, rtol=0.0, atol=1e-9 * grid.h):
            raise DimensionError(f"{path} does not hold a uniform grid")
        return cls(grid, df["density"].to_numpy(dtype=float))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """
    Atomic measure (1/N) Σ δ_{x_i} of a particle configuration.

    Attributes:
        positions: Atom locations
    """

    positions: np.ndarray

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).reshape(-1)
        if positions.size == 0:
            raise ValueError("EmpiricalMeasure needs at least one position")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    @property
    def n(self) -> int:
        return self.positions.size

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.positions, np.full(self.n, 1.0 / self.n)

    def mass(self) -> float:
        return 1.0

    def moment(self, k: int) -> float:
        return float(np.mean(self.positions**k))


Measure = Union[GridMeasure, EmpiricalMeasure]


def pair(phi_values, m: GridMeasure) -> float:
    """
    Trapezoid approximation of (φ, m) = ∫ φ dm.

    Args:
        phi_values: φ sampled on the grid nodes
        m: Measure on the same grid

    Returns:
        The integral as a float

    Raises:
        DimensionError: If phi_values does not match the grid
    """
    phi = m.grid.check_values(phi_values, "phi_values")
    return float(m.grid.weights @ (phi * m.density))


def _gaussian_kernels(grid: Grid1D, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    """Rows of Gaussian bumps at each center, each with unit trapezoid mass."""
    z = (grid.nodes[None, :] - centers[:, None]) / bandwidth
    kernels = np.exp(-0.5 * z * z)
    return kernels / (kernels @ grid.weights)[:, None]


def _check_bandwidth(grid: Grid1D, bandwidth: float) -> None:
    if bandwidth < 2.0 * grid.h * (1.0 - 1e-12):
        raise DomainError(
            f"Bandwidth {bandwidth} is below twice the grid spacing {grid.h}"
        )


def mollified_delta(grid: Grid1D, x0: float, bandwidth: float) -> GridMeasure:
    """
    Gaussian proxy for the point mass δ_{x0} with unit trapezoid mass.

    Args:
        grid: Target grid
        x0: Center, at least 4 bandwidths away from both ends
        bandwidth: Kernel standard deviation, at least 2h

    Returns:
        Probability GridMeasure

    Raises:
        DomainError: If x0 is too close to the boundary or bandwidth < 2h
    """
    _check_bandwidth(grid, bandwidth)
    margin = KERNEL_SUPPORT * bandwidth
    if not (grid.x_min + margin <= x0 <= grid.x_max - margin):
        raise DomainError(
            f"x0={x0} must lie in [{grid.x_min + margin}, {grid.x_max - margin}] "
            f"for bandwidth {bandwidth}"
        )
    kernel = _gaussian_kernels(grid, np.array([float(x0)]), bandwidth)
    return GridMeasure(grid, kernel.mean(axis=0), is_probability=True)


def empirical_to_grid(positions, grid: Grid1D, bandwidth: float) -> GridMeasure:
    """
    Smooth the empirical measure of positions onto the grid.

    Positions closer than 4 bandwidths to the boundary are clamped into the
    interior and counted in a warning.

    Args:
        positions: Particle positions (N,)
        grid: Target grid
        bandwidth: Kernel standard deviation

    Returns:
        Probability GridMeasure; equals mollified_delta when N == 1

    Raises:
        ValueError: If positions is empty
    """
    positions = np.asarray(positions, dtype=float).reshape(-1)
    if positions.size == 0:
        raise ValueError("empirical_to_grid needs at least one position")
    _check_bandwidth(grid, bandwidth)
    margin = KERNEL_SUPPORT * bandwidth
    lo, hi = grid.x_min + margin, grid.x_max - margin
    clamped = np.clip(positions, lo, hi)
    n_clamped = int(np.count_nonzero(clamped != positions))
    if n_clamped:
        warnings.warn(
            f"{n_clamped} of {positions.size} positions clamped into [{lo}, {hi}]"
        )
    kernels = _gaussian_kernels(grid, clamped, bandwidth)
    return GridMeasure(grid, kernels.mean(axis=0), is_probability=True)


def diff1(m: GridMeasure) -> GridMeasure:
    """First derivative, central inside, one-sided second order at the ends."""
    return GridMeasure(m.grid, np.gradient(m.density, m.grid.h, edge_order=2))


def diff2(m: GridMeasure) -> GridMeasure:
    """Second derivative, central inside, one-sided second order at the ends."""
    f = m.density
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    return GridMeasure(m.grid, out / m.grid.h**2)


def divergence(grid: Grid1D, flux: np.ndarray) -> np.ndarray:
    """
    Finite-volume divergence of interface fluxes.

    flux holds F_{j+1/2} for j = 0..n-2; boundary fluxes are zero. The result
    r satisfies w_j r_j = F_{j+1/2} - F_{j-1/2}, so Σ w_j r_j = 0.
    """
    padded = np.concatenate(([0.0], flux, [0.0]))
    return np.diff(padded) / grid.weights


def face_mean(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[1:] + values[:-1])


def fokker_planck(
    grid: Grid1D,
    density: np.ndarray,
    sigma2: np.ndarray,
    drift: np.ndarray,
) -> np.ndarray:
    """
    Divergence-form ½∂²(σ²ρ) − ∂(bρ) with zero-flux boundaries.

    Args:
        grid: Grid of the density
        density: ρ on the nodes
        sigma2: Diffusion coefficient σ² on the nodes
        drift: Drift b on the nodes

    Returns:
        Operator values on the nodes
    """
    d = sigma2 * density
    flux = 0.5 * np.diff(d) / grid.h - face_mean(drift * density)
    return divergence(grid, flux)
