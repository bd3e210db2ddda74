"""
One-dimensional stochastic characteristics for the common-noise transport.

With A = σ_com > 0 and Φ(y) = ∫₀^y dz/A(z), the flow of Ẏ = −A(Y) is

    Y(t, x) = Φ⁻¹(Φ(x) − t),   ∂Y/∂x = A(Y)/A(x),
    ∂²Y/∂x² = A(Y)(A′(Y) − A′(x))/A(x)².

pushforward(v, t) transports a density along ẋ = +A(x) for time t:

    (pushforward(v, t))(z) = v(Y(t, z))·∂Y(t, z)/∂z,

so with constant A it shifts densities by +A·t. The SPDE solution is recovered
from the transformed density g as v_t = pushforward(g_t, W_t).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline, PchipInterpolator

from .grid import Grid1D, GridMeasure
from .model import CoefficientError, ModelCoefficients

PAD_MULTIPLIER = 4.0
REFINE = 8
LEAKAGE_TOL = 1e-6


class FlowDomainError(ValueError):
    """Raised when a flow argument leaves the padded Φ table."""
    pass


class PaddingError(RuntimeError):
    """Raised when transported mass leaves the grid."""
    pass


@dataclass(frozen=True, eq=False)
class FlowTable:
    """
    Tabulated Φ, Φ⁻¹ and A on a padded, refined copy of the solver grid.

    Attributes:
        grid: Solver grid
        table_grid: Padded refined grid the tables live on
        A_values: A on table_grid nodes
        phi_values: Φ on table_grid nodes, Φ(0) = 0
        phi: Cubic spline of Φ
        phi_inverse: Monotone (PCHIP) interpolant of Φ⁻¹
        sigma_com: The A callable the table was built from
        sigma_com_prime: A′ from the same model
    """

    grid: Grid1D
    table_grid: Grid1D
    A_values: np.ndarray
    phi_values: np.ndarray
    phi: CubicSpline
    phi_inverse: PchipInterpolator
    sigma_com: object
    sigma_com_prime: object

    @property
    def phi_range(self) -> tuple[float, float]:
        return float(self.phi_values[0]), float(self.phi_values[-1])

    def A(self, x) -> np.ndarray:
        return np.asarray(self.sigma_com(np.asarray(x, dtype=float)), dtype=float)


def build_flow(
    coeffs: ModelCoefficients,
    grid: Grid1D,
    horizon: float = 1.0,
    pad_multiplier: float = PAD_MULTIPLIER,
    refine: int = REFINE,
) -> FlowTable:
    """
    Tabulate Φ = ∫₀ dz/A on the grid padded by pad_multiplier·√horizon·max A.

    Args:
        coeffs: Model providing σ_com
        grid: Solver grid
        horizon: Time horizon the common noise runs for
        pad_multiplier: Padding for the running max of W, in standard deviations
        refine: Table refinement factor relative to grid spacing

    Returns:
        FlowTable

    Raises:
        CoefficientError: If A is not strictly positive on the padded table
    """
    A_grid = np.asarray(coeffs.sigma_com(grid.nodes), dtype=float)
    if np.any(~np.isfinite(A_grid)) or A_grid.min() <= 0.0:
        raise CoefficientError(
            f"sigma_com must be positive on the grid for characteristics, "
            f"min is {np.nanmin(A_grid):.6g}"
        )
    pad = pad_multiplier * np.sqrt(horizon) * float(A_grid.max())
    table = grid.padded(pad, refine)
    x = table.nodes
    A = np.asarray(coeffs.sigma_com(x), dtype=float)
    if np.any(~np.isfinite(A)) or A.min() <= 0.0:
        raise CoefficientError(
            f"sigma_com must be positive on the padded table "
            f"[{table.x_min:.4g}, {table.x_max:.4g}], min is {np.nanmin(A):.6g}"
        )
    phi = cumulative_simpson(1.0 / A, x=x, initial=0.0)
    anchor = float(CubicSpline(x, phi)(0.0)) if table.contains(0.0) else 0.0
    phi = phi - anchor
    if np.any(np.diff(phi) <= 0.0):
        raise CoefficientError("Phi is not strictly increasing on the table")
    return FlowTable(
        grid=grid,
        table_grid=table,
        A_values=A,
        phi_values=phi,
        phi=CubicSpline(x, phi),
        phi_inverse=PchipInterpolator(phi, x),
        sigma_com=coeffs.sigma_com,
        sigma_com_prime=coeffs.sigma_com_prime,
    )


def flow_Y(ft: FlowTable, t: float, x):
    """
    Y(t, x) = Φ⁻¹(Φ(x) − t), the flow of Ẏ = −A(Y).

    Raises:
        FlowDomainError: If x or Φ(x) − t falls outside the table
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0.0:
        return float(x[0]) if scalar else x.copy()
    table = ft.table_grid
    if not np.all(table.contains(x)):
        raise FlowDomainError(
            f"Flow start outside table [{table.x_min:.4g}, {table.x_max:.4g}]"
        )
    s = ft.phi(x) - t
    lo, hi = ft.phi_range
    if s.min() < lo or s.max() > hi:
        raise FlowDomainError(
            f"Flow time {t:.4g} leaves the Phi range [{lo:.4g}, {hi:.4g}]; "
            f"enlarge the padding"
        )
    y = ft.phi_inverse(s)
    return float(y[0]) if scalar else y


def dY_dx(ft: FlowTable, t: float, x) -> np.ndarray:
    y = flow_Y(ft, t, x)
    return ft.A(y) / ft.A(x)


def d2Y_dx2(ft: FlowTable, t: float, x) -> np.ndarray:
    y = flow_Y(ft, t, x)
    return ft.A(y) * (ft.sigma_com_prime(y) - ft.sigma_com_prime(x)) / ft.A(x) ** 2


def pushforward(ft: FlowTable, v: GridMeasure, t: float) -> GridMeasure:
    """
    Transport v along ẋ = +A(x) for time t (t may be negative).

    The density is resampled by a cubic spline of v, taken as zero outside
    the grid.

    Raises:
        PaddingError: If more than 1e-6 of the total variation leaks off the grid
        FlowDomainError: If the flow leaves the table
    """
    if t == 0.0:
        return GridMeasure(v.grid, v.density)
    grid = v.grid
    z = grid.nodes
    y = flow_Y(ft, t, z)
    spline = CubicSpline(z, v.density)
    inside = grid.contains(y)
    values = np.zeros_like(z)
    values[inside] = spline(y[inside])
    density = values * ft.A(y) / ft.A(z)
    out = GridMeasure(grid, density)
    leak = abs(out.mass() - v.mass())
    if leak > LEAKAGE_TOL * max(1.0, v.total_variation()):
        raise PaddingError(
            f"Pushforward by t={t:.4g} lost mass {leak:.3e}; widen the grid"
        )
    return out


class TransformedCoefficients(NamedTuple):
    sigma2: np.ndarray
    drift: np.ndarray


@dataclass(frozen=True, eq=False)
class TransformedState:
    """
    Everything the transformed equation needs at one step.

    Attributes:
        sigma2: σ̃² on the grid
        drift: b̃ on the grid
        v: pushforward(g, W_t), the physical measure
        y: Physical positions Y(−W_t, x) of the grid nodes
        jacobian: A(x)/A(y)
        controls: Policy values at (t, y, v)
    """

    sigma2: np.ndarray
    drift: np.ndarray
    v: GridMeasure
    y: np.ndarray
    jacobian: np.ndarray
    controls: np.ndarray


def transformed_state(
    ft: FlowTable,
    coeffs: ModelCoefficients,
    policy,
    t: float,
    W_t: float,
    g: GridMeasure,
) -> TransformedState:
    """
    Coefficients of the g-equation at time t on the common path value W_t.

    With y = Y(−W_t, x), J = A(x)/A(y), K = A(x)(A′(x) − A′(y))/A(y)²:
        σ̃²(x) = σ_ind²(y)·J²
        b̃(x) = [b(t, y, v, u) − ½A(y)A′(y)]·J + ½σ_ind²(y)·K
    with v = pushforward(g, W_t) and u = policy(t, y, v).
    """
    x = g.grid.nodes
    v = pushforward(ft, g, W_t)
    y = flow_Y(ft, -W_t, x)
    A_x, A_y = ft.A(x), ft.A(y)
    jacobian = A_x / A_y
    sigma2_y = np.asarray(coeffs.sigma_ind(y), dtype=float) ** 2
    u = np.asarray(policy(t, y, v), dtype=float)
    beta = coeffs.stratonovich_drift(t, y, v, u)
    if W_t == 0.0:
        curvature = np.zeros_like(x)
    else:
        curvature = A_x * (coeffs.sigma_com_prime(x) - coeffs.sigma_com_prime(y)) / A_y**2
    return TransformedState(
        sigma2=sigma2_y * jacobian**2,
        drift=beta * jacobian + 0.5 * sigma2_y * curvature,
        v=v,
        y=y,
        jacobian=jacobian,
        controls=u,
    )


def transformed_coeffs(
    ft: FlowTable,
    coeffs: ModelCoefficients,
    policy,
    t: float,
    W_t: float,
    g: GridMeasure,
) -> TransformedCoefficients:
    """(σ̃², b̃) on the grid; see transformed_state."""
    state = transformed_state(ft, coeffs, policy, t, W_t, g)
    return TransformedCoefficients(state.sigma2, state.drift)
