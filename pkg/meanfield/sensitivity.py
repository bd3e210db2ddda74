"""
Variational derivatives of the SPDE solution map in its initial measure.

ξ_t(·; x0) = d/dh v_t[v0 + h·δ̃_{x0}] and η_t(·; x1, x2), the mixed second
derivative, are computed by differentiating the characteristics scheme
step by step in g-space. With state coefficients (σ̃², b̃) and J = A(x)/A(y):

    ξ ← ξ + dt·[L̃′ξ − ∂(δb̃[ξ]·g)]
    η ← η + dt·[L̃′η − ∂(δb̃[η]·g) − ∂(δb̃[ξ1]·ξ2 + δb̃[ξ2]·ξ1) − ∂(δ²b̃[ξ1, ξ2]·g)]

where δb̃[ν](x) = J(x)·∫δb(t, y, v)/δμ(r) pushforward(ν, W_t)(dr). Policies are
held fixed as feedback fields in the linearization. Stored slices are
transported back to physical space with pushforward(·, W_t).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .characteristics import FlowTable, build_flow, pushforward, transformed_state
from .grid import GridMeasure, fokker_planck, mollified_delta
from .model import ModelCoefficients
from .spde import MeasurePath, solve_spde

DICTIONARY_POWERS = tuple(range(8))
DICTIONARY_SCALES = (0.5, 1.0, 2.0, 4.0)
_NORM_POINTS = np.linspace(-40.0, 40.0, 8001)


class DependencyError(ValueError):
    """Raised when a sensitivity solve lacks the base path it linearizes around."""
    pass


@dataclass(frozen=True, eq=False)
class SensitivityPath:
    """
    First variation of a characteristics run in a mollified point mass.

    Attributes:
        base: The v_t run being linearized
        xi: ξ_t in physical space per mesh time
        xi_g: ξ_t in g-space per mesh time
        bump_point: x0
        bandwidth: Mollification bandwidth of δ̃_{x0}
    """

    base: MeasurePath
    xi: list
    xi_g: list
    bump_point: float
    bandwidth: float

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    def masses(self) -> np.ndarray:
        return np.array([s.mass() for s in self.xi])

    def to_frame(self) -> pd.DataFrame:
        x = self.base.grid.nodes
        return pd.DataFrame(
            {
                "t": np.repeat(self.times, x.size),
                "x": np.tile(x, len(self.times)),
                "density": np.concatenate([s.density for s in self.xi]),
            }
        )


def _base_flow(coeffs: ModelCoefficients, base: MeasurePath) -> FlowTable:
    if base.method != "characteristics" or base.g_slices is None:
        raise DependencyError(
            f"Sensitivity needs a characteristics base path, got method={base.method!r}"
        )
    if not base.complete or len(base.g_slices) != len(base.times):
        raise DependencyError(
            f"Base path is incomplete: {len(base.slices)} slices "
            f"for {len(base.times)} mesh times"
        )
    if base.flow is not None:
        return base.flow
    return build_flow(coeffs, base.grid, horizon=float(base.times[-1]))


def _drift_variation(coeffs, state, t, nu_physical) -> np.ndarray:
    return state.jacobian * coeffs.drift_first_variation(
        t, state.y, state.v, nu_physical, state.controls
    )


def solve_xi(
    coeffs: ModelCoefficients,
    policy,
    base: MeasurePath,
    x0: float,
    bandwidth: float,
    scale: float = 1.0,
) -> SensitivityPath:
    """
    Linearized characteristics scheme started from scale·δ̃_{x0}.

    Args:
        coeffs: Model the base path was solved with
        policy: Same feedback policy as the base path
        base: Characteristics MeasurePath
        x0: Bump point
        bandwidth: Bandwidth of δ̃_{x0}
        scale: Multiplier of the initial bump

    Returns:
        SensitivityPath

    Raises:
        DependencyError: If base is not a complete characteristics run
    """
    flow = _base_flow(coeffs, base)
    grid, dt, W = base.grid, base.dt, base.W_path
    bump = mollified_delta(grid, x0, bandwidth)
    xi0 = GridMeasure(grid, scale * bump.density)
    xi_g = [pushforward(flow, xi0, -W[0])]
    xi = [xi0]
    zeros = np.zeros(grid.n_points)
    for n in range(base.n_steps):
        t, g = base.times[n], base.g_slices[n]
        state = transformed_state(flow, coeffs, policy, t, W[n], g)
        current = xi_g[-1]
        nu = pushforward(flow, current, W[n])
        db = _drift_variation(coeffs, state, t, nu)
        rhs = fokker_planck(grid, current.density, state.sigma2, state.drift)
        rhs = rhs + fokker_planck(grid, g.density, zeros, db)
        nxt = GridMeasure(grid, current.density + dt * rhs)
        xi_g.append(nxt)
        xi.append(pushforward(flow, nxt, W[n + 1]))
    return SensitivityPath(base, xi, xi_g, float(x0), float(bandwidth))


def solve_eta(
    coeffs: ModelCoefficients,
    policy,
    base: MeasurePath,
    x1: float,
    x2: float,
    bandwidth: float,
    xi1: Optional[SensitivityPath] = None,
    xi2: Optional[SensitivityPath] = None,
) -> list[GridMeasure]:
    """
    Mixed second variation η_t(·; x1, x2) of the characteristics scheme.

    The ξ paths are solved here unless supplied; the source uses them at the
    matching mesh times.

    Returns:
        η_t in physical space per mesh time

    Raises:
        DependencyError: If base or a supplied ξ path does not match
    """
    flow = _base_flow(coeffs, base)
    if xi1 is None:
        xi1 = solve_xi(coeffs, policy, base, x1, bandwidth)
    if xi2 is None:
        xi2 = solve_xi(coeffs, policy, base, x2, bandwidth)
    for label, path in (("xi1", xi1), ("xi2", xi2)):
        if path.base is not base or len(path.xi_g) != len(base.times):
            raise DependencyError(f"{label} was not solved on this base path")

    grid, dt, W = base.grid, base.dt, base.W_path
    zeros = np.zeros(grid.n_points)
    eta_g = GridMeasure.zeros(grid)
    eta = [GridMeasure.zeros(grid)]
    for n in range(base.n_steps):
        t, g = base.times[n], base.g_slices[n]
        state = transformed_state(flow, coeffs, policy, t, W[n], g)
        a_g, b_g = xi1.xi_g[n], xi2.xi_g[n]
        nu1 = pushforward(flow, a_g, W[n])
        nu2 = pushforward(flow, b_g, W[n])
        nu_eta = pushforward(flow, eta_g, W[n])
        db_eta = _drift_variation(coeffs, state, t, nu_eta)
        db1 = _drift_variation(coeffs, state, t, nu1)
        db2 = _drift_variation(coeffs, state, t, nu2)
        d2b = state.jacobian * coeffs.drift_second_variation(
            t, state.y, state.v, nu1, nu2, state.controls
        )
        rhs = fokker_planck(grid, eta_g.density, state.sigma2, state.drift)
        rhs = rhs + fokker_planck(grid, g.density, zeros, db_eta + d2b)
        rhs = rhs + (
            fokker_planck(grid, b_g.density, zeros, db1)
            + fokker_planck(grid, a_g.density, zeros, db2)
        )
        eta_g = GridMeasure(grid, eta_g.density + dt * rhs)
        eta.append(pushforward(flow, eta_g, W[n + 1]))
    return eta


def _signed_bump(v0: GridMeasure, bump: GridMeasure, h: float) -> GridMeasure:
    return GridMeasure(v0.grid, v0.density + h * bump.density)


def xi_fd_oracle(
    coeffs: ModelCoefficients,
    policy,
    v0: GridMeasure,
    W_path,
    dt: float,
    x0: float,
    bandwidth: float,
    h_bump: float,
) -> list[GridMeasure]:
    """
    Central difference (v_t[v0 + hδ̃] − v_t[v0 − hδ̃])/(2h) on a shared W path.

    Raises:
        ValueError: If v0 − hδ̃ has negative mass above h
    """
    bump = mollified_delta(v0.grid, x0, bandwidth)
    minus = _signed_bump(v0, bump, -h_bump)
    if minus.negative_mass() > h_bump:
        raise ValueError(
            f"v0 - h*delta has negative mass {minus.negative_mass():.3e} > h={h_bump}"
        )
    plus = _signed_bump(v0, bump, h_bump)
    flow = build_flow(coeffs, v0.grid, horizon=dt * (len(W_path) - 1))
    p = solve_spde(coeffs, policy, plus, W_path, dt, "characteristics", flow=flow)
    m = solve_spde(coeffs, policy, minus, W_path, dt, "characteristics", flow=flow)
    return [(a - b) * (0.5 / h_bump) for a, b in zip(p.slices, m.slices)]


def eta_fd_oracle(
    coeffs: ModelCoefficients,
    policy,
    v0: GridMeasure,
    W_path,
    dt: float,
    x1: float,
    x2: float,
    bandwidth: float,
    h_bump: float,
) -> list[GridMeasure]:
    """Mixed central difference (v[+,+] − v[+,−] − v[−,+] + v[−,−])/(4h²)."""
    d1 = mollified_delta(v0.grid, x1, bandwidth)
    d2 = mollified_delta(v0.grid, x2, bandwidth)
    flow = build_flow(coeffs, v0.grid, horizon=dt * (len(W_path) - 1))
    paths = {}
    for s1 in (1, -1):
        for s2 in (1, -1):
            start = GridMeasure(
                v0.grid, v0.density + h_bump * (s1 * d1.density + s2 * d2.density)
            )
            paths[s1, s2] = solve_spde(
                coeffs, policy, start, W_path, dt, "characteristics", flow=flow
            ).slices
    scale = 0.25 / (h_bump * h_bump)
    return [
        (pp - pm - mp + mm) * scale
        for pp, pm, mp, mm in zip(
            paths[1, 1], paths[1, -1], paths[-1, 1], paths[-1, -1]
        )
    ]


def relative_l1_gap(estimate: GridMeasure, oracle: GridMeasure) -> float:
    """‖estimate − oracle‖₁ / max(‖oracle‖₁, 1e-300)."""
    return estimate.l1_distance(oracle) / max(oracle.total_variation(), 1e-300)


# Dual-norm diagnostics


def _dictionary_polynomials(power: int, scale: float, order: int) -> list:
    """Polynomial factors P_j with φ^{(j)} = P_j(x)·exp(−x²/2s²), j ≤ order."""
    poly = np.polynomial.Polynomial.basis(power)
    x = np.polynomial.Polynomial([0.0, 1.0])
    out = [poly]
    for _ in range(order):
        poly = poly.deriv() - x * poly / scale**2
        out.append(poly)
    return out


def _gaussian(x: np.ndarray, scale: float) -> np.ndarray:
    return np.exp(-0.5 * (x / scale) ** 2)


def dual_dictionary(grid, order: int) -> np.ndarray:
    """
    Polynomial×Gaussian test functions scaled to unit C^order norm.

    Returns:
        Array (32, n_points) of φ values on the grid
    """
    if order not in (0, 1, 2):
        raise ValueError(f"Dual-norm order must be 0, 1 or 2, got {order}")
    rows = []
    for power in DICTIONARY_POWERS:
        for scale in DICTIONARY_SCALES:
            polys = _dictionary_polynomials(power, scale, order)
            g = _gaussian(_NORM_POINTS, scale)
            norm = max(float(np.max(np.abs(p(_NORM_POINTS) * g))) for p in polys)
            rows.append(polys[0](grid.nodes) * _gaussian(grid.nodes, scale) / norm)
    return np.array(rows)


def dual_norm(m: GridMeasure, order: int) -> float:
    """Lower estimate of ‖m‖_{(C^order)′} over the fixed test-function dictionary."""
    phis = dual_dictionary(m.grid, order)
    return float(np.max(np.abs(phis @ (m.grid.weights * m.density))))
