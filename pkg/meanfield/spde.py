"""
Solvers for the McKean–Vlasov SPDE with common noise

    dμ = L′[t, μ, u]μ dt − ∂ₓ(σ_com μ) dW,
    L′μ = ½∂²ₓ[(σ_ind² + σ_com²)μ] − ∂ₓ[b(t, x, μ, u)μ].

Two independent schemes share the finite-volume operators of grid:

    ito              explicit Itô stepping with an optional Milstein term
    characteristics  explicit stepping of the transformed density g, with
                     v_t = pushforward(g_t, W_t)

Both conserve trapezoid mass to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .characteristics import FlowTable, build_flow, pushforward, transformed_state
from .grid import Grid1D, GridMeasure, divergence, face_mean, fokker_planck
from .model import ModelCoefficients

METHODS = ("ito", "characteristics")
MASS_TOL = 1e-10


class StabilityError(ValueError):
    """Raised when a time step violates the explicit scheme's CFL bound."""
    pass


class ConservationError(RuntimeError):
    """Raised when a step changes the discrete mass."""
    pass


@dataclass(frozen=True, eq=False)
class MeasurePath:
    """
    Solution slices on the time mesh.

    Attributes:
        grid: Spatial grid
        times: Mesh times (n_steps + 1,)
        slices: μ_t per mesh time
        W_path: Common noise values W_t per mesh time
        method: "ito" or "characteristics"
        g_slices: Transformed densities (characteristics only)
        milstein: Whether the Itô scheme used the Milstein correction
    """

    grid: Grid1D
    times: np.ndarray
    slices: list
    W_path: np.ndarray
    method: str = "ito"
    g_slices: Optional[list] = None
    milstein: bool = True
    flow: Optional[FlowTable] = field(default=None, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def complete(self) -> bool:
        return len(self.slices) == len(self.times)

    @property
    def terminal(self) -> GridMeasure:
        return self.slices[-1]

    def moments(self, k: int) -> np.ndarray:
        return np.array([s.moment(k) for s in self.slices])

    def check_probability(
        self, mass_tol: float = 1e-6, negative_tol: float = 1e-8
    ) -> list[str]:
        """Problems with the probability invariants; empty when all hold."""
        problems = []
        for n, s in enumerate(self.slices):
            if abs(s.mass() - 1.0) > mass_tol:
                problems.append(f"slice {n}: mass {s.mass():.12f}")
            if s.negative_mass() > negative_tol:
                problems.append(f"slice {n}: negative mass {s.negative_mass():.3e}")
        return problems

    def summary(self) -> list[dict]:
        return [
            {
                "t": float(t),
                "W": float(w),
                "mass": s.mass(),
                "mean": s.moment(1),
                "second_moment": s.moment(2),
                "negative_mass": s.negative_mass(),
            }
            for t, w, s in zip(self.times, self.W_path, self.slices)
        ]

    def to_frame(self) -> pd.DataFrame:
        x = self.grid.nodes
        return pd.DataFrame(
            {
                "t": np.repeat(self.times, x.size),
                "x": np.tile(x, len(self.times)),
                "density": np.concatenate([s.density for s in self.slices]),
            }
        )


def _check_cfl(grid, dt: float, sigma2: np.ndarray, drift: np.ndarray, where: str):
    h = grid.h
    s_max = float(np.max(sigma2)) if sigma2.size else 0.0
    b_max = float(np.max(np.abs(drift))) if drift.size else 0.0
    if s_max > 0.0 and dt > h * h / s_max:
        raise StabilityError(
            f"{where}: dt={dt:.3e} exceeds diffusive bound h²/max σ² = {h * h / s_max:.3e}"
        )
    if b_max > 0.0 and dt > h / b_max:
        raise StabilityError(
            f"{where}: dt={dt:.3e} exceeds advective bound h/max|b| = {h / b_max:.3e}"
        )


def _check_mass(before: GridMeasure, after: np.ndarray, where: str) -> None:
    grid = before.grid
    drift = abs(float(grid.weights @ after) - before.mass())
    if drift > MASS_TOL * max(1.0, before.total_variation()):
        raise ConservationError(f"{where}: mass changed by {drift:.3e}")


def _physical_drift(coeffs: ModelCoefficients, policy, t: float, mu: GridMeasure):
    x = mu.grid.nodes
    u = np.asarray(policy(t, x, mu), dtype=float)
    return coeffs.drift(t, x, mu, u)


def apply_L_prime(
    coeffs: ModelCoefficients, policy, t: float, mu: GridMeasure
) -> GridMeasure:
    """½∂²[(σ_ind² + σ_com²)μ] − ∂[bμ] in finite-volume form."""
    x = mu.grid.nodes
    b = _physical_drift(coeffs, policy, t, mu)
    return GridMeasure(
        mu.grid, fokker_planck(mu.grid, mu.density, coeffs.sigma_total2(x), b)
    )


def _noise_transport(grid, A: np.ndarray, density: np.ndarray) -> np.ndarray:
    """∂ₓ(Aρ) as a finite-volume divergence."""
    return divergence(grid, face_mean(A * density))


def _milstein_term(grid, A: np.ndarray, density: np.ndarray) -> np.ndarray:
    """∂ₓ(A ∂ₓ(Aρ))."""
    q = A * density
    return divergence(grid, face_mean(A) * np.diff(q) / grid.h)


def step_ito(
    coeffs: ModelCoefficients,
    policy,
    mu: GridMeasure,
    t: float,
    dW: float,
    dt: float,
    milstein: bool = True,
) -> GridMeasure:
    """
    μ ← μ + dt·L′μ − ΔW·∂(Aμ) [+ ½(ΔW² − dt)·∂(A∂(Aμ))].

    Raises:
        StabilityError: If dt violates the diffusive or advective bound
        ConservationError: If the step changes mass beyond 1e-10
    """
    grid = mu.grid
    x = grid.nodes
    A = np.asarray(coeffs.sigma_com(x), dtype=float)
    sigma2 = coeffs.sigma_total2(x)
    b = _physical_drift(coeffs, policy, t, mu)
    _check_cfl(grid, dt, sigma2, b, f"Ito step at t={t:.4g}")
    rho = mu.density
    new = rho + dt * fokker_planck(grid, rho, sigma2, b)
    if dW != 0.0:
        new = new - dW * _noise_transport(grid, A, rho)
    if milstein:
        new = new + 0.5 * (dW * dW - dt) * _milstein_term(grid, A, rho)
    _check_mass(mu, new, f"Ito step at t={t:.4g}")
    return GridMeasure(grid, new)


def step_characteristics(
    coeffs: ModelCoefficients,
    policy,
    flow: FlowTable,
    g: GridMeasure,
    t: float,
    W_t: float,
    dt: float,
) -> GridMeasure:
    """
    Explicit step of ġ = ½∂²(σ̃²g) − ∂(b̃g) with coefficients frozen at (t, W_t, g).

    Raises:
        StabilityError: If dt violates the bounds for σ̃² or b̃
        ConservationError: If the step changes mass beyond 1e-10
        PaddingError, FlowDomainError: If W_t exceeds the flow padding
    """
    state = transformed_state(flow, coeffs, policy, t, W_t, g)
    return _characteristics_update(g, state, dt, t)


def _characteristics_update(g: GridMeasure, state, dt: float, t: float) -> GridMeasure:
    _check_cfl(g.grid, dt, state.sigma2, state.drift, f"characteristics step at t={t:.4g}")
    new = g.density + dt * fokker_planck(g.grid, g.density, state.sigma2, state.drift)
    _check_mass(g, new, f"characteristics step at t={t:.4g}")
    return GridMeasure(g.grid, new)


def solve_spde(
    coeffs: ModelCoefficients,
    policy,
    v0: GridMeasure,
    W_path,
    dt: float,
    method: str = "ito",
    milstein: bool = True,
    flow: Optional[FlowTable] = None,
) -> MeasurePath:
    """
    Solve on the mesh t_n = n·dt driven by the sampled common path W_path.

    Args:
        coeffs: Model
        policy: Feedback policy u(t, x, μ)
        v0: Initial measure (probability or signed)
        W_path: W at the mesh times, length n_steps + 1
        dt: Time step
        method: "ito" or "characteristics"
        milstein: Milstein correction for the Itô scheme
        flow: Prebuilt FlowTable for the characteristics scheme

    Returns:
        MeasurePath; for characteristics the slices are pushforward(g_t, W_t)
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}; expected one of {METHODS}")
    W = np.asarray(W_path, dtype=float)
    if W.ndim != 1 or W.size < 2:
        raise ValueError("W_path needs at least two mesh values")
    coeffs.check_grid(v0.grid)
    times = dt * np.arange(W.size)

    if method == "ito":
        slices = [GridMeasure(v0.grid, v0.density)]
        for n in range(W.size - 1):
            slices.append(
                step_ito(coeffs, policy, slices[-1], times[n], W[n + 1] - W[n], dt, milstein)
            )
        return MeasurePath(v0.grid, times, slices, W, "ito", milstein=milstein)

    if flow is None:
        flow = build_flow(coeffs, v0.grid, horizon=float(times[-1]))
    g = pushforward(flow, v0, -W[0])
    g_slices, slices = [g], [GridMeasure(v0.grid, v0.density)]
    for n in range(W.size - 1):
        state = transformed_state(flow, coeffs, policy, times[n], W[n], g)
        g = _characteristics_update(g, state, dt, times[n])
        g_slices.append(g)
        slices.append(pushforward(flow, g, W[n + 1]))
    return MeasurePath(
        v0.grid, times, slices, W, "characteristics", g_slices=g_slices, flow=flow
    )
