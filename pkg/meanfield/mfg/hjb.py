"""
Best response and the conditional HJB equation along a frozen measure path.

    ∂_tV + inf_u [b(t, x, μ_t, u)·∂ₓV + J(t, x, μ_t, u)] + ½(σ_ind² + σ_com²)∂²ₓV = 0,
    V(T, x) = V_T(x, μ_T).

Measure-derivative terms of the full master equation are not part of this
equation; with common noise the sweep runs along one realized path.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..model import ModelCoefficients
from ..spde import MeasurePath, StabilityError
from .fields import PolicyField, ValueField

BISECTION_STEPS = 80


def _invert_marginal_cost(cost, target: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Solve ∂J/∂u(u) = target on [lo, hi] by vectorized bisection."""
    a = np.full(target.shape, lo)
    b = np.full(target.shape, hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        above = cost.du(mid) > target
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    return 0.5 * (a + b)


def best_response(
    coeffs: ModelCoefficients,
    dVdx,
    t: float,
    x,
    mu,
    return_clamped: bool = False,
):
    """
    Minimizer of b₂·u·∂V/∂x + J(t, x, μ, u) over u_box.

    For J = r·u²/2 the minimizer is clip(−b₂·∂V/∂x / r); otherwise the
    first-order condition ∂J/∂u = −b₂·∂V/∂x is solved by bisection.

    Args:
        coeffs: Model
        dVdx: ∂V/∂x at the points x
        t: Time
        x: Points
        mu: Current measure
        return_clamped: Also return the number of clamped points

    Returns:
        Controls shaped like x (a float for scalar input), and optionally
        the clamp count

    Raises:
        ModelError: If the control cost is not strictly convex on u_box
    """
    scalar = np.ndim(dVdx) == 0 and np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dVdx = np.broadcast_to(np.asarray(dVdx, dtype=float), x.shape)
    cost = coeffs.running_cost.control
    lo, hi = coeffs.u_box
    cost.check_convex(coeffs.u_box)
    target = -coeffs.b2(t, x, mu) * dVdx
    if cost.is_quadratic:
        u = target / cost.weight
        clamped = (u < lo) | (u > hi)
        u = np.clip(u, lo, hi)
    else:
        clamped = (cost.du(lo) >= target) | (cost.du(hi) <= target)
        u = _invert_marginal_cost(cost, target, lo, hi)
    out = float(u[0]) if scalar else u
    if return_clamped:
        return out, int(np.count_nonzero(clamped))
    return out


def _space_derivatives(V: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    Vx = np.gradient(V, h, edge_order=2)
    Vxx = np.empty_like(V)
    Vxx[1:-1] = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / (h * h)
    Vxx[0], Vxx[-1] = Vxx[1], Vxx[-2]
    return Vx, Vxx


def _hamiltonian(coeffs, t, x, mu, Vx, Vxx, sigma2):
    u, clamped = best_response(coeffs, Vx, t, x, mu, return_clamped=True)
    b = coeffs.drift(t, x, mu, u)
    J = coeffs.running_cost(t, x, mu, u)
    return b * Vx + J + 0.5 * sigma2 * Vxx, u, clamped


def hjb_backward(
    coeffs: ModelCoefficients, measure_path: MeasurePath
) -> tuple[ValueField, PolicyField]:
    """
    Explicit backward sweep from V_T along measure_path.

    Row n of the policy is the best response at (t_n, μ_{t_n}) against V at
    t_{n+1}. Controls hitting the box are clamped and counted in the policy
    context.

    Raises:
        StabilityError: If dt > h²/max(σ_ind² + σ_com²)
    """
    path = measure_path
    grid, times = path.grid, path.times
    x, h, dt = grid.nodes, grid.h, path.dt
    if not path.complete:
        raise ValueError("hjb_backward needs a complete measure path")
    sigma2 = coeffs.sigma_total2(x)
    s_max = float(np.max(sigma2))
    if s_max > 0.0 and dt > h * h / s_max:
        raise StabilityError(
            f"HJB sweep: dt={dt:.3e} exceeds h²/max σ² = {h * h / s_max:.3e}"
        )

    n_steps = path.n_steps
    V_values = np.empty((n_steps + 1, grid.n_points))
    u_values = np.empty((n_steps, grid.n_points))
    V = np.asarray(coeffs.terminal_cost(x, path.slices[-1]), dtype=float)
    V_values[-1] = V
    total_clamped = 0
    for n in range(n_steps - 1, -1, -1):
        Vx, Vxx = _space_derivatives(V, h)
        H, u, clamped = _hamiltonian(coeffs, times[n], x, path.slices[n], Vx, Vxx, sigma2)
        V = V + dt * H
        V_values[n] = V
        u_values[n] = u
        total_clamped += clamped
    if total_clamped:
        warnings.warn(f"HJB sweep clamped {total_clamped} controls to {coeffs.u_box}")
    context = {
        "method": path.method,
        "W_T": float(path.W_path[-1]),
        "clamped": total_clamped,
    }
    return ValueField(times, grid, V_values), PolicyField(times, grid, u_values, context)


def hjb_residual(
    coeffs: ModelCoefficients, value: ValueField, measure_path: MeasurePath, margin: int = 2
) -> float:
    """
    Plug-in check: max |∂_tV + inf_u[...] + ½σ²∂²V| at interior nodes.

    The Hamiltonian is evaluated at the time-centred average of consecutive
    rows, so the result measures the O(dt + h²) consistency error of the sweep.
    """
    grid, times = value.grid, value.times
    x, h, dt = grid.nodes, grid.h, measure_path.dt
    sigma2 = coeffs.sigma_total2(x)
    worst = 0.0
    for n in range(len(times) - 1):
        V0, V1 = value.V_values[n], value.V_values[n + 1]
        Vbar = 0.5 * (V0 + V1)
        Vx, Vxx = _space_derivatives(Vbar, h)
        H, _, _ = _hamiltonian(coeffs, times[n], x, measure_path.slices[n], Vx, Vxx, sigma2)
        r = (V1 - V0) / dt + H
        worst = max(worst, float(np.max(np.abs(r[margin:-margin]))))
    return worst
