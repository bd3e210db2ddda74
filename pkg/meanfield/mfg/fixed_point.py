"""
Damped Picard iteration on the MFG consistency map.

    u_com → forward SPDE along W → conditional HJB → û → (1 − d)·u_com + d·û

Without common noise the forward equation is deterministic and the loop is
the classical MFG fixed point. With common noise each W path gets its own
fixed point; the backward sweep then sees the whole realized path, so the
resulting policy is anticipative, which the result metadata records.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..characteristics import build_flow
from ..grid import GridMeasure
from ..model import ModelCoefficients, ModelError
from ..spde import MeasurePath, solve_spde
from .fields import PolicyField, ValueField
from .hjb import hjb_backward

DEFAULT_TOL = 1e-4
DIVERGENCE_PATIENCE = 5


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    """
    Outcome of a Picard loop.

    Attributes:
        policy: u_com used for the final forward pass
        path: Forward measure path under policy
        value: Value field along path
        best_response: Best response to path
        residuals: max |û − u_com| per iteration
        status: "converged", "max_iter" or "diverged"
        metadata: Method, anticipativity and loop settings
    """

    policy: PolicyField
    path: MeasurePath
    value: ValueField
    best_response: PolicyField
    residuals: list
    status: str
    metadata: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def __iter__(self):
        return iter((self.policy, self.path, self.residuals))


def _picard(
    coeffs: ModelCoefficients,
    v0: GridMeasure,
    W: np.ndarray,
    dt: float,
    n_iter: int,
    damping: float,
    tol: float,
    method: str,
    milstein: bool,
    initial: Optional[PolicyField],
    verbose: bool,
) -> tuple:
    if n_iter < 1:
        raise ValueError(f"n_iter must be >= 1, got {n_iter}")
    if not 0.0 <= damping <= 1.0:
        raise ValueError(f"damping must lie in [0, 1], got {damping}")
    grid = v0.grid
    times = dt * np.arange(W.size)
    lo, hi = coeffs.u_box
    u = initial or PolicyField.constant(times, grid, 0.0, source="initial guess")
    flow = build_flow(coeffs, grid, horizon=float(times[-1])) if method != "ito" else None

    residuals: list[float] = []
    increases = 0
    status = "max_iter"
    for k in range(n_iter):
        path = solve_spde(coeffs, u, v0, W, dt, method, milstein=milstein, flow=flow)
        value, br = hjb_backward(coeffs, path)
        r = br.max_gap(u)
        residuals.append(r)
        if verbose:
            print(f"  iteration {k + 1}: residual {r:.3e}")
        if r <= tol:
            status = "converged"
            break
        increases = increases + 1 if k > 0 and r > residuals[-2] else 0
        if increases >= DIVERGENCE_PATIENCE:
            status = "diverged"
            warnings.warn(
                f"Picard residual increased {increases} times in a row (last {r:.3e})"
            )
            break
        if k == n_iter - 1:
            break
        blended = u.blend(br, damping, iteration=k + 1)
        u = PolicyField(
            times, grid, np.clip(blended.u_values, lo, hi), blended.context
        )
    return u, path, value, br, residuals, status


def mfg_fixed_point_per_path(
    coeffs: ModelCoefficients,
    v0: GridMeasure,
    W_path,
    dt: float,
    n_iter: int = 30,
    damping: float = 0.5,
    tol: float = DEFAULT_TOL,
    milstein: bool = True,
    initial: Optional[PolicyField] = None,
    verbose: bool = False,
) -> FixedPointResult:
    """
    Picard loop with the forward pass driven by one common-noise path.

    The forward solver is the characteristics scheme when σ_com is nonzero
    on the grid and the Itô scheme otherwise.

    Args:
        coeffs: Model
        v0: Initial probability measure
        W_path: Common path on the mesh (n_steps + 1,)
        dt: Time step
        n_iter: Maximum number of iterations
        damping: Weight of the best response in the update
        tol: Stop once the residual is at most tol
        milstein: Milstein correction for the Itô scheme
        initial: Starting policy (zero by default)
        verbose: Print the residual of each iteration

    Returns:
        FixedPointResult; non-convergence is reported in status, not raised
    """
    W = np.asarray(W_path, dtype=float)
    common = coeffs.has_common_noise(v0.grid)
    method = "characteristics" if common else "ito"
    u, path, value, br, residuals, status = _picard(
        coeffs, v0, W, dt, n_iter, damping, tol, method, milstein, initial, verbose
    )
    metadata = {
        "mode": "per-path",
        "method": method,
        "damping": damping,
        "tol": tol,
        "iterations": len(residuals),
        "W_T": float(W[-1]),
        "anticipative": common,
        "information": (
            "backward sweep conditions on the full realized common path"
            if common
            else "no common noise; the per-path loop is the deterministic loop"
        ),
    }
    return FixedPointResult(u, path, value, br, residuals, status, metadata)


def mfg_fixed_point_deterministic(
    coeffs: ModelCoefficients,
    v0: GridMeasure,
    dt: float,
    n_steps: int,
    n_iter: int = 30,
    damping: float = 0.5,
    tol: float = DEFAULT_TOL,
    initial: Optional[PolicyField] = None,
    verbose: bool = False,
) -> FixedPointResult:
    """
    Classical MFG fixed point for models without common noise.

    Raises:
        ModelError: If σ_com is nonzero on the grid
    """
    if coeffs.has_common_noise(v0.grid):
        raise ModelError("The deterministic fixed point needs sigma_com == 0 on the grid")
    W = np.zeros(n_steps + 1)
    u, path, value, br, residuals, status = _picard(
        coeffs, v0, W, dt, n_iter, damping, tol, "ito", True, initial, verbose
    )
    metadata = {
        "mode": "deterministic",
        "method": "ito",
        "damping": damping,
        "tol": tol,
        "iterations": len(residuals),
        "anticipative": False,
    }
    return FixedPointResult(u, path, value, br, residuals, status, metadata)


@dataclass(frozen=True, eq=False)
class MeasureFeatureProjection:
    """
    Least-squares fit u(t, x) ≈ α(t, x) + β(t, x)·m₁(μ_t) across paths.

    Attributes:
        intercept: α with shape (n_steps, n_points)
        slope: β with shape (n_steps, n_points)
        projected: One projected PolicyField per input path
        max_gap: Largest |u − projection| over paths and nodes
    """

    intercept: np.ndarray
    slope: np.ndarray
    projected: list
    max_gap: float


def measure_feature_projection(results: list[FixedPointResult]) -> MeasureFeatureProjection:
    """
    Project per-path policies on the feature m₁(μ_t) of their own paths.

    A policy that is a function of (t, x, m₁(μ_t)) is reproduced exactly;
    max_gap measures how far the per-path policies are from that class.
    """
    if len(results) < 2:
        raise ValueError("Measure-feature projection needs at least two paths")
    U = np.stack([r.policy.u_values for r in results])
    M = np.stack([r.path.moments(1)[:-1] for r in results])
    n_paths, n_steps, n_points = U.shape
    intercept = np.empty((n_steps, n_points))
    slope = np.empty((n_steps, n_points))
    for n in range(n_steps):
        design = np.column_stack([np.ones(n_paths), M[:, n]])
        coef, *_ = np.linalg.lstsq(design, U[:, n, :], rcond=None)
        intercept[n], slope[n] = coef[0], coef[1]
    projected_values = intercept[None] + slope[None] * M[:, :, None]
    projected = [
        PolicyField(r.policy.times, r.policy.grid, values, {"projection": "m1"})
        for r, values in zip(results, projected_values)
    ]
    gap = float(np.max(np.abs(U - projected_values)))
    return MeasureFeatureProjection(intercept, slope, projected, gap)
