"""
Generators of the N-particle system acting on cylinder functionals.

For f(x_1, ..., x_N) = F(μ^N) with μ^N the empirical measure:

    A_N f = Σ_i [b_i ∂_i f + ½(σ_ind² + σ_com²)(x_i) ∂²_ii f]
            + Σ_{i<j} σ_com(x_i)σ_com(x_j) ∂²_ij f
    Λ_lim F(μ) = ∫[b·∂ₓδF/δμ + ½(σ_ind² + σ_com²)·∂²ₓδF/δμ] dμ
                 + ½∬σ_com(y)σ_com(z)·∂²_yz δ²F/δμδμ dμ dμ
    Λ_corr F(μ) = ½∫σ_ind²(x)·[∂²_yz δ²F/δμ(y)δμ(z)]_{y=z=x} dμ

and A_N F = Λ_lim F + Λ_corr F / N holds exactly at atomic μ. apply_AN_fd
is the brute-force finite-difference side of that identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import EmpiricalMeasure, Measure
from .model import ModelCoefficients
from .moments import MomentFunctional

MAX_FD_PARTICLES = 64
FD_STEP = 1e-3


@dataclass(frozen=True)
class CylinderFunctional:
    """
    F = Σ_j weight_j·F_j for moment functionals F_j.

    Attributes:
        parts: (weight, MomentFunctional) pairs
        name: Label used in reports
    """

    parts: tuple[tuple[float, MomentFunctional], ...]
    name: str = ""

    def __post_init__(self):
        if not self.parts:
            raise ValueError("CylinderFunctional needs at least one part")
        for weight, F in self.parts:
            if not isinstance(F, MomentFunctional) or not np.isfinite(weight):
                raise ValueError(f"Invalid part ({weight!r}, {F!r}) in {self.name!r}")

    @property
    def is_linear(self) -> bool:
        return all(F.order == 1 for _, F in self.parts)

    def value(self, mu: Measure) -> float:
        return float(sum(w * F.value(mu) for w, F in self.parts))

    def __call__(self, mu: Measure) -> float:
        return self.value(mu)

    def vd1(self, mu: Measure, x) -> np.ndarray:
        return sum(w * F.vd1(mu, x) for w, F in self.parts)

    def vd1_dx(self, mu: Measure, x) -> np.ndarray:
        return sum(w * F.vd1_dx(mu, x) for w, F in self.parts)

    def vd1_dxx(self, mu: Measure, x) -> np.ndarray:
        return sum(w * F.vd1_dxx(mu, x) for w, F in self.parts)

    def vd2_dxy(self, x, y) -> np.ndarray:
        return sum(w * F.vd2_dxy(x, y) for w, F in self.parts)


def _f(F: CylinderFunctional, x: np.ndarray) -> float:
    return F.value(EmpiricalMeasure(x))


def _bumped(x: np.ndarray, i: int, di: float, j: int = -1, dj: float = 0.0) -> np.ndarray:
    y = x.copy()
    y[i] += di
    if j >= 0:
        y[j] += dj
    return y


def _mixed(F: CylinderFunctional, x: np.ndarray, i: int, j: int, d: float) -> float:
    return (
        _f(F, _bumped(x, i, d, j, d))
        - _f(F, _bumped(x, i, d, j, -d))
        - _f(F, _bumped(x, i, -d, j, d))
        + _f(F, _bumped(x, i, -d, j, -d))
    ) / (4.0 * d * d)


def apply_AN_fd(
    coeffs: ModelCoefficients,
    policy,
    F: CylinderFunctional,
    positions,
    t: float = 0.0,
    step: float = FD_STEP,
) -> float:
    """
    A_N F at the configuration positions by finite differences.

    First and pure second partials use 5-point central stencils; mixed
    partials use the 4-point stencil with one Richardson extrapolation.
    Drift and controls are frozen at the unperturbed configuration.

    Raises:
        ValueError: If there are more than 64 particles
    """
    x = np.asarray(positions, dtype=float).reshape(-1)
    n = x.size
    if not 1 <= n <= MAX_FD_PARTICLES:
        raise ValueError(f"apply_AN_fd supports 1..{MAX_FD_PARTICLES} particles, got {n}")
    mu = EmpiricalMeasure(x)
    u = np.asarray(policy(t, x, mu), dtype=float)
    b = coeffs.drift(t, x, mu, u)
    s2 = coeffs.sigma_total2(x)
    A = np.asarray(coeffs.sigma_com(x), dtype=float)
    f0 = _f(F, x)
    d = step

    total = 0.0
    for i in range(n):
        fp1, fm1 = _f(F, _bumped(x, i, d)), _f(F, _bumped(x, i, -d))
        fp2, fm2 = _f(F, _bumped(x, i, 2 * d)), _f(F, _bumped(x, i, -2 * d))
        first = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * d)
        second = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * d * d)
        total += b[i] * first + 0.5 * s2[i] * second

    if np.any(A != 0.0):
        for i in range(n):
            for j in range(i + 1, n):
                mixed = (4.0 * _mixed(F, x, i, j, d) - _mixed(F, x, i, j, 2 * d)) / 3.0
                total += A[i] * A[j] * mixed
    return float(total)


def apply_lambda_lim(
    coeffs: ModelCoefficients,
    policy,
    F: CylinderFunctional,
    mu: Measure,
    t: float = 0.0,
) -> float:
    """Λ_lim F(μ) from closed-form variational derivatives."""
    points, masses = mu.atoms()
    u = np.asarray(policy(t, points, mu), dtype=float)
    b = coeffs.drift(t, points, mu, u)
    s2 = coeffs.sigma_total2(points)
    local = b * F.vd1_dx(mu, points) + 0.5 * s2 * F.vd1_dxx(mu, points)
    first = float(masses @ local)
    if F.is_linear:
        return first
    A = np.asarray(coeffs.sigma_com(points), dtype=float)
    q = masses * A
    kernel = F.vd2_dxy(points[:, None], points[None, :])
    return first + 0.5 * float(q @ kernel @ q)


def apply_lambda_corr(coeffs: ModelCoefficients, F: CylinderFunctional, mu: Measure) -> float:
    """Λ_corr F(μ) = ½∫σ_ind²(x)·∂²_yz δ²F(x, x) μ(dx)."""
    if F.is_linear:
        return 0.0
    points, masses = mu.atoms()
    s2 = np.asarray(coeffs.sigma_ind(points), dtype=float) ** 2
    return 0.5 * float(masses @ (s2 * F.vd2_dxy(points, points)))


def decomposition_residual(
    coeffs: ModelCoefficients,
    policy,
    F: CylinderFunctional,
    positions,
    t: float = 0.0,
) -> float:
    """|A_N F − (Λ_lim F + Λ_corr F / N)| at the atomic measure of positions."""
    x = np.asarray(positions, dtype=float).reshape(-1)
    mu = EmpiricalMeasure(x)
    exact = apply_lambda_lim(coeffs, policy, F, mu, t) + apply_lambda_corr(
        coeffs, F, mu
    ) / x.size
    return abs(apply_AN_fd(coeffs, policy, F, x, t) - exact)


def linear(F: MomentFunctional, weight: float = 1.0) -> CylinderFunctional:
    return CylinderFunctional(((weight, F),), name=F.name)
