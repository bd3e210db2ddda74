"""
N-player particle system under feedback controls.

    dX^i = b(t, X^i, μ^N_t, u^i) dt + σ_ind(X^i) dB^i + σ_com(X^i) dW

Explicit Euler–Maruyama with the empirical measure frozen at the start of
each step. Noise comes from a NoiseBundle whose rows are nested: the first N
rows of a bundle built for N_max particles equal the bundle built for N.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .grid import EmpiricalMeasure, Grid1D, GridMeasure, empirical_to_grid, mollified_delta
from .model import ModelCoefficients
from .policies import uses_measure
from .rng import COMMON_STREAM, INITIAL_STREAM, particle_stream, stream


class ParticleDivergenceError(RuntimeError):
    """Raised when a particle position stops being finite."""
    pass


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """
    Brownian increments on a fixed time mesh.

    Attributes:
        dt: Time step
        n_steps: Number of steps
        W_increments: Common increments ΔW_n (n_steps,)
        B_increments: Idiosyncratic increments ΔB^i_n (n_paths, n_steps)
        x0_normals: Standard normals for initial positions (n_paths,)
        seed: Master seed the bundle was generated from
    """

    dt: float
    n_steps: int
    W_increments: np.ndarray
    B_increments: np.ndarray
    x0_normals: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.B_increments.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def W_path(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.W_increments)))

    def subset(self, n_paths: int) -> NoiseBundle:
        if n_paths > self.n_paths:
            raise ValueError(
                f"Bundle holds {self.n_paths} idiosyncratic paths, {n_paths} requested"
            )
        return NoiseBundle(
            self.dt,
            self.n_steps,
            self.W_increments,
            self.B_increments[:n_paths],
            self.x0_normals[:n_paths],
            self.seed,
        )

    def with_common_increments(self, W_increments: np.ndarray) -> NoiseBundle:
        return NoiseBundle(
            self.dt,
            self.n_steps,
            np.asarray(W_increments, dtype=float),
            self.B_increments,
            self.x0_normals,
            self.seed,
        )


def generate_noise(seed: int, n_steps: int, dt: float, n_paths: int) -> NoiseBundle:
    """
    Draw a NoiseBundle from the keyed streams of seed.

    Row i of B_increments depends only on (seed, i), so bundles for different
    particle counts share their leading rows.
    """
    if n_steps < 1 or dt <= 0.0 or n_paths < 1:
        raise ValueError(
            f"Need n_steps >= 1, dt > 0, n_paths >= 1; got {n_steps}, {dt}, {n_paths}"
        )
    scale = np.sqrt(dt)
    W = scale * stream(seed, COMMON_STREAM).standard_normal(n_steps)
    B = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        B[i] = scale * particle_stream(seed, i).standard_normal(n_steps)
    x0 = stream(seed, INITIAL_STREAM).standard_normal(n_paths)
    return NoiseBundle(dt, n_steps, W, B, x0, seed)


@dataclass(frozen=True)
class InitialLaw:
    """
    Normal(mean, std²) initial law; std = 0 gives a deterministic start.

    Particles draw from the bundle's x0 normals; the grid density is a
    normalized Gaussian, or a mollified point mass when std = 0.
    """

    mean: float = 0.0
    std: float = 1.0

    def __call__(self, noise: NoiseBundle, n: int) -> np.ndarray:
        return self.mean + self.std * noise.x0_normals[:n]

    def density(self, grid: Grid1D, bandwidth: Optional[float] = None) -> GridMeasure:
        if self.std == 0.0:
            if bandwidth is None:
                raise ValueError("A deterministic initial law needs a bandwidth")
            return mollified_delta(grid, self.mean, bandwidth)
        return GridMeasure.from_function(
            grid,
            lambda x: np.exp(-0.5 * ((x - self.mean) / self.std) ** 2),
            normalize=True,
        )


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    t: float

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).reshape(-1)
        if positions.size < 1:
            raise ValueError("ParticleEnsemble needs at least one particle")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    @property
    def n(self) -> int:
        return self.positions.size

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Particle paths on the time mesh.

    Attributes:
        times: Mesh times (n_steps + 1,)
        positions: X^i_n with shape (n_steps + 1, N)
        controls: u^i_n with shape (n_steps, N)
    """

    times: np.ndarray
    positions: np.ndarray
    controls: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    def ensemble(self, step: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.positions[step], float(self.times[step]))

    def final(self) -> ParticleEnsemble:
        return self.ensemble(len(self.times) - 1)

    def to_frame(self) -> pd.DataFrame:
        n_times, n = self.positions.shape
        return pd.DataFrame(
            {
                "step": np.repeat(np.arange(n_times), n),
                "t": np.repeat(self.times, n),
                "particle": np.tile(np.arange(n), n_times),
                "x": self.positions.reshape(-1),
            }
        )


@dataclass(frozen=True)
class Smoothing:
    """Grid and bandwidth used to hand policies a smoothed empirical measure."""

    grid: Grid1D
    bandwidth: float


def _policy_measure(policy, positions, atomic, smoothing: Optional[Smoothing]):
    if uses_measure(policy) and smoothing is not None:
        return empirical_to_grid(positions, smoothing.grid, smoothing.bandwidth)
    return atomic


def _step(
    coeffs: ModelCoefficients,
    x: np.ndarray,
    u: np.ndarray,
    mu: EmpiricalMeasure,
    noise: NoiseBundle,
    n: int,
) -> np.ndarray:
    t = n * noise.dt
    b = coeffs.drift(t, x, mu, u)
    new = (
        x
        + b * noise.dt
        + coeffs.sigma_ind(x) * noise.B_increments[: x.size, n]
        + coeffs.sigma_com(x) * noise.W_increments[n]
    )
    bad = np.flatnonzero(~np.isfinite(new))
    if bad.size:
        raise ParticleDivergenceError(
            f"Particle {bad[0]} became non-finite at step {n} (t={t:.6g})"
        )
    return new


def step_particles(
    ens: ParticleEnsemble,
    coeffs: ModelCoefficients,
    policy_common,
    noise: NoiseBundle,
    step_index: int,
    smoothing: Optional[Smoothing] = None,
) -> ParticleEnsemble:
    """
    One Euler–Maruyama step of every particle under policy_common.

    Raises:
        ValueError: If step_index is outside the mesh or noise is too small
        ParticleDivergenceError: If a position becomes non-finite
    """
    if not 0 <= step_index < noise.n_steps:
        raise ValueError(f"step_index {step_index} outside [0, {noise.n_steps})")
    if ens.n > noise.n_paths:
        raise ValueError(f"Noise holds {noise.n_paths} paths for {ens.n} particles")
    t = step_index * noise.dt
    x = np.array(ens.positions)
    mu = EmpiricalMeasure(x)
    u = policy_common(t, x, _policy_measure(policy_common, x, mu, smoothing))
    return ParticleEnsemble(_step(coeffs, x, u, mu, noise, step_index), t + noise.dt)


def _self_environment(u_ind, u_com, smoothing: Optional[Smoothing]):
    """The players' own empirical measure, smoothed for measure-reading policies."""
    smooth = smoothing is not None and (uses_measure(u_com) or uses_measure(u_ind))

    def environment(k: int, x: np.ndarray):
        mu = EmpiricalMeasure(x)
        if smooth:
            return mu, empirical_to_grid(x, smoothing.grid, smoothing.bandwidth)
        return mu, mu

    return environment


def _simulate(
    coeffs: ModelCoefficients,
    u_ind,
    u_com,
    n: int,
    noise: NoiseBundle,
    x0: np.ndarray,
    smoothing: Optional[Smoothing],
    environment: Optional[Callable] = None,
) -> Trajectory:
    """
    Euler–Maruyama loop; player 0 uses u_ind, the others u_com.

    environment(k, x) returns (drift measure, policy measure) at step k and
    defaults to the players' own empirical measure.
    """
    if n > noise.n_paths:
        raise ValueError(f"Noise holds {noise.n_paths} paths for {n} particles")
    if environment is None:
        environment = _self_environment(u_ind, u_com, smoothing)
    positions = np.empty((noise.n_steps + 1, n))
    controls = np.empty((noise.n_steps, n))
    positions[0] = x0
    for k in range(noise.n_steps):
        t = k * noise.dt
        x = positions[k]
        mu, policy_mu = environment(k, x)
        u = np.asarray(u_com(t, x, policy_mu), dtype=float)
        if u_ind is not u_com:
            u = u.copy()
            u[0] = np.asarray(u_ind(t, x[:1], policy_mu), dtype=float).reshape(-1)[0]
        controls[k] = u
        positions[k + 1] = _step(coeffs, x, u, mu, noise, k)
    return Trajectory(noise.times, positions, controls)


def _initial_positions(x0_sampler, noise: NoiseBundle, n: int) -> np.ndarray:
    if callable(x0_sampler):
        x0 = np.asarray(x0_sampler(noise, n), dtype=float)
    else:
        x0 = np.broadcast_to(np.asarray(x0_sampler, dtype=float), (n,))
    return np.array(x0, dtype=float).reshape(n)


def _check_slices(slices, noise: NoiseBundle) -> None:
    if len(slices) != noise.n_steps + 1:
        raise ValueError(
            f"Measure path has {len(slices)} slices, mesh has {noise.n_steps + 1} times"
        )


def simulate_ensemble(
    coeffs: ModelCoefficients,
    policy,
    n: int,
    noise: NoiseBundle,
    x0_sampler: Callable,
    smoothing: Optional[Smoothing] = None,
) -> Trajectory:
    """
    Simulate n exchangeable players all using policy.

    Args:
        coeffs: Model
        policy: Feedback policy u(t, x, μ)
        n: Number of players (at most noise.n_paths)
        noise: Noise bundle; rows 0..n-1 are used
        x0_sampler: Callable (noise, n) -> positions, or fixed positions
        smoothing: Grid and bandwidth for measure-reading policies

    Returns:
        Trajectory on the noise time mesh
    """
    x0 = _initial_positions(x0_sampler, noise, n)
    return _simulate(coeffs, policy, policy, n, noise, x0, smoothing)


def simulate_limit_ensemble(
    coeffs: ModelCoefficients,
    u_ind,
    u_com,
    n: int,
    slices: list[GridMeasure],
    noise: NoiseBundle,
    x0_sampler: Callable,
) -> Trajectory:
    """
    n McKean particles driven by the noise of the n-player system.

    Each particle reads the limiting measure slices[k] instead of the
    empirical measure, so particle i shares x0, B^i and W with player i of
    simulate_tagged_pair(coeffs, u_ind, u_com, n, noise, x0_sampler). Given W
    the particles are independent draws from the limit law, except particle 0
    which follows u_ind.

    Args:
        coeffs: Model
        u_ind: Policy of particle 0
        u_com: Policy of the other particles
        n: Number of particles
        slices: Limit measure at every mesh time, solved on the same W
        noise: Noise bundle
        x0_sampler: Same initial sampler as the n-player run

    Returns:
        Trajectory on the noise time mesh
    """
    _check_slices(slices, noise)
    x0 = _initial_positions(x0_sampler, noise, n)
    return _simulate(
        coeffs, u_ind, u_com, n, noise, x0, None, lambda k, x: (slices[k], slices[k])
    )


def payoff_tagged(
    coeffs: ModelCoefficients,
    trajectory: Trajectory,
    policy_of_player1,
    noise: NoiseBundle,
    smoothing: Optional[Smoothing] = None,
) -> float:
    """
    Realized cost of player 1: Σ_n J(t_n, X¹_n, μ^N_n, u¹_n)·dt + V_T(X¹_T, μ^N_T).
    """
    total = 0.0
    for k in range(noise.n_steps):
        t = k * noise.dt
        x = trajectory.positions[k]
        mu = EmpiricalMeasure(x)
        policy_mu = _policy_measure(policy_of_player1, x, mu, smoothing)
        u1 = np.asarray(policy_of_player1(t, x[:1], policy_mu), dtype=float)
        total += float(coeffs.running_cost(t, x[:1], mu, u1)[0]) * noise.dt
    final = trajectory.positions[-1]
    return total + float(coeffs.terminal_cost(final[:1], EmpiricalMeasure(final))[0])


def _stored_payoff(
    coeffs: ModelCoefficients,
    trajectory: Trajectory,
    dt: float,
    crowd: Optional[np.ndarray] = None,
) -> float:
    """Cost of column 0 from stored controls; the measure is built from crowd rows."""
    crowd = trajectory.positions if crowd is None else crowd
    total = 0.0
    for k in range(trajectory.controls.shape[0]):
        x1 = trajectory.positions[k, :1]
        mu = EmpiricalMeasure(crowd[k])
        u1 = trajectory.controls[k, :1]
        total += float(coeffs.running_cost(k * dt, x1, mu, u1)[0]) * dt
    final = trajectory.positions[-1, :1]
    return total + float(coeffs.terminal_cost(final, EmpiricalMeasure(crowd[-1]))[0])


def simulate_tagged_pair(
    coeffs: ModelCoefficients,
    u_ind,
    u_com,
    n: int,
    noise: NoiseBundle,
    x0_sampler: Callable,
    smoothing: Optional[Smoothing] = None,
) -> tuple[Trajectory, float]:
    """
    Player 1 uses u_ind, players 2..n use u_com.

    Passing the same object for u_ind and u_com reproduces simulate_ensemble
    bit for bit.

    Returns:
        (trajectory, realized cost of player 1)
    """
    x0 = _initial_positions(x0_sampler, noise, n)
    trajectory = _simulate(coeffs, u_ind, u_com, n, noise, x0, smoothing)
    return trajectory, _stored_payoff(coeffs, trajectory, noise.dt)


def simulate_tagged_frozen(
    coeffs: ModelCoefficients,
    u_ind,
    reference: Trajectory,
    noise: NoiseBundle,
    smoothing: Optional[Smoothing] = None,
) -> tuple[Trajectory, float]:
    """
    Player 1 under u_ind facing the recorded measure path of a reference run.

    The measure at step k is the empirical measure of reference.positions[k],
    player 1's reference atom included, so the player cannot move it. With
    u_ind equal to the reference policy of player 1 the path and cost
    reproduce the reference run's player 1.

    Args:
        coeffs: Model
        u_ind: Policy of player 1
        reference: Trajectory of an n-player run on the same noise
        noise: Noise bundle of the reference run
        smoothing: Grid and bandwidth for measure-reading policies

    Returns:
        (single-column trajectory, realized cost of player 1)
    """
    crowd = reference.positions
    if crowd.shape[0] != noise.n_steps + 1:
        raise ValueError(
            f"Reference has {crowd.shape[0]} mesh times, noise has {noise.n_steps + 1}"
        )

    def environment(k: int, x: np.ndarray):
        mu = EmpiricalMeasure(crowd[k])
        return mu, _policy_measure(u_ind, crowd[k], mu, smoothing)

    trajectory = _simulate(
        coeffs, u_ind, u_ind, 1, noise, crowd[0, :1], None, environment
    )
    return trajectory, _stored_payoff(coeffs, trajectory, noise.dt, crowd)


def simulate_tagged_limit(
    coeffs: ModelCoefficients,
    u_ind,
    slices: list[GridMeasure],
    noise: NoiseBundle,
    x0: float,
) -> np.ndarray:
    """
    Tagged player against the limiting measure flow.

    Uses idiosyncratic row 0 and the common increments of noise, with the
    measure at step n taken from slices[n] (a solved SPDE path on the same W).

    Returns:
        X_tag on the mesh (n_steps + 1,)
    """
    _check_slices(slices, noise)
    trajectory = _simulate(
        coeffs,
        u_ind,
        u_ind,
        1,
        noise,
        np.array([float(x0)]),
        None,
        lambda k, x: (slices[k], slices[k]),
    )
    return trajectory.positions[:, 0]
