"""
ε-Nash estimation of a candidate policy in the N-player game.

Player 1 tries each deviation in a finite family while players 2..N keep
u_com. For every seed all deviations share the same noise, so the gain

    payoff(everyone on u_com) − payoff(player 1 deviates)

is computed with common random numbers. The raw ε̂(N) is the largest mean
gain over the family; it is a lower bound on ε restricted to that family.

The coupled estimate subtracts from each gain the gain of the same deviation
against the reference run's recorded crowd, which player 1 cannot move. The
crowd fluctuation common to both cancels, and what remains is the part of the
gain that comes from player 1 moving the measure, an O(1/N) quantity with
O(1/N) spread. Against a fixed crowd the best response to that crowd gains
nothing, so when u_com is a mean-field equilibrium the coupled ε̂(N) bounds
the family-restricted ε up to the frozen gains reported alongside it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from ..model import ModelCoefficients
from ..particles import (
    Smoothing,
    generate_noise,
    simulate_tagged_frozen,
    simulate_tagged_pair,
)
from ..policies import uses_measure
from ..rng import BOOTSTRAP_STREAM, stream


COUPLED_LABEL = "gain in excess of the frozen-crowd gain"

# Deviation family


@dataclass(frozen=True)
class ShiftedPolicy:
    base: Callable
    shift: float
    lo: float
    hi: float

    @property
    def uses_measure(self) -> bool:
        return uses_measure(self.base)

    def __call__(self, t, x, mu=None):
        return np.clip(self.base(t, x, mu) + self.shift, self.lo, self.hi)


@dataclass(frozen=True)
class ScaledPolicy:
    base: Callable
    factor: float
    lo: float
    hi: float

    @property
    def uses_measure(self) -> bool:
        return uses_measure(self.base)

    def __call__(self, t, x, mu=None):
        return np.clip(self.factor * self.base(t, x, mu), self.lo, self.hi)


@dataclass(frozen=True)
class TimeShiftedPolicy:
    base: Callable
    lag: float

    @property
    def uses_measure(self) -> bool:
        return uses_measure(self.base)

    def __call__(self, t, x, mu=None):
        return self.base(max(t + self.lag, 0.0), x, mu)


@dataclass(frozen=True)
class NullDeviation:
    """Keep u_com; the gain is exactly zero."""

    @property
    def label(self) -> str:
        return "null"

    def apply(self, policy, u_box):
        return policy


@dataclass(frozen=True)
class AdditiveDeviation:
    shift: float

    @property
    def label(self) -> str:
        return f"shift {self.shift:+g}"

    def apply(self, policy, u_box):
        return ShiftedPolicy(policy, self.shift, *u_box)


@dataclass(frozen=True)
class ScaleDeviation:
    """Rescale the feedback, which rescales its spatial gradient."""

    factor: float

    @property
    def label(self) -> str:
        return f"scale x{self.factor:g}"

    def apply(self, policy, u_box):
        return ScaledPolicy(policy, self.factor, *u_box)


@dataclass(frozen=True)
class TimeShiftDeviation:
    lag: float

    @property
    def label(self) -> str:
        return f"time shift {self.lag:+g}"

    def apply(self, policy, u_box):
        return TimeShiftedPolicy(policy, self.lag)


def default_deviation_family(horizon: float) -> list:
    """Shifts ±0.02, ±0.1 and ±0.2, rescalings ×0.5 and ×1.5, time shifts ±10% of T."""
    return [
        AdditiveDeviation(0.02),
        AdditiveDeviation(-0.02),
        AdditiveDeviation(0.1),
        AdditiveDeviation(-0.1),
        AdditiveDeviation(0.2),
        AdditiveDeviation(-0.2),
        ScaleDeviation(0.5),
        ScaleDeviation(1.5),
        TimeShiftDeviation(0.1 * horizon),
        TimeShiftDeviation(-0.1 * horizon),
    ]


DEVIATION_KINDS = {
    "null": NullDeviation,
    "shift": AdditiveDeviation,
    "scale": ScaleDeviation,
    "time-shift": TimeShiftDeviation,
}


def parse_deviation(text: str):
    """Parse "shift:0.1", "scale:1.5", "time-shift:-0.05" or "null"."""
    kind, _, value = text.partition(":")
    kind = kind.strip()
    if kind not in DEVIATION_KINDS:
        raise ValueError(f"Unknown deviation {text!r}; kinds: {sorted(DEVIATION_KINDS)}")
    if kind == "null":
        return NullDeviation()
    return DEVIATION_KINDS[kind](float(value))


# Estimation


def _seed_gains(
    coeffs: ModelCoefficients,
    u_com,
    n_list: Sequence[int],
    deviations: Sequence,
    seed: int,
    dt: float,
    n_steps: int,
    x0_sampler: Callable,
    smoothing: Optional[Smoothing],
    frozen: bool,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    noise_max = generate_noise(seed, n_steps, dt, max(n_list))
    shape = (len(n_list), len(deviations))
    gains = np.empty(shape)
    frozen_gains = np.empty(shape) if frozen else None
    policies = [deviation.apply(u_com, coeffs.u_box) for deviation in deviations]
    for a, n in enumerate(n_list):
        noise = noise_max.subset(n)
        crowd, reference = simulate_tagged_pair(
            coeffs, u_com, u_com, n, noise, x0_sampler, smoothing
        )
        if frozen:
            _, frozen_reference = simulate_tagged_frozen(
                coeffs, u_com, crowd, noise, smoothing
            )
        for d, policy in enumerate(policies):
            _, payoff = simulate_tagged_pair(
                coeffs, policy, u_com, n, noise, x0_sampler, smoothing
            )
            gains[a, d] = reference - payoff
            if frozen:
                _, cost = simulate_tagged_frozen(coeffs, policy, crowd, noise, smoothing)
                frozen_gains[a, d] = frozen_reference - cost
    return gains, frozen_gains


def nash_seed_gains(
    coeffs: ModelCoefficients,
    u_com,
    n_list: Sequence[int],
    deviations: Sequence,
    seed: int,
    dt: float,
    n_steps: int,
    x0_sampler: Callable,
    smoothing: Optional[Smoothing] = None,
) -> np.ndarray:
    """
    Gains of every deviation at every N for one seed.

    Returns:
        Array (len(n_list), len(deviations))
    """
    gains, _ = _seed_gains(
        coeffs, u_com, n_list, deviations, seed, dt, n_steps, x0_sampler, smoothing, False
    )
    return gains


def nash_seed_coupled_gains(
    coeffs: ModelCoefficients,
    u_com,
    n_list: Sequence[int],
    deviations: Sequence,
    seed: int,
    dt: float,
    n_steps: int,
    x0_sampler: Callable,
    smoothing: Optional[Smoothing] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    N-player gains and the matching gains against the frozen reference crowd.

    Both use the same x0, B row 0 and W for player 1. The frozen gain of a
    deviation replays it against the reference run's measure path, so the
    difference of the two isolates player 1's influence on the crowd. The
    null deviation has zero gain in both.

    Returns:
        (gains, frozen_gains), each (len(n_list), len(deviations))
    """
    return _seed_gains(
        coeffs, u_com, n_list, deviations, seed, dt, n_steps, x0_sampler, smoothing, True
    )


@dataclass
class NashRow:
    n: int
    epsilon: float
    stderr: float
    ci_low: float
    ci_high: float
    best_deviation: str
    mean_gains: dict = field(default_factory=dict)


@dataclass
class NashTable:
    """
    ε̂(N) per player count; ε̂ is a lower bound restricted to the family.

    Attributes:
        rows: One NashRow per N
        deviations: Labels of the deviation family
        n_seeds: Seeds averaged over
        confidence: Bootstrap confidence level
    """

    rows: list
    deviations: list
    n_seeds: int
    confidence: float = 0.95
    label: str = "family-restricted lower bound on epsilon"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{k: v for k, v in asdict(r).items() if k != "mean_gains"} for r in self.rows]
        )

    def upper_bounds_decreasing(self) -> bool:
        highs = [r.ci_high for r in self.rows]
        return all(b < a for a, b in zip(highs, highs[1:]))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "deviations": self.deviations,
            "n_seeds": self.n_seeds,
            "confidence": self.confidence,
            "rows": [asdict(r) for r in self.rows],
        }


def summarize_gains(
    gains: np.ndarray,
    n_list: Sequence[int],
    labels: Sequence[str],
    n_bootstrap: int = 1000,
    bootstrap_seed: int = 0,
    confidence: float = 0.95,
    label: Optional[str] = None,
) -> NashTable:
    """
    Aggregate per-seed gains (n_seeds, len(n_list), len(labels)) into ε̂ rows.

    The bootstrap resamples seeds and recomputes the max over deviations.
    """
    gains = np.asarray(gains, dtype=float)
    n_seeds = gains.shape[0]
    rng = stream(bootstrap_seed, BOOTSTRAP_STREAM)
    idx = rng.integers(0, n_seeds, size=(n_bootstrap, n_seeds))
    alpha = 0.5 * (1.0 - confidence)
    rows = []
    for a, n in enumerate(n_list):
        per_seed = gains[:, a, :]
        means = per_seed.mean(axis=0)
        best = int(np.argmax(means))
        boot = per_seed[idx].mean(axis=1).max(axis=1)
        rows.append(
            NashRow(
                n=int(n),
                epsilon=float(means[best]),
                stderr=float(boot.std(ddof=1)) if n_bootstrap > 1 else 0.0,
                ci_low=float(np.quantile(boot, alpha)),
                ci_high=float(np.quantile(boot, 1.0 - alpha)),
                best_deviation=labels[best],
                mean_gains={lab: float(m) for lab, m in zip(labels, means)},
            )
        )
    table = NashTable(rows, list(labels), n_seeds, confidence)
    if label is not None:
        table.label = label
    return table


def epsilon_nash_estimate(
    coeffs: ModelCoefficients,
    u_com,
    n_list: Sequence[int],
    deviations: Sequence,
    n_seeds: int,
    dt: float,
    n_steps: int,
    x0_sampler: Callable,
    seed_offset: int = 0,
    n_bootstrap: int = 1000,
    smoothing: Optional[Smoothing] = None,
    coupled: bool = False,
) -> NashTable:
    """
    Serial ε̂(N) estimate over seeds seed_offset .. seed_offset + n_seeds - 1.

    Args:
        coeffs: Model
        u_com: Candidate policy of the crowd
        n_list: Player counts
        deviations: Deviation family (objects with apply and label)
        n_seeds: Number of seeds
        dt: Time step
        n_steps: Number of steps
        x0_sampler: Initial law
        seed_offset: First seed
        n_bootstrap: Bootstrap resamples
        smoothing: Grid and bandwidth for measure-reading policies
        coupled: Summarize gains minus frozen-crowd gains instead of raw gains

    Returns:
        NashTable
    """
    seeds = range(seed_offset, seed_offset + n_seeds)
    args = (coeffs, u_com, n_list, deviations)
    tail = (dt, n_steps, x0_sampler, smoothing)
    labels = [d.label for d in deviations]
    if not coupled:
        gains = np.stack([nash_seed_gains(*args, seed, *tail) for seed in seeds])
        return summarize_gains(gains, n_list, labels, n_bootstrap, seed_offset)
    pairs = [nash_seed_coupled_gains(*args, seed, *tail) for seed in seeds]
    excess = np.stack([g - f for g, f in pairs])
    return summarize_gains(
        excess, n_list, labels, n_bootstrap, seed_offset, label=COUPLED_LABEL
    )
