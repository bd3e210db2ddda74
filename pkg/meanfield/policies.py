"""
Feedback policies u(t, x, μ).

A policy is any callable policy(t, x, mu) -> array of controls shaped like x.
The attribute uses_measure tells the particle simulator whether to build the
smoothed empirical measure before calling it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ZeroPolicy:
    uses_measure = False

    def __call__(self, t: float, x, mu=None) -> np.ndarray:
        return np.zeros(np.shape(x))


@dataclass(frozen=True)
class ConstantPolicy:
    value: float
    uses_measure = False

    def __call__(self, t: float, x, mu=None) -> np.ndarray:
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class LinearFeedbackPolicy:
    """u = clip(intercept − gain·x, lo, hi)."""

    intercept: float = 0.0
    gain: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf
    uses_measure = False

    def __call__(self, t: float, x, mu=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip(self.intercept - self.gain * x, self.lo, self.hi)


@dataclass(frozen=True)
class CallablePolicy:
    """Wrap fn(t, x, mu); set uses_measure when fn reads mu."""

    fn: Callable
    uses_measure: bool = False

    def __call__(self, t: float, x, mu=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(t, x, mu), dtype=float), x.shape).copy()


def uses_measure(policy) -> bool:
    return bool(getattr(policy, "uses_measure", True))
