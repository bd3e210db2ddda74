"""
Value and policy fields on the time–space grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..grid import Grid1D


def _long_frame(times: np.ndarray, grid: Grid1D, values: np.ndarray, column: str):
    x = grid.nodes
    return pd.DataFrame(
        {
            "t": np.repeat(times, x.size),
            "x": np.tile(x, len(times)),
            column: values.reshape(-1),
        }
    )


@dataclass(frozen=True, eq=False)
class ValueField:
    """
    V(t, x) along a fixed measure path.

    Attributes:
        times: Mesh times (n_steps + 1,)
        grid: Spatial grid
        V_values: Values with shape (n_steps + 1, n_points)
    """

    times: np.ndarray
    grid: Grid1D
    V_values: np.ndarray

    def __post_init__(self):
        if self.V_values.shape != (len(self.times), self.grid.n_points):
            raise ValueError(
                f"V_values has shape {self.V_values.shape}, expected "
                f"({len(self.times)}, {self.grid.n_points})"
            )

    def to_frame(self) -> pd.DataFrame:
        return _long_frame(self.times, self.grid, self.V_values, "value")


@dataclass(frozen=True, eq=False)
class PolicyField:
    """
    Feedback control u(t, x) tabulated on the mesh.

    Step n of a simulation uses row n; between nodes the field is linearly
    interpolated and held constant beyond the grid ends. The measure argument
    is ignored, so the field is measure-free.

    Attributes:
        times: Mesh times (n_steps + 1,)
        grid: Spatial grid
        u_values: Controls with shape (n_steps, n_points)
        context: Description of the measure path the field was computed on
    """

    times: np.ndarray
    grid: Grid1D
    u_values: np.ndarray
    context: dict = field(default_factory=dict)
    uses_measure = False

    def __post_init__(self):
        expected = (len(self.times) - 1, self.grid.n_points)
        if self.u_values.shape != expected:
            raise ValueError(f"u_values has shape {self.u_values.shape}, expected {expected}")

    @classmethod
    def constant(cls, times, grid: Grid1D, value: float = 0.0, **context) -> PolicyField:
        u = np.full((len(times) - 1, grid.n_points), float(value))
        return cls(np.asarray(times, dtype=float), grid, u, dict(context))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def step_index(self, t: float) -> int:
        k = int(np.floor(t / self.dt + 1e-9))
        return min(max(k, 0), self.u_values.shape[0] - 1)

    def __call__(self, t: float, x, mu=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        row = self.u_values[self.step_index(t)]
        return np.interp(x, self.grid.nodes, row)

    def within(self, u_box: tuple[float, float]) -> bool:
        return bool(np.all((self.u_values >= u_box[0]) & (self.u_values <= u_box[1])))

    def blend(self, other: PolicyField, weight: float, **context) -> PolicyField:
        """(1 − weight)·self + weight·other."""
        u = (1.0 - weight) * self.u_values + weight * other.u_values
        return PolicyField(self.times, self.grid, u, {**self.context, **context})

    def max_gap(self, other: PolicyField) -> float:
        return float(np.max(np.abs(self.u_values - other.u_values)))

    def to_frame(self) -> pd.DataFrame:
        return _long_frame(self.times[:-1], self.grid, self.u_values, "control")
