"""
Experiment configuration.

Configs are flat text files, one ``key = value`` per line, with ``#``
comments and dotted keys:

    model = ou-common
    model.kappa = 1.0
    grid.n_points = 321
    n_list = [50, 100, 200, 400, 800]

Values are parsed with yaml.safe_load, so numbers, booleans and lists are
typed. Validation reports every problem at once through ConfigError before
any simulation starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from meanfield.grid import DomainError, Grid1D, GridMeasure
from meanfield.model import (
    MODEL_DEFAULTS,
    CoefficientError,
    ModelCoefficients,
    ModelError,
    build_model,
)
from meanfield.mfg.nash import parse_deviation
from meanfield.moments import MOMENT_GALLERY
from meanfield.particles import InitialLaw

METHODS = ("ito", "characteristics", "both")
POLICY_KINDS = ("zero", "constant", "linear", "mfg")
DT_SAFETY = 0.5

# Keys that change where or how fast a run goes, not what it computes
RUNTIME_KEYS = ("out", "workers")


class ConfigError(ValueError):
    """Raised with the complete list of problems found in a configuration."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        lines = "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(f"{len(self.errors)} configuration problem(s):\n{lines}")


@dataclass
class ExperimentConfig:
    """
    Resolved experiment parameters.

    Attribute names are the config keys with dots replaced by underscores;
    model.<name> keys go to model_params.
    """

    model: str = "ou-common"
    model_params: dict = field(default_factory=dict)

    grid_x_min: float = -8.0
    grid_x_max: float = 8.0
    grid_n_points: int = 161

    T: float = 1.0
    dt: Optional[float] = None
    n_list: list = field(default_factory=lambda: [50, 100, 200, 400, 800])
    seeds: int = 20
    seed_offset: int = 0
    bandwidth: float = 0.25
    method: str = "ito"
    milstein: bool = True
    workers: int = 1
    out: str = "results"

    policy_kind: str = "zero"
    policy_value: float = 0.0
    policy_gain: float = 0.0

    x0_mean: float = 0.0
    x0_std: float = 1.0

    functionals: list = field(
        default_factory=lambda: ["x", "x^2", "xy", "(x-y)^2", "cos(x-y)"]
    )
    tagged_functionals: list = field(
        default_factory=lambda: ["x", "x^2", "x*m1", "mu:(x-y)^2"]
    )
    tagged_shift: float = 0.0
    chaos_acceptance: str = "(x-y)^2"
    tagged_acceptance: str = "mu:(x-y)^2"

    generator_n_list: list = field(default_factory=lambda: [2, 5, 8, 16])
    generator_n_configs: int = 50
    generator_spread: float = 1.0
    generator_tol: float = 1e-5

    sensitivity_x0: float = 0.5
    sensitivity_x1: float = -0.5
    sensitivity_x2: float = 0.75
    sensitivity_h_bump: float = 1e-3

    mfg_n_iter: int = 30
    mfg_damping: float = 0.5
    mfg_tol: float = 1e-4

    nash_deviations: list = field(default_factory=list)
    nash_n_bootstrap: int = 1000
    nash_confidence: float = 0.95

    # Construction

    @classmethod
    def from_values(cls, values: dict[str, Any]) -> tuple[ExperimentConfig, list[str]]:
        """Build a config from parsed key/value pairs, collecting type errors."""
        cfg = cls()
        errors: list[str] = []
        defaults = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cls)}
        for key, value in values.items():
            if key.startswith("model."):
                cfg.model_params[key[len("model."):]] = value
                continue
            name = key.replace(".", "_")
            if name == "model_params" or name not in defaults:
                errors.append(f"unknown key {key!r}")
                continue
            try:
                setattr(cfg, name, _coerce(name, value, defaults[name]))
            except (TypeError, ValueError) as e:
                errors.append(f"{key}: {e}")
        return cfg, errors

    # Derived objects

    def build_model(self) -> ModelCoefficients:
        return build_model(self.model, **self.model_params)

    def build_grid(self) -> Grid1D:
        return Grid1D(float(self.grid_x_min), float(self.grid_x_max), int(self.grid_n_points))

    def initial_law(self) -> InitialLaw:
        return InitialLaw(float(self.x0_mean), float(self.x0_std))

    def initial_density(self, grid: Optional[Grid1D] = None) -> GridMeasure:
        grid = grid or self.build_grid()
        return self.initial_law().density(grid, self.bandwidth)

    @property
    def n_steps(self) -> int:
        if self.dt is None:
            raise ValueError("Config has no time step; resolve it first")
        return int(round(self.T / self.dt))

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seed_offset, self.seed_offset + self.seeds))

    def stable_dt(self, coeffs: ModelCoefficients, grid: Grid1D) -> float:
        """
        Largest dt meeting the diffusive and advective bounds at t = 0.

        The diffusion bound covers σ_ind² + σ_com² and, for the
        characteristics scheme, σ_ind²·(max A / min A)². The drift bound uses
        |b₁| on the initial law plus |b₂| times the largest control the
        policy can take.
        """
        x = grid.nodes
        v0 = self.initial_density(grid)
        s2 = float(np.max(coeffs.sigma_total2(x)))
        b_max = float(np.max(np.abs(coeffs.b1(0.0, x, v0))))
        b_max += self._control_bound(coeffs, x) * float(
            np.max(np.abs(coeffs.b2(0.0, x, v0)))
        )
        if self.method in ("characteristics", "both"):
            A = np.abs(np.asarray(coeffs.sigma_com(x), dtype=float))
            A_prime = np.abs(coeffs.sigma_com_prime(x))
            s_ind = float(np.max(np.asarray(coeffs.sigma_ind(x), dtype=float) ** 2))
            ratio = A.max() / A.min()
            s2 = max(s2, s_ind * ratio**2)
            curvature = 2.0 * A.max() * A_prime.max() / A.min() ** 2
            b_max = ratio * (b_max + 0.5 * float(np.max(A * A_prime)))
            b_max += 0.5 * s_ind * curvature
        bounds = [math.inf]
        if s2 > 0.0:
            bounds.append(grid.h**2 / s2)
        if b_max > 0.0:
            bounds.append(grid.h / b_max)
        return min(bounds)

    def _control_bound(self, coeffs: ModelCoefficients, x: np.ndarray) -> float:
        u_max = max(abs(coeffs.u_box[0]), abs(coeffs.u_box[1]))
        if self.policy_kind == "zero":
            return 0.0
        if self.policy_kind == "constant":
            return min(abs(self.policy_value), u_max)
        if self.policy_kind == "linear":
            reach = abs(self.policy_value) + abs(self.policy_gain) * float(np.max(np.abs(x)))
            return min(reach, u_max)
        return u_max

    # Validation

    def validate(self) -> list[str]:
        """Every problem with this config; empty when it is runnable."""
        errors: list[str] = []
        coeffs = grid = None

        if self.model not in MODEL_DEFAULTS:
            errors.append(f"unknown model {self.model!r}; available: {sorted(MODEL_DEFAULTS)}")
        else:
            try:
                coeffs = self.build_model()
            except (ModelError, CoefficientError, TypeError, ValueError) as e:
                errors.append(f"model: {e}")
        try:
            grid = self.build_grid()
        except (TypeError, ValueError) as e:
            errors.append(f"grid: {e}")

        _positive(errors, "T", self.T)
        if self.dt is not None:
            _positive(errors, "dt", self.dt)
            if self.dt > 0 and self.T > 0:
                ratio = self.T / self.dt
                if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                    errors.append(f"T={self.T} is not a whole number of steps dt={self.dt}")
        _sizes(errors, "n_list", self.n_list, lo=1)
        _at_least(errors, "seeds", self.seeds, 1)
        _at_least(errors, "seed_offset", self.seed_offset, 0)
        _at_least(errors, "workers", self.workers, 1)
        _positive(errors, "bandwidth", self.bandwidth)
        if self.method not in METHODS:
            errors.append(f"method {self.method!r} not in {METHODS}")
        if self.policy_kind not in POLICY_KINDS:
            errors.append(f"policy.kind {self.policy_kind!r} not in {POLICY_KINDS}")
        if self.x0_std < 0:
            errors.append(f"x0.std must be >= 0, got {self.x0_std}")

        unknown = [f for f in self.functionals if f not in MOMENT_GALLERY]
        if unknown:
            errors.append(f"functionals {unknown} not in {sorted(MOMENT_GALLERY)}")
        if self.chaos_acceptance and self.chaos_acceptance not in MOMENT_GALLERY:
            errors.append(
                f"chaos.acceptance {self.chaos_acceptance!r} not in {sorted(MOMENT_GALLERY)}"
            )
        from .experiments import parse_tagged_functional

        for name in self.tagged_functionals:
            try:
                parse_tagged_functional(name)
            except ValueError as e:
                errors.append(f"tagged.functionals: {e}")
        if self.tagged_acceptance:
            try:
                parse_tagged_functional(self.tagged_acceptance)
            except ValueError as e:
                errors.append(f"tagged.acceptance: {e}")
        for text in self.nash_deviations:
            try:
                parse_deviation(str(text))
            except ValueError as e:
                errors.append(f"nash.deviations: {e}")

        _sizes(errors, "generator.n_list", self.generator_n_list, lo=1, hi=64)
        _at_least(errors, "generator.n_configs", self.generator_n_configs, 1)
        _positive(errors, "generator.spread", self.generator_spread)
        _positive(errors, "generator.tol", self.generator_tol)
        _positive(errors, "sensitivity.h_bump", self.sensitivity_h_bump)
        _at_least(errors, "mfg.n_iter", self.mfg_n_iter, 1)
        if not 0.0 <= self.mfg_damping <= 1.0:
            errors.append(f"mfg.damping must lie in [0, 1], got {self.mfg_damping}")
        _positive(errors, "mfg.tol", self.mfg_tol)
        _at_least(errors, "nash.n_bootstrap", self.nash_n_bootstrap, 2)
        if not 0.0 < self.nash_confidence < 1.0:
            errors.append(f"nash.confidence must lie in (0, 1), got {self.nash_confidence}")

        if coeffs is not None and grid is not None:
            errors.extend(self._check_against_grid(coeffs, grid))
        return errors

    def _check_against_grid(self, coeffs: ModelCoefficients, grid: Grid1D) -> list[str]:
        errors = []
        try:
            coeffs.check_grid(grid)
        except CoefficientError as e:
            errors.append(f"model on grid: {e}")
        if self.bandwidth < 2.0 * grid.h * (1.0 - 1e-12):
            errors.append(f"bandwidth {self.bandwidth} is below twice the grid spacing {grid.h:.4g}")
            return errors
        A = np.asarray(coeffs.sigma_com(grid.nodes), dtype=float)
        if self.method in ("characteristics", "both") and not np.all(A > 0.0):
            errors.append(f"method {self.method!r} needs sigma_com > 0 on the whole grid")
            return errors
        try:
            limit = self.stable_dt(coeffs, grid)
        except (DomainError, ValueError) as e:
            errors.append(f"initial law: {e}")
            return errors
        if self.dt is not None and self.dt > limit:
            errors.append(
                f"dt={self.dt} violates the CFL bound {limit:.4g} for {self.model} on "
                f"h={grid.h:.4g}; try dt <= {DT_SAFETY * limit:.4g}"
            )
        return errors

    def resolved(self) -> ExperimentConfig:
        """Copy with dt filled in from the stability bound when unset."""
        if self.dt is not None:
            return dataclasses.replace(self, model_params=dict(self.model_params))
        limit = self.stable_dt(self.build_model(), self.build_grid())
        n_steps = max(1, math.ceil(self.T / (DT_SAFETY * limit)))
        return dataclasses.replace(
            self, dt=self.T / n_steps, model_params=dict(self.model_params)
        )

    # Serialization

    def to_dict(self) -> dict:
        """Parameters that determine results (runtime keys excluded)."""
        data = dataclasses.asdict(self)
        for key in RUNTIME_KEYS:
            data.pop(key)
        if self.model in MODEL_DEFAULTS:
            data["model_params"] = {
                **MODEL_DEFAULTS[self.model],
                **{k: float(v) for k, v in self.model_params.items()},
            }
        return data

    def content_hash(self) -> str:
        """SHA-256 of the canonical JSON form of to_dict()."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or (default is None and name == "dt"):
        if value is None and default is None:
            return None
        if isinstance(value, bool):
            raise TypeError(f"expected a number, got {value!r}")
        # yaml reads 1e-4 (no dot) as a string
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        if default and all(isinstance(d, str) for d in default):
            return [str(v) for v in value]
        return list(value)
    raise TypeError(f"cannot set {name} from {value!r}")


def _positive(errors: list[str], key: str, value) -> None:
    if not (isinstance(value, (int, float)) and value > 0):
        errors.append(f"{key} must be > 0, got {value!r}")


def _at_least(errors: list[str], key: str, value, lo: int) -> None:
    if not (isinstance(value, int) and value >= lo):
        errors.append(f"{key} must be an integer >= {lo}, got {value!r}")


def _sizes(errors: list[str], key: str, values, lo: int, hi: Optional[int] = None) -> None:
    if not values:
        errors.append(f"{key} must not be empty")
        return
    bad = [
        v
        for v in values
        if isinstance(v, bool) or not isinstance(v, int) or v < lo or (hi and v > hi)
    ]
    if bad:
        bound = f"in [{lo}, {hi}]" if hi else f">= {lo}"
        errors.append(f"{key} entries must be integers {bound}, got {bad}")
    elif any(b <= a for a, b in zip(values, values[1:])):
        errors.append(f"{key} must be strictly increasing, got {values}")


def parse_config_text(text: str, source: str = "<config>") -> tuple[dict, list[str]]:
    """
    Split config text into typed values.

    Returns:
        (values by key, parse errors)
    """
    values: dict[str, Any] = {}
    errors: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rhs = line.partition("=")
        key, rhs = key.strip(), rhs.strip()
        if not sep or not key:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if not rhs:
            errors.append(f"{source}:{lineno}: {key} has no value")
            continue
        if key in values:
            errors.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = yaml.safe_load(rhs)
        except yaml.YAMLError as e:
            errors.append(f"{source}:{lineno}: cannot parse value of {key}: {e}")
    return values, errors


def load_config(
    source: Union[str, Path, None] = None,
    text: Optional[str] = None,
    out: Optional[str] = None,
    seed_offset: Optional[int] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """
    Read, override, validate and resolve a configuration.

    Args:
        source: Config file path (omit to start from defaults)
        text: Config text, used instead of reading source
        out: Override of the output directory
        seed_offset: Override of the first seed
        workers: Override of the worker count

    Returns:
        Resolved ExperimentConfig with a concrete dt

    Raises:
        ConfigError: With every problem found
    """
    if text is None:
        text = Path(source).read_text() if source is not None else ""
    values, errors = parse_config_text(text, str(source or "<config>"))
    cfg, type_errors = ExperimentConfig.from_values(values)
    errors.extend(type_errors)
    if out is not None:
        cfg.out = out
    if seed_offset is not None:
        cfg.seed_offset = seed_offset
    if workers is not None:
        cfg.workers = workers
    errors.extend(cfg.validate())
    if errors:
        raise ConfigError(errors)
    return cfg.resolved()
