"""
Problem data of the N-player game and its mean-field limit.

A model bundles the idiosyncratic and common volatilities, the control-affine
drift b = b₁(t, x, μ) + b₂(t, x, μ)·u, the running cost J and the terminal
cost V_T. Measure dependence of the drift is restricted to a finite list of
moment functionals, which keeps every variational derivative closed form.

Two models ship in the gallery:
    ou-common  σ_ind = sigma, σ_com = a, b₁ = κ(coupling·m₁(μ) − x) + γ·C(μ),
               b₂ = 1, J = r u²/2 + q u⁴ + shift, V_T = w x²/2
    var-a      same, with σ_com(x) = a0 + a1·tanh(x)

where C(μ) = ∬cos(x − y)μ(dx)μ(dy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import Grid1D, Measure
from .moments import MomentFunctional, cosine_pair, first_moment

CHECK_POINTS = np.linspace(-10.0, 10.0, 401)
STENCIL_STEP = 1e-5


class ControlBoundsError(ValueError):
    """Raised when a control value lies outside the admissible box."""
    pass


class CoefficientError(ValueError):
    """Raised when a coefficient violates its declared lower bound."""
    pass


class ModelError(ValueError):
    """Raised when a model is unknown or structurally unusable."""
    pass


# Coefficient fields


@dataclass(frozen=True)
class ConstantField:
    value: float

    def __call__(self, x) -> np.ndarray:
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class TanhField:
    """a0 + a1·tanh(x)."""

    a0: float
    a1: float

    def __call__(self, x) -> np.ndarray:
        return self.a0 + self.a1 * np.tanh(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class FunctionField:
    fn: Callable

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(x), dtype=float), x.shape).copy()


# Measure-dependent drift parts


@dataclass(frozen=True)
class MomentDrift:
    """
    Drift part depending on μ only through moments m = (F_1(μ), ..., F_J(μ)).

    Subclasses implement evaluate and, when the moments matter, gradient and
    hessian with respect to m.

    Attributes:
        moments: Moment functionals the drift reads
    """

    moments: tuple[MomentFunctional, ...] = ()

    def evaluate(self, t: float, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, t: float, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        """∂b/∂m_j with shape (len(x), J)."""
        return np.zeros((x.size, len(self.moments)))

    def hessian(self, t: float, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        """∂²b/∂m_j∂m_k with shape (len(x), J, J)."""
        n = len(self.moments)
        return np.zeros((x.size, n, n))

    @property
    def measure_free(self) -> bool:
        return not self.moments

    def moment_values(self, mu: Optional[Measure]) -> np.ndarray:
        if not self.moments:
            return np.zeros(0)
        if mu is None:
            raise ModelError("Measure-dependent drift evaluated without a measure")
        return np.array([F.value(mu) for F in self.moments])

    def __call__(self, t: float, x, mu: Optional[Measure]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        values = self.evaluate(t, x.reshape(-1), self.moment_values(mu))
        return np.broadcast_to(values, x.reshape(-1).shape).reshape(x.shape).copy()

    def variational_derivative(self, t: float, x, mu: Measure, r) -> np.ndarray:
        """δb(t, x, μ)/δμ(r) as a (len(x), len(r)) matrix."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.measure_free:
            return np.zeros((x.size, r.size))
        m = self.moment_values(mu)
        vd1 = np.stack([F.vd1(mu, r) for F in self.moments])
        return self.gradient(t, x, m) @ vd1

    def first_variation(self, t: float, x, mu: Measure, nu: Measure) -> np.ndarray:
        """∫ δb(t, x, μ)/δμ(r) ν(dr) for every x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.measure_free:
            return np.zeros(x.size)
        m = self.moment_values(mu)
        dm = np.array([F.first_variation(mu, nu) for F in self.moments])
        return self.gradient(t, x, m) @ dm

    def second_variation(
        self, t: float, x, mu: Measure, nu1: Measure, nu2: Measure
    ) -> np.ndarray:
        """∬ δ²b(t, x, μ)/δμ(r)δμ(s) ν1(dr) ν2(ds) for every x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.measure_free:
            return np.zeros(x.size)
        m = self.moment_values(mu)
        dm1 = np.array([F.first_variation(mu, nu1) for F in self.moments])
        dm2 = np.array([F.first_variation(mu, nu2) for F in self.moments])
        d2m = np.array([F.second_variation(nu1, nu2) for F in self.moments])
        hess = self.hessian(t, x, m)
        return np.einsum("ijk,j,k->i", hess, dm1, dm2) + self.gradient(t, x, m) @ d2m


@dataclass(frozen=True)
class AffineMomentDrift(MomentDrift):
    """
    b(t, x, μ) = constant + slope·x + Σ_j weights_j·m_j(μ).

    Attributes:
        constant: Additive constant
        slope: Coefficient of x
        weights: One weight per moment
    """

    constant: float = 0.0
    slope: float = 0.0
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.weights) != len(self.moments):
            raise ModelError(
                f"AffineMomentDrift has {len(self.moments)} moments "
                f"but {len(self.weights)} weights"
            )

    def evaluate(self, t, x, m):
        out = self.constant + self.slope * x
        if self.moments:
            out = out + float(np.dot(self.weights, m))
        return out

    def gradient(self, t, x, m):
        return np.tile(np.asarray(self.weights, dtype=float), (x.size, 1))


@dataclass(frozen=True)
class FunctionMomentDrift(MomentDrift):
    """
    Drift given by callables fn(t, x, m), grad(t, x, m), hess(t, x, m).

    grad and hess return arrays shaped (len(x), J) and (len(x), J, J); when
    omitted they are taken to be zero.
    """

    fn: Optional[Callable] = None
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None

    def evaluate(self, t, x, m):
        return np.asarray(self.fn(t, x, m), dtype=float)

    def gradient(self, t, x, m):
        if self.grad is None:
            return super().gradient(t, x, m)
        return np.asarray(self.grad(t, x, m), dtype=float).reshape(
            x.size, len(self.moments)
        )

    def hessian(self, t, x, m):
        if self.hess is None:
            return super().hessian(t, x, m)
        n = len(self.moments)
        return np.asarray(self.hess(t, x, m), dtype=float).reshape(x.size, n, n)


# Costs


@dataclass(frozen=True)
class ControlCost:
    """
    Control part of the running cost: weight·u²/2 + quartic·u⁴.

    Attributes:
        weight: Quadratic weight r > 0 (or ≥ 0 when quartic > 0)
        quartic: Quartic coefficient q ≥ 0
    """

    weight: float = 1.0
    quartic: float = 0.0

    @property
    def is_quadratic(self) -> bool:
        return self.quartic == 0.0

    def value(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return 0.5 * self.weight * u * u + self.quartic * u**4

    def du(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.weight * u + 4.0 * self.quartic * u**3

    def check_convex(self, u_box: tuple[float, float], n_samples: int = 201) -> None:
        """Strict convexity on u_box via second differences."""
        u = np.linspace(u_box[0], u_box[1], n_samples)
        second = np.diff(self.value(u), 2)
        if np.any(second <= 0.0):
            raise ModelError(
                f"Control cost is not strictly convex on {u_box} "
                f"(weight={self.weight}, quartic={self.quartic})"
            )


@dataclass(frozen=True)
class RunningCost:
    """
    J(t, x, μ, u) = state(t, x, μ) + control(u) + shift.

    Attributes:
        control: Control part
        state: Optional state part (t, x, μ) -> array
        shift: Constant added everywhere
    """

    control: ControlCost = field(default_factory=ControlCost)
    state: Optional[Callable] = None
    shift: float = 0.0

    def __call__(self, t: float, x, mu: Optional[Measure], u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.control.value(u) + self.shift
        if self.state is not None:
            out = out + self.state(t, x, mu)
        return np.broadcast_to(out, np.broadcast(x, u).shape).astype(float)


@dataclass(frozen=True)
class TerminalCost:
    """V_T(x, μ) = weight·x²/2."""

    weight: float = 1.0

    def __call__(self, x, mu: Optional[Measure] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.weight * x * x


# Model


@dataclass(frozen=True)
class ModelCoefficients:
    """
    Coefficients, costs and control box of a mean-field model.

    Lower bounds are declared and checked on a fixed set of check points at
    construction; solvers recheck them on their own grid with check_grid.

    Attributes:
        sigma_ind: Idiosyncratic volatility x -> σ_ind(x)
        sigma_com: Common-noise volatility x -> A(x)
        b1: Control-free drift part
        b2: Control multiplier
        running_cost: J
        terminal_cost: V_T
        u_box: Admissible control interval
        sigma_ind_min: Declared lower bound for σ_ind (0 disables)
        sigma_com_min: Declared lower bound for σ_com (0 disables)
        name: Gallery name
        params: Parameters the model was built from
    """

    sigma_ind: Callable
    sigma_com: Callable
    b1: MomentDrift
    b2: MomentDrift
    running_cost: RunningCost = field(default_factory=RunningCost)
    terminal_cost: Callable = field(default_factory=TerminalCost)
    u_box: tuple[float, float] = (-10.0, 10.0)
    sigma_ind_min: float = 0.0
    sigma_com_min: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.u_box
        if not lo < hi:
            raise ModelError(f"u_box must satisfy lo < hi, got {self.u_box}")
        self.running_cost.control.check_convex(self.u_box)
        self._check_bounds(CHECK_POINTS, "check points")

    def _check_bounds(self, x: np.ndarray, where: str) -> None:
        for label, fn, bound in (
            ("sigma_ind", self.sigma_ind, self.sigma_ind_min),
            ("sigma_com", self.sigma_com, self.sigma_com_min),
        ):
            values = np.asarray(fn(x), dtype=float)
            if not np.all(np.isfinite(values)):
                raise CoefficientError(f"{label} is not finite on the {where}")
            if bound > 0.0 and values.min() < bound * (1.0 - 1e-12):
                raise CoefficientError(
                    f"{label} drops to {values.min():.6g} on the {where}, "
                    f"below its declared lower bound {bound}"
                )

    def check_grid(self, grid: Grid1D) -> None:
        self._check_bounds(grid.nodes, f"grid [{grid.x_min}, {grid.x_max}]")

    @property
    def moments(self) -> tuple[MomentFunctional, ...]:
        return self.b1.moments + self.b2.moments

    @property
    def measure_free(self) -> bool:
        return self.b1.measure_free and self.b2.measure_free

    def has_common_noise(self, grid: Optional[Grid1D] = None) -> bool:
        x = CHECK_POINTS if grid is None else grid.nodes
        return bool(np.any(np.asarray(self.sigma_com(x)) != 0.0))

    def sigma_total2(self, x) -> np.ndarray:
        return np.asarray(self.sigma_ind(x)) ** 2 + np.asarray(self.sigma_com(x)) ** 2

    def sigma_com_prime(self, x) -> np.ndarray:
        """A′(x) by a central stencil."""
        x = np.asarray(x, dtype=float)
        return (self.sigma_com(x + STENCIL_STEP) - self.sigma_com(x - STENCIL_STEP)) / (
            2.0 * STENCIL_STEP
        )

    def check_controls(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = self.u_box
        outside = (u < lo) | (u > hi) | ~np.isfinite(u)
        if np.any(outside):
            bad = u[outside].reshape(-1)[0]
            raise ControlBoundsError(
                f"{np.count_nonzero(outside)} control values outside u_box "
                f"[{lo}, {hi}] (e.g. {bad})"
            )
        return u

    def drift(self, t: float, x, mu: Optional[Measure], u) -> np.ndarray:
        u = self.check_controls(u)
        return self.b1(t, x, mu) + self.b2(t, x, mu) * u

    def drift_first_variation(self, t, x, mu, nu, u) -> np.ndarray:
        """∫ δb/δμ(r) ν(dr) with the control held fixed."""
        return self.b1.first_variation(t, x, mu, nu) + u * self.b2.first_variation(
            t, x, mu, nu
        )

    def drift_second_variation(self, t, x, mu, nu1, nu2, u) -> np.ndarray:
        return self.b1.second_variation(
            t, x, mu, nu1, nu2
        ) + u * self.b2.second_variation(t, x, mu, nu1, nu2)

    def stratonovich_drift(self, t: float, x, mu: Optional[Measure], u) -> np.ndarray:
        """b − ½AA′, the drift of the Stratonovich form of the dynamics."""
        x = np.asarray(x, dtype=float)
        return self.drift(t, x, mu, u) - 0.5 * self.sigma_com(x) * self.sigma_com_prime(x)


def drift(coeffs: ModelCoefficients, t: float, x, mu: Optional[Measure], u):
    """b₁(t, x, μ) + b₂(t, x, μ)·u; raises ControlBoundsError outside u_box."""
    return coeffs.drift(t, x, mu, u)


# Gallery

MODEL_DEFAULTS = {
    "ou-common": {
        "a": 0.5,
        "sigma": 1.0,
        "kappa": 1.0,
        "coupling": 1.0,
        "gamma": 0.0,
        "control_weight": 1.0,
        "quartic": 0.0,
        "cost_shift": 0.0,
        "terminal_weight": 1.0,
        "u_max": 10.0,
    },
    "var-a": {
        "a0": 1.0,
        "a1": 0.5,
        "sigma": 1.0,
        "kappa": 1.0,
        "coupling": 1.0,
        "gamma": 0.0,
        "control_weight": 1.0,
        "quartic": 0.0,
        "cost_shift": 0.0,
        "terminal_weight": 1.0,
        "u_max": 10.0,
    },
}


def _mean_field_drift(p: dict) -> AffineMomentDrift:
    moments, weights = [first_moment()], [p["kappa"] * p["coupling"]]
    if p["gamma"] != 0.0:
        moments.append(cosine_pair())
        weights.append(p["gamma"])
    if all(w == 0.0 for w in weights):
        return AffineMomentDrift(slope=-p["kappa"])
    return AffineMomentDrift(
        moments=tuple(moments), slope=-p["kappa"], weights=tuple(weights)
    )


def build_model(name: str, **params) -> ModelCoefficients:
    """
    Build a gallery model by name.

    Args:
        name: "ou-common" or "var-a"
        **params: Overrides of MODEL_DEFAULTS[name]

    Returns:
        ModelCoefficients

    Raises:
        ModelError: Unknown model or parameter, or invalid parameter values
        CoefficientError: If σ_com can reach zero or below for var-a
    """
    if name not in MODEL_DEFAULTS:
        raise ModelError(f"Unknown model {name!r}; available: {sorted(MODEL_DEFAULTS)}")
    unknown = sorted(set(params) - set(MODEL_DEFAULTS[name]))
    if unknown:
        raise ModelError(f"Unknown parameters for {name}: {unknown}")
    p = {**MODEL_DEFAULTS[name], **{k: float(v) for k, v in params.items()}}

    if p["sigma"] < 0.0 or p["u_max"] <= 0.0:
        raise ModelError(f"{name} needs sigma >= 0 and u_max > 0, got {p}")

    if name == "ou-common":
        if p["a"] < 0.0:
            raise ModelError(f"ou-common needs a >= 0, got {p['a']}")
        sigma_com, sigma_com_min = ConstantField(p["a"]), p["a"]
    else:
        sigma_com_min = p["a0"] - abs(p["a1"])
        if sigma_com_min <= 0.0:
            raise CoefficientError(
                f"var-a needs a0 > |a1| so that sigma_com stays positive, "
                f"got a0={p['a0']}, a1={p['a1']}"
            )
        sigma_com = TanhField(p["a0"], p["a1"])

    return ModelCoefficients(
        sigma_ind=ConstantField(p["sigma"]),
        sigma_com=sigma_com,
        b1=_mean_field_drift(p),
        b2=AffineMomentDrift(constant=1.0),
        running_cost=RunningCost(
            ControlCost(p["control_weight"], p["quartic"]), shift=p["cost_shift"]
        ),
        terminal_cost=TerminalCost(p["terminal_weight"]),
        u_box=(-p["u_max"], p["u_max"]),
        sigma_ind_min=p["sigma"],
        sigma_com_min=sigma_com_min,
        name=name,
        params=p,
    )
