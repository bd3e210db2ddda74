"""
Seeded experiments behind the CLI subcommands.

Each run_* function takes a resolved ExperimentConfig and returns a report
object with to_dict() and tables(). Per-seed work happens in module-level
functions so it can be shipped to worker processes; seeds are reduced in
seed order, so the worker count never changes the results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from meanfield.generators import (
    apply_AN_fd,
    apply_lambda_corr,
    apply_lambda_lim,
    linear,
)
from meanfield.grid import EmpiricalMeasure, Grid1D, GridMeasure
from meanfield.mfg.fixed_point import (
    measure_feature_projection,
    mfg_fixed_point_deterministic,
    mfg_fixed_point_per_path,
)
from meanfield.mfg.hjb import hjb_residual
from meanfield.mfg.nash import (
    COUPLED_LABEL,
    ShiftedPolicy,
    default_deviation_family,
    nash_seed_coupled_gains,
    parse_deviation,
    summarize_gains,
)
from meanfield.model import ModelCoefficients
from meanfield.moments import MOMENT_GALLERY, get_moment
from meanfield.particles import (
    InitialLaw,
    Smoothing,
    generate_noise,
    simulate_ensemble,
    simulate_limit_ensemble,
    simulate_tagged_pair,
)
from meanfield.policies import ConstantPolicy, LinearFeedbackPolicy, ZeroPolicy
from meanfield.rng import CONFIGURATION_STREAM, stream
from meanfield.sensitivity import (
    dual_norm,
    eta_fd_oracle,
    relative_l1_gap,
    solve_eta,
    solve_xi,
    xi_fd_oracle,
)
from meanfield.spde import solve_spde

from .config import ExperimentConfig
from .parallel import ordered_map
from .reports import ChaosReport, RunReport, fit_loglog_slope, summarize_gaps

CHAOS_BAND = 0.3
TAGGED_BAND = 0.4
NASH_SLOPE_MAX = -0.5
SPDE_MASS_TOL = 1e-6
SPDE_NEGATIVE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Setup:
    """Objects every experiment derives from its config."""

    coeffs: ModelCoefficients
    grid: Grid1D
    law: InitialLaw
    v0: GridMeasure
    dt: float
    n_steps: int
    smoothing: Smoothing


def prepare(cfg: ExperimentConfig) -> Setup:
    grid = cfg.build_grid()
    return Setup(
        coeffs=cfg.build_model(),
        grid=grid,
        law=cfg.initial_law(),
        v0=cfg.initial_density(grid),
        dt=float(cfg.dt),
        n_steps=cfg.n_steps,
        smoothing=Smoothing(grid, cfg.bandwidth),
    )


def build_policy(cfg: ExperimentConfig, setup: Setup, verbose: bool = False):
    """
    The crowd policy u_com named by policy.kind.

    "mfg" solves the consistency loop once: the classical fixed point when
    there is no common noise, otherwise the per-path loop on W ≡ 0.
    """
    lo, hi = setup.coeffs.u_box
    if cfg.policy_kind == "zero":
        return ZeroPolicy()
    if cfg.policy_kind == "constant":
        return ConstantPolicy(cfg.policy_value)
    if cfg.policy_kind == "linear":
        return LinearFeedbackPolicy(cfg.policy_value, cfg.policy_gain, lo, hi)
    result = _solve_mfg(cfg, setup, np.zeros(setup.n_steps + 1), verbose)
    if verbose:
        print(f"MFG policy: {result.status} after {len(result.residuals)} iterations")
    return result.policy


def _limit_method(cfg: ExperimentConfig) -> str:
    return "ito" if cfg.method == "both" else cfg.method


# Propagation of chaos


@dataclass(frozen=True)
class TaggedFunctional:
    """
    Test function F(x, μ) of the tagged position and the crowd measure.

    kind is "x", "x^2", "x*m1" or "mu" (then moment names a gallery moment
    and F(x, μ) = F(μ)).
    """

    name: str
    kind: str
    moment: str = ""

    def __call__(self, x: float, mu) -> float:
        if self.kind == "x":
            return float(x)
        if self.kind == "x^2":
            return float(x) ** 2
        if self.kind == "x*m1":
            return float(x) * mu.moment(1)
        return get_moment(self.moment).value(mu)

    def finite_sample_bias(self, x: float, mu, n: int, exchangeable: bool) -> float:
        """
        E[F(x, μ̂_n)] − F(x, μ) for μ̂_n made of the atom x and n − 1 draws from μ.

        With exchangeable=True the tagged atom is itself a draw from μ and
        the "mu" kind uses the unconditional correction, so a tagged run with
        u_ind = u_com reproduces the plain chaos numbers.
        """
        if self.kind in ("x", "x^2"):
            return 0.0
        if self.kind == "x*m1":
            return float(x) * (float(x) - mu.moment(1)) / n
        F = get_moment(self.moment)
        return F.finite_sample_bias(mu, n, None if exchangeable else float(x))


def parse_tagged_functional(name: str) -> TaggedFunctional:
    """Parse "x", "x^2", "x*m1" or "mu:<moment>"."""
    if name in ("x", "x^2", "x*m1"):
        return TaggedFunctional(name, name)
    kind, sep, moment = name.partition(":")
    if kind == "mu" and sep and moment in MOMENT_GALLERY:
        return TaggedFunctional(name, "mu", moment)
    raise ValueError(
        f"Unknown tagged functional {name!r}; use x, x^2, x*m1 or mu:<moment> "
        f"with a moment in {sorted(MOMENT_GALLERY)}"
    )


def _limit_path(cfg: ExperimentConfig, setup: Setup, policy, noise):
    return solve_spde(
        setup.coeffs,
        policy,
        setup.v0,
        noise.W_path,
        setup.dt,
        _limit_method(cfg),
        milstein=cfg.milstein,
    )


def _chaos_seed(task: tuple) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-seed F(μ^N_T) and its coupled limit counterpart for every N level.

    The counterpart is F(ν^N_T) − bias_N(F), where ν^N are N McKean particles
    on the same x0, B and W reading the SPDE solution and bias_N is the exact
    finite-sample bias of F under μ_T. Its conditional mean given W is F(μ_T).
    """
    seed, cfg, setup, policy = task
    functionals = [get_moment(name) for name in cfg.functionals]
    noise = generate_noise(seed, setup.n_steps, setup.dt, max(cfg.n_list))
    path = _limit_path(cfg, setup, policy, noise)
    terminal = path.terminal
    shape = (len(cfg.n_list), len(functionals))
    particles, limit = np.empty(shape), np.empty(shape)
    for a, n in enumerate(cfg.n_list):
        sub = noise.subset(n)
        trajectory = simulate_ensemble(
            setup.coeffs, policy, n, sub, setup.law, setup.smoothing
        )
        coupled = simulate_limit_ensemble(
            setup.coeffs, policy, policy, n, path.slices, sub, setup.law
        )
        mu = EmpiricalMeasure(trajectory.positions[-1])
        nu = EmpiricalMeasure(coupled.positions[-1])
        particles[a] = [F.value(mu) for F in functionals]
        limit[a] = [F.value(nu) - F.finite_sample_bias(terminal, n) for F in functionals]
    return particles, limit


def _acceptance(name: str, names: list[str]) -> Optional[str]:
    return name if name and name in names else None


def run_chaos(cfg: ExperimentConfig, verbose: bool = False) -> ChaosReport:
    """
    Coupled estimate of E F(μ_T^N) − E F(μ_T) over the functional gallery.

    Per seed, every N level and the SPDE share one W path, and the
    idiosyncratic rows are nested across N levels.
    """
    setup = prepare(cfg)
    policy = build_policy(cfg, setup, verbose)
    tasks = [(seed, cfg, setup, policy) for seed in cfg.seed_list]
    out = ordered_map(_chaos_seed, tasks, cfg.workers, verbose, desc="chaos seeds")
    particles = np.stack([p for p, _ in out])
    limit = np.stack([q for _, q in out])
    report = summarize_gaps(
        "chaos",
        cfg.functionals,
        cfg.n_list,
        particles,
        limit,
        band=CHAOS_BAND,
        acceptance=_acceptance(cfg.chaos_acceptance, cfg.functionals),
    )
    if verbose:
        for name, fit in report.slopes.items():
            slope = f"{fit.slope:.3f}" if fit.fitted else "skipped"
            print(f"  {name}: slope {slope}")
    return report


def _tagged_seed(task: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Tagged analogue of _chaos_seed; McKean particle 0 follows u_ind."""
    seed, cfg, setup, u_ind, u_com = task
    functionals = [parse_tagged_functional(name) for name in cfg.tagged_functionals]
    noise = generate_noise(seed, setup.n_steps, setup.dt, max(cfg.n_list))
    path = _limit_path(cfg, setup, u_com, noise)
    terminal = path.terminal
    exchangeable = u_ind is u_com
    shape = (len(cfg.n_list), len(functionals))
    particles, limit = np.empty(shape), np.empty(shape)
    for a, n in enumerate(cfg.n_list):
        sub = noise.subset(n)
        trajectory, _ = simulate_tagged_pair(
            setup.coeffs, u_ind, u_com, n, sub, setup.law, setup.smoothing
        )
        coupled = simulate_limit_ensemble(
            setup.coeffs, u_ind, u_com, n, path.slices, sub, setup.law
        )
        final = trajectory.positions[-1]
        mu = EmpiricalMeasure(final)
        particles[a] = [F(final[0], mu) for F in functionals]
        y = coupled.positions[-1]
        nu = EmpiricalMeasure(y)
        limit[a] = [
            F(y[0], nu) - F.finite_sample_bias(y[0], terminal, n, exchangeable)
            for F in functionals
        ]
    return particles, limit


def run_tagged_chaos(cfg: ExperimentConfig, verbose: bool = False) -> ChaosReport:
    """
    Tagged-player version of run_chaos on functionals F(X¹_T, μ_T).

    Player 1 uses u_com shifted by tagged.shift; a zero shift passes u_com
    itself, which reproduces run_chaos on the mu:<moment> functionals.
    """
    setup = prepare(cfg)
    u_com = build_policy(cfg, setup, verbose)
    if cfg.tagged_shift == 0.0:
        u_ind = u_com
    else:
        u_ind = ShiftedPolicy(u_com, cfg.tagged_shift, *setup.coeffs.u_box)
    tasks = [(seed, cfg, setup, u_ind, u_com) for seed in cfg.seed_list]
    out = ordered_map(_tagged_seed, tasks, cfg.workers, verbose, desc="tagged seeds")
    particles = np.stack([p for p, _ in out])
    limit = np.stack([q for _, q in out])
    return summarize_gaps(
        "tagged-chaos",
        cfg.tagged_functionals,
        cfg.n_list,
        particles,
        limit,
        band=TAGGED_BAND,
        acceptance=_acceptance(cfg.tagged_acceptance, cfg.tagged_functionals),
    )


# Generator decomposition


def _generator_case(task: tuple) -> dict:
    name, n, configurations, coeffs, policy = task
    F = linear(get_moment(name))
    an, lim, corr, residual = [], [], [], []
    for positions in configurations:
        mu = EmpiricalMeasure(positions)
        a = apply_AN_fd(coeffs, policy, F, positions)
        lam = apply_lambda_lim(coeffs, policy, F, mu)
        c = apply_lambda_corr(coeffs, F, mu)
        an.append(a)
        lim.append(lam)
        corr.append(c)
        residual.append(abs(a - (lam + c / n)))
    return {
        "functional": name,
        "n": int(n),
        "configurations": len(configurations),
        "max_residual": float(np.max(residual)),
        "mean_residual": float(np.mean(residual)),
        "mean_AN": float(np.mean(an)),
        "mean_lambda_lim": float(np.mean(lim)),
        "mean_lambda_corr": float(np.mean(corr)),
    }


def run_generator_check(cfg: ExperimentConfig, verbose: bool = False) -> RunReport:
    """
    Decomposition residual |A_N F − Λ_lim F − Λ_corr F / N| over the gallery.

    Configurations are drawn from the configuration stream of seed_offset as
    N(x0.mean, generator.spread²) positions, generator.n_configs per N.
    """
    setup = prepare(cfg)
    policy = build_policy(cfg, setup, verbose)
    rng = stream(cfg.seed_offset, CONFIGURATION_STREAM)
    configurations = {
        n: cfg.x0_mean
        + cfg.generator_spread * rng.standard_normal((cfg.generator_n_configs, n))
        for n in cfg.generator_n_list
    }
    tasks = [
        (name, n, configurations[n], setup.coeffs, policy)
        for name in cfg.functionals
        for n in cfg.generator_n_list
    ]
    rows = ordered_map(_generator_case, tasks, cfg.workers, verbose, desc="cases")
    worst = max(row["max_residual"] for row in rows)
    results = {
        "cases": rows,
        "max_residual": worst,
        "tolerance": cfg.generator_tol,
        "passed": bool(worst <= cfg.generator_tol),
    }
    if verbose:
        print(f"Generator check: max residual {worst:.3e} (tol {cfg.generator_tol:g})")
    return RunReport("generator-check", results, {"residuals": pd.DataFrame(rows)})


# Sensitivity


def _sensitivity_seed(task: tuple) -> tuple[dict, Optional[pd.DataFrame]]:
    seed, cfg, setup, policy, keep = task
    coeffs, v0, dt = setup.coeffs, setup.v0, setup.dt
    bw, h = cfg.bandwidth, cfg.sensitivity_h_bump
    x0, x1, x2 = cfg.sensitivity_x0, cfg.sensitivity_x1, cfg.sensitivity_x2
    W = generate_noise(seed, setup.n_steps, dt, 1).W_path

    base = solve_spde(coeffs, policy, v0, W, dt, "characteristics")
    xi = solve_xi(coeffs, policy, base, x0, bw)
    oracle = xi_fd_oracle(coeffs, policy, v0, W, dt, x0, bw, h)
    oracle_half = xi_fd_oracle(coeffs, policy, v0, W, dt, x0, bw, 0.5 * h)

    xi1 = solve_xi(coeffs, policy, base, x1, bw)
    xi2 = solve_xi(coeffs, policy, base, x2, bw)
    eta12 = solve_eta(coeffs, policy, base, x1, x2, bw, xi1=xi1, xi2=xi2)
    eta21 = solve_eta(coeffs, policy, base, x2, x1, bw, xi1=xi2, xi2=xi1)
    eta_oracle = eta_fd_oracle(coeffs, policy, v0, W, dt, x1, x2, bw, h)

    xi_T, eta_T = xi.xi[-1], eta12[-1]
    row = {
        "seed": seed,
        "W_T": float(W[-1]),
        "xi_gap": relative_l1_gap(xi_T, oracle[-1]),
        "xi_gap_half_bump": relative_l1_gap(xi_T, oracle_half[-1]),
        "xi_mass_drift": float(np.max(np.abs(xi.masses() - xi.masses()[0]))),
        "xi_mean": xi_T.moment(1),
        "oracle_mean": oracle[-1].moment(1),
        "xi_dual_c0": dual_norm(xi_T, 0),
        "xi_dual_c1": dual_norm(xi_T, 1),
        "xi_dual_c2": dual_norm(xi_T, 2),
        "eta_symmetry": eta_T.l1_distance(eta21[-1]),
        "eta_l1": eta_T.total_variation(),
        "eta_max_mass": float(max(abs(e.mass()) for e in eta12)),
        "eta_oracle_l1": eta_oracle[-1].total_variation(),
        "eta_gap": relative_l1_gap(eta_T, eta_oracle[-1]),
        "eta_abs_gap": eta_T.l1_distance(eta_oracle[-1]),
    }
    frame = None
    if keep:
        frame = xi.to_frame()
        frame.insert(0, "seed", seed)
    return row, frame


def run_sensitivity(cfg: ExperimentConfig, verbose: bool = False) -> RunReport:
    """
    Linearized ξ and η against their central-difference oracles, per W path.

    Runs on the characteristics scheme, so σ_com must be positive on the grid.
    """
    setup = prepare(cfg)
    policy = build_policy(cfg, setup, verbose)
    tasks = [
        (seed, cfg, setup, policy, i == 0) for i, seed in enumerate(cfg.seed_list)
    ]
    out = ordered_map(_sensitivity_seed, tasks, cfg.workers, verbose, desc="paths")
    rows = [row for row, _ in out]
    frame = out[0][1]
    results = {
        "paths": rows,
        "bump": {
            "x0": cfg.sensitivity_x0,
            "x1": cfg.sensitivity_x1,
            "x2": cfg.sensitivity_x2,
            "bandwidth": cfg.bandwidth,
            "h_bump": cfg.sensitivity_h_bump,
        },
        "max_xi_gap": max(r["xi_gap"] for r in rows),
        "max_eta_gap": max(r["eta_gap"] for r in rows),
        "max_eta_symmetry": max(r["eta_symmetry"] for r in rows),
        "max_xi_mass_drift": max(r["xi_mass_drift"] for r in rows),
        "measure_free_drift": setup.coeffs.measure_free,
    }
    if verbose:
        print(
            f"Sensitivity: xi gap {results['max_xi_gap']:.3e}, "
            f"eta gap {results['max_eta_gap']:.3e}"
        )
    return RunReport(
        "sensitivity", results, {"gaps": pd.DataFrame(rows), "xi_path": frame}
    )


# SPDE solves


def _closed_form_mean(cfg: ExperimentConfig, coeffs: ModelCoefficients) -> bool:
    """Whether (x, μ_T) = (x, μ_0) + a·W_T holds for this model and policy."""
    p = coeffs.params
    return (
        coeffs.name == "ou-common"
        and p.get("coupling") == 1.0
        and p.get("gamma") == 0.0
        and cfg.policy_kind == "zero"
    )


def _spde_seed(task: tuple) -> tuple[list, list, Optional[pd.DataFrame]]:
    seed, cfg, setup, policy, keep = task
    coeffs, v0 = setup.coeffs, setup.v0
    W = generate_noise(seed, setup.n_steps, setup.dt, 1).W_path
    methods = ["ito", "characteristics"] if cfg.method == "both" else [cfg.method]
    oracle = _closed_form_mean(cfg, coeffs)
    rows, summaries, frames = [], [], []
    terminal = {}
    for method in methods:
        path = solve_spde(coeffs, policy, v0, W, setup.dt, method, milstein=cfg.milstein)
        masses = np.array([s.mass() for s in path.slices])
        negative = np.array([s.negative_mass() for s in path.slices])
        terminal[method] = (path.terminal.moment(1), path.terminal.moment(2))
        row = {
            "seed": seed,
            "method": method,
            "W_T": float(W[-1]),
            "m1_T": terminal[method][0],
            "m2_T": terminal[method][1],
            "max_mass_error": float(np.max(np.abs(masses - v0.mass()))),
            "max_negative_mass": float(np.max(negative)),
            "problems": path.check_probability(SPDE_MASS_TOL, SPDE_NEGATIVE_TOL),
        }
        if oracle:
            a = float(coeffs.sigma_com(np.zeros(1))[0])
            row["closed_form_gap"] = abs(row["m1_T"] - v0.moment(1) - a * W[-1])
        rows.append(row)
        for entry in path.summary():
            summaries.append({"seed": seed, "method": method, **entry})
        if keep:
            frame = path.to_frame()
            frame.insert(0, "method", method)
            frames.append(frame)
    if len(methods) == 2:
        (m1a, m2a), (m1b, m2b) = terminal["ito"], terminal["characteristics"]
        for row in rows:
            row["cross_m1_gap"] = abs(m1a - m1b)
            row["cross_m2_gap"] = abs(m2a - m2b)
    return rows, summaries, pd.concat(frames, ignore_index=True) if frames else None


def run_spde_solve(cfg: ExperimentConfig, verbose: bool = False) -> RunReport:
    """
    Solve the SPDE on one W path per seed with the configured method(s).

    method = both runs the Itô and characteristics schemes on the same path
    and reports their moment gaps at T.
    """
    setup = prepare(cfg)
    policy = build_policy(cfg, setup, verbose)
    tasks = [
        (seed, cfg, setup, policy, i == 0) for i, seed in enumerate(cfg.seed_list)
    ]
    out = ordered_map(_spde_seed, tasks, cfg.workers, verbose, desc="paths")
    rows = [row for seed_rows, _, _ in out for row in seed_rows]
    summaries = [entry for _, seed_summaries, _ in out for entry in seed_summaries]
    results = {
        "runs": rows,
        "max_mass_error": max(r["max_mass_error"] for r in rows),
        "max_negative_mass": max(r["max_negative_mass"] for r in rows),
        "probability_ok": not any(r["problems"] for r in rows),
    }
    if any("closed_form_gap" in r for r in rows):
        results["max_closed_form_gap"] = max(r["closed_form_gap"] for r in rows)
    if any("cross_m1_gap" in r for r in rows):
        results["max_cross_m1_gap"] = max(r["cross_m1_gap"] for r in rows)
        results["max_cross_m2_gap"] = max(r["cross_m2_gap"] for r in rows)
    if verbose:
        print(f"SPDE: max mass error {results['max_mass_error']:.3e}")
    return RunReport(
        "spde-solve",
        results,
        {"moments": pd.DataFrame(summaries), "density": out[0][2]},
    )


# Mean-field game


def _solve_mfg(cfg: ExperimentConfig, setup: Setup, W: np.ndarray, verbose: bool = False):
    if setup.coeffs.has_common_noise(setup.grid):
        return mfg_fixed_point_per_path(
            setup.coeffs,
            setup.v0,
            W,
            setup.dt,
            n_iter=cfg.mfg_n_iter,
            damping=cfg.mfg_damping,
            tol=cfg.mfg_tol,
            milstein=cfg.milstein,
            verbose=verbose,
        )
    return mfg_fixed_point_deterministic(
        setup.coeffs,
        setup.v0,
        setup.dt,
        setup.n_steps,
        n_iter=cfg.mfg_n_iter,
        damping=cfg.mfg_damping,
        tol=cfg.mfg_tol,
        verbose=verbose,
    )


def _mfg_seed(task: tuple):
    seed, cfg, setup = task
    W = generate_noise(seed, setup.n_steps, setup.dt, 1).W_path
    return _solve_mfg(cfg, setup, W)


def _fixed_point_summary(label, result, coeffs) -> dict:
    return {
        "path": label,
        "status": result.status,
        "iterations": len(result.residuals),
        "residuals": result.residuals,
        "final_residual": result.residuals[-1],
        "hjb_residual": hjb_residual(coeffs, result.value, result.path),
        "clamped": result.best_response.context.get("clamped", 0),
        "metadata": result.metadata,
    }


def _residual_frame(labels, results) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"path": label, "iteration": k + 1, "residual": r}
            for label, result in zip(labels, results)
            for k, r in enumerate(result.residuals)
        ]
    )


def run_mfg(cfg: ExperimentConfig, verbose: bool = False) -> RunReport:
    """
    MFG consistency loop.

    Without common noise: the classical fixed point, plus the per-path loop
    on W ≡ 0 and a bit-identity check between them. With common noise: one
    per-path fixed point per seed and, for two or more seeds, the projection
    of the per-path policies on the feature m₁(μ_t).
    """
    setup = prepare(cfg)
    coeffs = setup.coeffs
    if not coeffs.has_common_noise(setup.grid):
        det = _solve_mfg(cfg, setup, np.zeros(setup.n_steps + 1), verbose)
        flat = mfg_fixed_point_per_path(
            coeffs,
            setup.v0,
            np.zeros(setup.n_steps + 1),
            setup.dt,
            n_iter=cfg.mfg_n_iter,
            damping=cfg.mfg_damping,
            tol=cfg.mfg_tol,
        )
        identical = bool(
            np.array_equal(det.policy.u_values, flat.policy.u_values)
            and det.residuals == flat.residuals
        )
        labels, results = ["deterministic"], [det]
        payload = {
            "mode": "deterministic",
            "fixed_points": [_fixed_point_summary("deterministic", det, coeffs)],
            "per_path_zero_noise_identical": identical,
        }
    else:
        tasks = [(seed, cfg, setup) for seed in cfg.seed_list]
        results = ordered_map(_mfg_seed, tasks, cfg.workers, verbose, desc="paths")
        labels = [f"seed {seed}" for seed in cfg.seed_list]
        payload = {
            "mode": "per-path",
            "fixed_points": [
                _fixed_point_summary(label, r, coeffs) for label, r in zip(labels, results)
            ],
        }
        if len(results) >= 2:
            projection = measure_feature_projection(results)
            payload["measure_feature_projection"] = {
                "feature": "m1",
                "max_gap": projection.max_gap,
            }
    payload["converged"] = all(r.converged for r in results)
    first = results[0]
    if verbose:
        print(f"MFG: {first.status}, final residual {first.residuals[-1]:.3e}")
    return RunReport(
        "mfg-fixed-point",
        payload,
        {
            "residuals": _residual_frame(labels, results),
            "value": first.value.to_frame(),
            "policy": first.policy.to_frame(),
        },
    )


# ε-Nash


def _nash_seed(task: tuple) -> tuple[np.ndarray, np.ndarray]:
    seed, cfg, setup, u_com, deviations = task
    return nash_seed_coupled_gains(
        setup.coeffs,
        u_com,
        cfg.n_list,
        deviations,
        seed,
        setup.dt,
        setup.n_steps,
        setup.law,
        setup.smoothing,
    )


def run_nash(cfg: ExperimentConfig, verbose: bool = False) -> RunReport:
    """
    ε̂(N) of u_com against the configured deviation family.

    An empty nash.deviations list selects the default family. The headline
    rows are the coupled estimate (gain minus the frozen-crowd gain of the
    same deviation on the same noise); the raw and frozen tables are reported
    under "raw" and "frozen". The slope is fitted on log-log axes to
    max(ε̂, 0) plus the upper CI half-width of the coupled rows.
    """
    setup = prepare(cfg)
    u_com = build_policy(cfg, setup, verbose)
    if cfg.nash_deviations:
        deviations = [parse_deviation(str(text)) for text in cfg.nash_deviations]
    else:
        deviations = default_deviation_family(cfg.T)
    tasks = [(seed, cfg, setup, u_com, deviations) for seed in cfg.seed_list]
    out = ordered_map(_nash_seed, tasks, cfg.workers, verbose, desc="seeds")
    gains = np.stack([g for g, _ in out])
    frozen = np.stack([f for _, f in out])
    labels = [d.label for d in deviations]
    summary = dict(
        n_bootstrap=cfg.nash_n_bootstrap,
        bootstrap_seed=cfg.seed_offset,
        confidence=cfg.nash_confidence,
    )
    table = summarize_gains(
        gains - frozen, cfg.n_list, labels, label=COUPLED_LABEL, **summary
    )
    raw = summarize_gains(gains, cfg.n_list, labels, **summary)
    frozen_table = summarize_gains(
        frozen, cfg.n_list, labels, label="gain against the frozen crowd", **summary
    )
    fit = fit_loglog_slope(
        cfg.n_list,
        [max(row.epsilon, 0.0) + (row.ci_high - row.epsilon) for row in table.rows],
        confidence=cfg.nash_confidence,
    )
    decreasing = table.upper_bounds_decreasing()
    slope_ok = bool(fit.fitted and fit.ci_high <= NASH_SLOPE_MAX)
    results = {
        **table.to_dict(),
        "raw": raw.to_dict(),
        "frozen": frozen_table.to_dict(),
        "upper_bounds_decreasing": decreasing,
        "slope": fit,
        "slope_ok": slope_ok,
        "passed": decreasing and slope_ok,
    }
    gain_rows = [
        {
            "seed": seed,
            "n": int(n),
            "deviation": label,
            "gain": float(gains[s, a, d]),
            "frozen_gain": float(frozen[s, a, d]),
        }
        for s, seed in enumerate(cfg.seed_list)
        for a, n in enumerate(cfg.n_list)
        for d, label in enumerate(labels)
    ]
    if verbose:
        for row in table.rows:
            print(f"  N={row.n}: epsilon {row.epsilon:.3e} [{row.ci_low:.3e}, {row.ci_high:.3e}]")
    return RunReport(
        "nash",
        results,
        {
            "epsilon": table.to_frame(),
            "epsilon_raw": raw.to_frame(),
            "gains": pd.DataFrame(gain_rows),
        },
    )


EXPERIMENTS = {
    "chaos": run_chaos,
    "tagged-chaos": run_tagged_chaos,
    "generator-check": run_generator_check,
    "sensitivity": run_sensitivity,
    "spde-solve": run_spde_solve,
    "mfg-fixed-point": run_mfg,
    "nash": run_nash,
}
