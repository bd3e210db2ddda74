"""
CLI for running mean-field experiments.

main() returns 1 when a run fails its acceptance check and 2 for an invalid
config.
"""

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (
    run_chaos,
    run_generator_check,
    run_mfg,
    run_nash,
    run_sensitivity,
    run_spde_solve,
    run_tagged_chaos,
)
from .reports import write_outputs


def _load(args) -> ExperimentConfig:
    return load_config(
        args.config,
        out=args.out,
        seed_offset=args.seed_offset,
        workers=args.workers,
    )


def _emit(name: str, cfg: ExperimentConfig, report) -> None:
    path = write_outputs(name, cfg, report.to_dict(), report.tables())
    print(f"{name}: wrote {path} (config {cfg.content_hash()[:12]})")


def _status(ok: bool, message: str) -> int:
    if ok:
        return 0
    print(f"FAIL: {message}", file=sys.stderr)
    return 1


def _chaos_status(report) -> int:
    for name, ok in report.slope_checks().items():
        print(f"  {name}: {'skipped' if ok is None else ('ok' if ok else 'FAIL')}")
    return _status(
        report.passed(),
        f"slope of {report.acceptance!r} is not within {report.band:g} of -1",
    )


def cmd_chaos(args):
    """Propagation-of-chaos gaps over the functional gallery."""
    cfg = _load(args)
    report = run_chaos(cfg, verbose=args.verbose)
    _emit("chaos", cfg, report)
    return _chaos_status(report)


def cmd_tagged_chaos(args):
    """Tagged-player chaos gaps."""
    cfg = _load(args)
    report = run_tagged_chaos(cfg, verbose=args.verbose)
    _emit("tagged-chaos", cfg, report)
    return _chaos_status(report)


def cmd_generator_check(args):
    """Generator decomposition residuals."""
    cfg = _load(args)
    report = run_generator_check(cfg, verbose=args.verbose)
    _emit("generator-check", cfg, report)
    print(f"  max residual {report.results['max_residual']:.3e}")
    return _status(report.results["passed"], "generator residual above tolerance")


def cmd_sensitivity(args):
    """Sensitivity solves against finite-difference oracles."""
    cfg = _load(args)
    report = run_sensitivity(cfg, verbose=args.verbose)
    _emit("sensitivity", cfg, report)
    print(f"  xi gap {report.results['max_xi_gap']:.3e}")
    return 0


def cmd_spde_solve(args):
    """SPDE solves along seeded common-noise paths."""
    cfg = _load(args)
    report = run_spde_solve(cfg, verbose=args.verbose)
    _emit("spde-solve", cfg, report)
    print(f"  max mass error {report.results['max_mass_error']:.3e}")
    return 0


def cmd_mfg_fixed_point(args):
    """MFG consistency fixed point."""
    cfg = _load(args)
    report = run_mfg(cfg, verbose=args.verbose)
    _emit("mfg-fixed-point", cfg, report)
    print(f"  converged: {report.results['converged']}")
    return _status(report.results["converged"], "fixed point did not converge")


def cmd_nash(args):
    """ε-Nash estimate of the configured policy."""
    cfg = _load(args)
    report = run_nash(cfg, verbose=args.verbose)
    _emit("nash", cfg, report)
    for row in report.results["rows"]:
        print(f"  N={row['n']}: epsilon {row['epsilon']:.3e} (upper {row['ci_high']:.3e})")
    results = report.results
    return _status(
        results["passed"],
        f"bounds decreasing {results['upper_bounds_decreasing']}, "
        f"slope within band {results['slope_ok']}",
    )


COMMANDS = {
    "chaos": (cmd_chaos, "Propagation of chaos: |E F(mu_T^N) - E F(mu_T)| vs N"),
    "tagged-chaos": (cmd_tagged_chaos, "Tagged-player propagation of chaos"),
    "generator-check": (cmd_generator_check, "A_N = Lambda_lim + Lambda_corr / N residuals"),
    "sensitivity": (cmd_sensitivity, "Variational derivatives vs finite differences"),
    "spde-solve": (cmd_spde_solve, "Solve the SPDE along seeded common-noise paths"),
    "mfg-fixed-point": (cmd_mfg_fixed_point, "MFG consistency fixed point"),
    "nash": (cmd_nash, "epsilon-Nash estimate against a deviation family"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Mean-field games with common noise: numerical experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="Config file (key = value lines)")
        sub.add_argument("--out", help="Output directory (overrides the config)")
        sub.add_argument("--seed-offset", type=int, help="First seed (overrides the config)")
        sub.add_argument("--workers", type=int, help="Worker processes (overrides the config)")
        sub.add_argument("--verbose", action="store_true", help="Print progress")
        sub.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
