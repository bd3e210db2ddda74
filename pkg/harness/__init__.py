"""
Experiment harness: configuration, seeded runs, reports and the CLI.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .experiments import (
    EXPERIMENTS,
    run_chaos,
    run_generator_check,
    run_mfg,
    run_nash,
    run_sensitivity,
    run_spde_solve,
    run_tagged_chaos,
)
from .parallel import ordered_map
from .reports import ChaosReport, RunReport, SlopeFit, fit_loglog_slope, write_outputs

__all__ = [
    # Configuration
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    # Experiments
    "EXPERIMENTS",
    "run_chaos",
    "run_tagged_chaos",
    "run_generator_check",
    "run_sensitivity",
    "run_spde_solve",
    "run_mfg",
    "run_nash",
    # Reports
    "ChaosReport",
    "RunReport",
    "SlopeFit",
    "fit_loglog_slope",
    "write_outputs",
    "ordered_map",
]
