"""
Result aggregation and emission.

Every experiment writes into its output directory:

    report.json   resolved config, content hash and results (deterministic)
    *.csv         long-format tables
    meta.json     timestamp, library versions and runtime settings

Only meta.json changes between two runs of the same config and seeds.
"""

from __future__ import annotations

import dataclasses
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import scipy
from scipy import stats

from .config import ExperimentConfig

MAX_RELATIVE_ERROR = 0.3
MIN_SLOPE_POINTS = 4
FLOAT_FORMAT = "%.17g"


def to_builtin(obj: Any) -> Any:
    """Convert numpy values, tuples and dataclasses into JSON-ready objects."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_builtin(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_builtin(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


# Slope fitting


@dataclass
class SlopeFit:
    """
    Ordinary least squares of log(gap) on log(N).

    Attributes:
        slope: Fitted exponent, None when too few points qualify
        intercept: Fitted log-constant
        ci_low: Lower end of the slope confidence interval
        ci_high: Upper end of the slope confidence interval
        used: N values entering the fit
        excluded: N values left out, with the reason
        reason: Why no slope was fitted
    """

    slope: Optional[float] = None
    intercept: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    used: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    reason: Optional[str] = None

    @property
    def fitted(self) -> bool:
        return self.slope is not None

    def within(self, target: float, tolerance: float) -> Optional[bool]:
        """Whether the whole CI lies in target ± tolerance; None without a fit."""
        if not self.fitted:
            return None
        return target - tolerance <= self.ci_low and self.ci_high <= target + tolerance


def fit_loglog_slope(
    n_values: Sequence[int],
    gaps: Sequence[float],
    stderrs: Optional[Sequence[float]] = None,
    confidence: float = 0.95,
    min_points: int = MIN_SLOPE_POINTS,
    max_relative_error: float = MAX_RELATIVE_ERROR,
) -> SlopeFit:
    """
    Fit log(gap) = intercept + slope·log(N) with a t-based CI.

    Points with a non-positive gap, or whose standard error is at least
    max_relative_error of the gap, are excluded and listed.

    Args:
        n_values: Particle counts
        gaps: Gap estimates per count
        stderrs: Monte Carlo standard errors (None skips the error filter)
        confidence: CI level
        min_points: Smallest number of points that gets a slope
        max_relative_error: Error filter threshold

    Returns:
        SlopeFit
    """
    fit = SlopeFit()
    xs, ys = [], []
    for i, (n, gap) in enumerate(zip(n_values, gaps)):
        if gap is None or not np.isfinite(gap) or gap <= 0.0:
            fit.excluded.append({"n": int(n), "reason": "gap not positive"})
            continue
        if stderrs is not None and stderrs[i] >= max_relative_error * gap:
            fit.excluded.append(
                {"n": int(n), "reason": f"stderr >= {max_relative_error:g} x gap"}
            )
            continue
        fit.used.append(int(n))
        xs.append(math.log(n))
        ys.append(math.log(gap))
    if len(xs) < min_points:
        fit.reason = f"{len(xs)} usable points, need {min_points}"
        return fit
    result = stats.linregress(xs, ys)
    t = stats.t.ppf(0.5 + 0.5 * confidence, df=len(xs) - 2)
    fit.slope = float(result.slope)
    fit.intercept = float(result.intercept)
    fit.ci_low = float(result.slope - t * result.stderr)
    fit.ci_high = float(result.slope + t * result.stderr)
    return fit


# Chaos reports


@dataclass
class GapRow:
    functional: str
    n: int
    gap: float
    signed_gap: float
    stderr: float
    mean_particles: float
    mean_limit: float


@dataclass
class ChaosReport:
    """
    Coupled estimates of |E F(μ_T^N) − E F(μ_T)| per functional and N.

    Attributes:
        kind: "chaos" or "tagged-chaos"
        rows: One GapRow per (functional, N)
        slopes: SlopeFit per functional
        n_seeds: Seeds averaged over
        notes: Per-functional flags (skipped slope tests and why)
        band: Accepted distance of the slope CI from −1
        acceptance: Functional whose slope check decides the run, if any
    """

    kind: str
    rows: list
    slopes: dict
    n_seeds: int
    notes: dict = field(default_factory=dict)
    band: float = 0.3
    acceptance: Optional[str] = None

    def gap(self, functional: str, n: int) -> GapRow:
        for row in self.rows:
            if row.functional == functional and row.n == n:
                return row
        raise KeyError(f"No row for ({functional!r}, {n})")

    def slope_checks(self) -> dict:
        """Per functional: True or False for a fitted slope, None when skipped."""
        return {name: fit.within(-1.0, self.band) for name, fit in self.slopes.items()}

    def passed(self) -> bool:
        """A skipped check on the acceptance functional counts as a failure."""
        if self.acceptance is None:
            return True
        return self.slope_checks().get(self.acceptance) is True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(r) for r in self.rows])

    def tables(self) -> dict:
        return {"gaps": self.to_frame()}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "band": self.band,
            "slope_within_band": self.slope_checks(),
            "acceptance": self.acceptance,
            "passed": self.passed(),
            "n_seeds": self.n_seeds,
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "slopes": {k: dataclasses.asdict(v) for k, v in self.slopes.items()},
            "notes": self.notes,
        }


def summarize_gaps(
    kind: str,
    names: Sequence[str],
    n_list: Sequence[int],
    particles: np.ndarray,
    limit: np.ndarray,
    band: float = 0.3,
    acceptance: Optional[str] = None,
) -> ChaosReport:
    """
    Aggregate per-seed values into a ChaosReport.

    Args:
        kind: Report label
        names: Functional labels
        n_list: Particle counts
        particles: F(μ_T^N) per seed with shape (n_seeds, len(n_list), len(names))
        limit: Limit counterpart per seed, either per N level with the shape
            of particles or shared across levels with shape (n_seeds, len(names))
        band: Accepted distance of the slope CI from −1
        acceptance: Functional whose slope check decides the run

    Returns:
        ChaosReport with slopes for functionals that keep at least 4 points
    """
    particles = np.asarray(particles, dtype=float)
    limit = np.asarray(limit, dtype=float)
    if limit.ndim == 2:
        limit = np.broadcast_to(limit[:, None, :], particles.shape)
    n_seeds = particles.shape[0]
    diffs = particles - limit
    means = diffs.mean(axis=0)
    errs = (
        diffs.std(axis=0, ddof=1) / math.sqrt(n_seeds)
        if n_seeds > 1
        else np.full(means.shape, np.inf)
    )
    rows, slopes, notes = [], {}, {}
    for j, name in enumerate(names):
        for a, n in enumerate(n_list):
            rows.append(
                GapRow(
                    functional=name,
                    n=int(n),
                    gap=float(abs(means[a, j])),
                    signed_gap=float(means[a, j]),
                    stderr=float(errs[a, j]),
                    mean_particles=float(particles[:, a, j].mean()),
                    mean_limit=float(limit[:, a, j].mean()),
                )
            )
        fit = fit_loglog_slope(n_list, np.abs(means[:, j]), errs[:, j])
        slopes[name] = fit
        if not fit.fitted:
            notes[name] = f"slope test skipped: {fit.reason} (Monte Carlo error dominates)"
    return ChaosReport(kind, rows, slopes, n_seeds, notes, band, acceptance)


# Emission


def write_frame(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_meta(out_dir: Path, experiment: str, cfg: ExperimentConfig) -> Path:
    """Timestamp, versions and runtime settings; the only non-deterministic file."""
    meta = {
        "experiment": experiment,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "workers": cfg.workers,
        "out": str(cfg.out),
    }
    path = out_dir / "meta.json"
    path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def write_outputs(
    experiment: str,
    cfg: ExperimentConfig,
    results: dict,
    tables: Optional[dict[str, pd.DataFrame]] = None,
) -> Path:
    """
    Write report.json, one CSV per table and meta.json into cfg.out.

    Args:
        experiment: Subcommand name
        cfg: Resolved config (embedded with its content hash)
        results: JSON-serializable results
        tables: CSV stem -> DataFrame

    Returns:
        Path of report.json
    """
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "experiment": experiment,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "results": results,
    }
    path = out_dir / "report.json"
    path.write_text(json.dumps(to_builtin(report), sort_keys=True, indent=2) + "\n")
    for stem, frame in (tables or {}).items():
        if frame is None:
            continue
        write_frame(frame, out_dir / f"{stem}.csv")
    write_meta(out_dir, experiment, cfg)
    return path


@dataclass
class RunReport:
    """Results and tables of a non-chaos experiment."""

    experiment: str
    results: dict
    frames: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return self.results

    def tables(self) -> dict:
        return self.frames
