"""Simulation-study harness: replicate pipelines and summaries.

One replicate simulates an encounter study, reconstructs search effort
from the observer tracks under the analyst's assumptions, fits the
quadratic log-intensity model with and without the effort offset, and
scores both against the animal's true stationary density:

    mspe_*  mean squared prediction error of the normalized UD surface
    bias_*  northward displacement of the fitted UD center

Replicates are independent (seed = base_seed XOR replicate index) and
run in a process pool; the worker count comes from the config, the
EFFORTUD_WORKERS environment variable, or the CPU count, in that order.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import QuadraticDesign, RobustInterval, mspe, normalize_ud, robust_interval
from .encounters import EncounterDataset, ObserverSpec, run_study
from .errors import ConfigError, NonConcaveFitError
from .geometry import Grid, Raster, StudyRegion, build_grid
from .effort import trip_grouped_effort
from .inference import IntensityModel, LikelihoodData, fit_mle, predict_intensity
from .movement import BivariateNormalPotential, HalfNormalYPotential, MovementSpec, analytic_ud

WORKERS_ENV = "EFFORTUD_WORKERS"

# Bias presets pair the observers' step variance with the spread of their
# long-run density. Slow observers (step variance 2) concentrate search
# near the northern boundary; faster observers (step variance 8) range
# over most of the region. Realized coverage, not step length, is what
# drives how strongly raw encounter locations over-represent the north,
# so the two must move together.
_BIAS_PRESETS = {"high": (2.0, 400.0), "low": (8.0, 1600.0)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one simulation-study setting."""

    label: str
    region: StudyRegion
    nx: int
    ny: int
    animal_center: tuple[float, float]
    animal_potential_variance: float
    animal_bm_variance: float
    n_mobile: int
    n_static: int
    observer_bm_variance: float
    observer_center_y: float
    observer_potential_variance: float
    true_range: float
    true_mode: str
    n_trips: int
    max_steps: int
    assumed_range: float
    detection_modeled: bool
    overlap: bool
    effort_floor: float
    replicates: int
    base_seed: int
    workers: int | None = None
    dt: float = 1.0

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if self.n_mobile + self.n_static < 1:
            raise ConfigError("need at least one observer")
        for name in ("true_range", "assumed_range"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.effort_floor < 0:
            raise ConfigError("effort_floor must be nonnegative")

    @property
    def grid(self) -> Grid:
        return build_grid(self.region, self.nx, self.ny)

    def animal_spec(self) -> MovementSpec:
        return MovementSpec(
            BivariateNormalPotential(self.animal_center, self.animal_potential_variance),
            self.animal_bm_variance,
            dt=self.dt,
        )

    def observer_specs(self) -> list[ObserverSpec]:
        move = MovementSpec(
            HalfNormalYPotential(self.observer_center_y, self.observer_potential_variance),
            self.observer_bm_variance,
            dt=self.dt,
        )
        mobile = [
            ObserverSpec("mobile", move, self.true_range, self.true_mode)
            for _ in range(self.n_mobile)
        ]
        static = [
            ObserverSpec("static", move, self.true_range, self.true_mode)
            for _ in range(self.n_static)
        ]
        return mobile + static

    def replicate_seed(self, replicate: int) -> int:
        return self.base_seed ^ replicate


def config_from_dict(doc: dict[str, Any]) -> ExperimentConfig:
    """Validate a parsed JSON document into an ExperimentConfig."""
    try:
        region = doc.get("region", {})
        grid = doc.get("grid", {})
        animal = doc.get("animal", {})
        obs = doc.get("observers", {})
        det = doc.get("detection", {})
        study = doc.get("study", {})
        analyst = doc.get("analyst", {})
        bm = obs.get("bm_variance")
        pot = obs.get("potential_variance")
        if bm is None or pot is None:
            bias = obs.get("bias", "high")
            if bias not in _BIAS_PRESETS:
                raise ConfigError(f"observers.bias must be high or low, got {bias!r}")
            preset_bm, preset_pot = _BIAS_PRESETS[bias]
            bm = preset_bm if bm is None else bm
            pot = preset_pot if pot is None else pot
        return ExperimentConfig(
            label=str(doc.get("label", "experiment")),
            region=StudyRegion(
                float(region.get("xmin", 0.0)),
                float(region.get("xmax", 100.0)),
                float(region.get("ymin", 0.0)),
                float(region.get("ymax", 100.0)),
            ),
            nx=int(grid.get("nx", 100)),
            ny=int(grid.get("ny", 100)),
            animal_center=tuple(animal.get("center", (50.0, 50.0))),
            animal_potential_variance=float(animal.get("potential_variance", 200.0)),
            animal_bm_variance=float(animal.get("bm_variance", 2.0)),
            n_mobile=int(obs.get("mobile", 1)),
            n_static=int(obs.get("static", 0)),
            observer_bm_variance=float(bm),
            observer_center_y=float(obs.get("potential_center_y", 100.0)),
            observer_potential_variance=float(pot),
            true_range=float(det.get("range", 10.0)),
            true_mode=str(det.get("mode", "linear-decay")),
            n_trips=int(study.get("n_trips", 150)),
            max_steps=int(study.get("max_steps", 500)),
            assumed_range=float(analyst.get("assumed_range", det.get("range", 10.0))),
            detection_modeled=bool(analyst.get("detection_modeled", True)),
            overlap=bool(analyst.get("overlap", False)),
            effort_floor=float(analyst.get("effort_floor", 1e-6)),
            replicates=int(doc.get("replicates", 1)),
            base_seed=int(doc.get("base_seed", 0)),
            workers=None if doc.get("workers") is None else int(doc["workers"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    r = cfg.region
    return {
        "label": cfg.label,
        "region": {"xmin": r.xmin, "xmax": r.xmax, "ymin": r.ymin, "ymax": r.ymax},
        "grid": {"nx": cfg.nx, "ny": cfg.ny},
        "animal": {
            "center": list(cfg.animal_center),
            "potential_variance": cfg.animal_potential_variance,
            "bm_variance": cfg.animal_bm_variance,
        },
        "observers": {
            "mobile": cfg.n_mobile,
            "static": cfg.n_static,
            "bm_variance": cfg.observer_bm_variance,
            "potential_center_y": cfg.observer_center_y,
            "potential_variance": cfg.observer_potential_variance,
        },
        "detection": {"range": cfg.true_range, "mode": cfg.true_mode},
        "study": {"n_trips": cfg.n_trips, "max_steps": cfg.max_steps},
        "analyst": {
            "assumed_range": cfg.assumed_range,
            "detection_modeled": cfg.detection_modeled,
            "overlap": cfg.overlap,
            "effort_floor": cfg.effort_floor,
        },
        "replicates": cfg.replicates,
        "base_seed": cfg.base_seed,
        "workers": cfg.workers,
    }


def read_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def simulate_replicate(cfg: ExperimentConfig, replicate: int) -> EncounterDataset:
    return run_study(
        cfg.animal_spec(),
        cfg.observer_specs(),
        cfg.region,
        cfg.n_trips,
        cfg.max_steps,
        seed=cfg.replicate_seed(replicate),
        grid=cfg.grid,
    )


def _floored_log_offset(effort_values: np.ndarray, floor: float, grid: Grid) -> Raster:
    with np.errstate(divide="ignore"):
        return Raster(grid, np.log(np.maximum(effort_values, floor)))


def run_replicate(cfg: ExperimentConfig, replicate: int) -> dict[str, Any]:
    """Simulate, fit, and score one replicate; returns a metrics record."""
    grid = cfg.grid
    dataset = simulate_replicate(cfg, replicate)
    pts = dataset.encounter_points()
    record: dict[str, Any] = {
        "replicate": replicate,
        "setting": cfg.label,
        "seed": cfg.replicate_seed(replicate),
        "n_encounters": int(len(pts)),
    }

    qd = QuadraticDesign(grid)
    block = qd.block()
    truth = analytic_ud(cfg.animal_spec().potential, grid)
    data = LikelihoodData.from_points(grid, pts)
    true_cy = cfg.animal_center[1]

    def score(model: IntensityModel, tag: str) -> None:
        try:
            fit = fit_mle(model, data)
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            record[f"mspe_{tag}"] = None
            record[f"bias_{tag}"] = None
            record[f"converged_{tag}"] = False
            record[f"error_{tag}"] = f"{type(exc).__name__}: {exc}"
            return
        ud = normalize_ud(predict_intensity(model, fit.theta))
        record[f"mspe_{tag}"] = mspe(ud, truth)
        try:
            record[f"bias_{tag}"] = float(qd.center_from(fit).y - true_cy)
        except NonConcaveFitError:
            record[f"bias_{tag}"] = None
        record[f"converged_{tag}"] = bool(fit.converged)

    score(IntensityModel(grid=grid, env=block), "uncorrected")

    tracks = {t.trip: t.tracks for t in dataset.trips}
    mode = "detection" if cfg.detection_modeled else "indicator"
    eff = trip_grouped_effort(tracks, grid, cfg.assumed_range, mode=mode, overlap=False)
    offset = _floored_log_offset(eff.values, cfg.effort_floor, grid)
    score(IntensityModel(grid=grid, env=block, log_effort_offset=offset), "corrected")

    if cfg.overlap:
        eff_o = trip_grouped_effort(tracks, grid, cfg.assumed_range, mode=mode, overlap=True)
        offset_o = _floored_log_offset(eff_o.values, cfg.effort_floor, grid)
        score(IntensityModel(grid=grid, env=block, log_effort_offset=offset_o), "overlap")
    return record


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict[str, Any]]
    summaries: dict[str, RobustInterval] = field(default_factory=dict)

    def metric_values(self, key: str) -> np.ndarray:
        vals = [r.get(key) for r in self.records]
        return np.array([v for v in vals if v is not None], dtype=float)


def _resolve_workers(cfg: ExperimentConfig, override: int | None = None) -> int:
    if override is not None:
        return max(1, override)
    if cfg.workers is not None:
        return max(1, cfg.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def summarize(records: list[dict[str, Any]], overlap: bool) -> dict[str, RobustInterval]:
    keys = ["mspe_uncorrected", "mspe_corrected", "bias_uncorrected", "bias_corrected"]
    if overlap:
        keys += ["mspe_overlap", "bias_overlap"]
    out: dict[str, RobustInterval] = {}
    for key in keys:
        vals = [r.get(key) for r in records]
        finite = [v for v in vals if v is not None and np.isfinite(v)]
        if len(finite) >= 2:
            out[key] = robust_interval(finite)
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run all replicates of one setting, in parallel where possible."""
    n_workers = _resolve_workers(cfg, workers)
    reps = list(range(cfg.replicates))
    if n_workers == 1 or cfg.replicates == 1:
        records = [run_replicate(cfg, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=min(n_workers, cfg.replicates)) as pool:
            records = list(pool.map(run_replicate, [cfg] * len(reps), reps))
    return ExperimentResult(
        config=cfg, records=records, summaries=summarize(records, cfg.overlap)
    )


def _jsonable(v: Any) -> Any:
    if isinstance(v, RobustInterval):
        return {"median": v.median, "lo": v.lo, "hi": v.hi}
    return v


def write_metrics_json(result: ExperimentResult, path: str | Path) -> None:
    doc = {
        "setting": result.config.label,
        "config": config_to_dict(result.config),
        "records": result.records,
        "summaries": {k: _jsonable(v) for k, v in result.summaries.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def summary_table(result: ExperimentResult) -> str:
    """Fixed-width text table of the robust interval summaries."""
    lines = [f"setting: {result.config.label}  replicates: {result.config.replicates}"]
    lines.append(f"{'metric':<20} {'median':>14} {'lo':>14} {'hi':>14}")
    for key, iv in result.summaries.items():
        lines.append(f"{key:<20} {iv.median:>14.6g} {iv.lo:>14.6g} {iv.hi:>14.6g}")
    return "\n".join(lines) + "\n"
