"""Model-specification and fit-result files.

A model spec is one JSON document naming the grid and the covariate
rasters of each model component:

    {
      "region": {"xmin": 0, "xmax": 100, "ymin": 0, "ymax": 100},
      "grid": {"nx": 100, "ny": 100},
      "intercept": true,
      "env": {"builtin": "quadratic"},
      "detection": {"link": "logistic",
                    "covariates": [{"name": "visibility", "path": "vis.csv"}]},
      "effort_covariates": [{"name": "daylight", "path": "day.csv"}],
      "offset": {"path": "effort.csv", "log": true, "floor": 0.0},
      "rename": {"env:x": "shared:x"},
      "optimizer": {"gtol": 1e-8, "maxiter": 500}
    }

Raster paths are resolved relative to the model file; ".asc" files are
read as ASCII grids, anything else as raster CSV. The "env" section is
either the built-in scaled quadratic surface or an explicit covariate
list like the detection block. When "log" is true the offset raster is
floored then logged; with a floor of 0 empty cells become -inf and drop
out of the fitted integral. The optional "rename" map aliases qualified
coefficient names so several components of a joint fit can share them.

Fit results serialize to JSON carrying the coefficient estimates,
standard errors, covariance, log likelihood, and convergence record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import QuadraticDesign
from .errors import ConfigError
from .geometry import Grid, Raster, StudyRegion, build_grid
from .inference import CovariateBlock, FitResult, IntensityModel
from .raster_io import read_ascii_grid, read_raster_csv


@dataclass
class ModelSpec:
    """A parsed model file: the model plus fitting options."""

    model: IntensityModel
    gtol: float = 1e-8
    maxiter: int = 500
    rename: dict[str, str] | None = None


def _read_raster(path: Path) -> Raster:
    if path.suffix.lower() == ".asc":
        return read_ascii_grid(path)
    return read_raster_csv(path)


def _covariate_block(entries: Any, base: Path, what: str) -> CovariateBlock:
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{what} must be a nonempty list of covariate entries")
    names, rasters = [], []
    for e in entries:
        if not isinstance(e, dict) or "name" not in e or "path" not in e:
            raise ConfigError(f"{what} entries need 'name' and 'path', got {e!r}")
        names.append(str(e["name"]))
        rasters.append(_read_raster(base / str(e["path"])))
    return CovariateBlock(names, rasters)


def _grid_from(doc: dict[str, Any]) -> Grid:
    region = doc.get("region", {})
    grid = doc.get("grid", {})
    r = StudyRegion(
        float(region.get("xmin", 0.0)),
        float(region.get("xmax", 100.0)),
        float(region.get("ymin", 0.0)),
        float(region.get("ymax", 100.0)),
    )
    return build_grid(r, int(grid.get("nx", 100)), int(grid.get("ny", 100)))


def _offset_raster(doc: Any, base: Path, grid: Grid) -> Raster:
    if not isinstance(doc, dict) or "path" not in doc:
        raise ConfigError("offset needs a 'path'")
    raster = _read_raster(base / str(doc["path"]))
    if not bool(doc.get("log", True)):
        return raster
    floor = float(doc.get("floor", 0.0))
    if floor < 0:
        raise ConfigError("offset floor must be nonnegative")
    with np.errstate(divide="ignore"):
        return Raster(raster.grid, np.log(np.maximum(raster.values, floor)))


def read_model_spec(path: str | Path) -> ModelSpec:
    """Parse and load a model-spec JSON file, reading referenced rasters."""
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: model spec must be a JSON object")
    base = path.parent
    try:
        grid = _grid_from(doc)

        env = None
        env_doc = doc.get("env")
        if env_doc is not None:
            if isinstance(env_doc, dict) and "builtin" in env_doc:
                if env_doc["builtin"] != "quadratic":
                    raise ConfigError(f"unknown builtin env block {env_doc['builtin']!r}")
                env = QuadraticDesign(grid).block()
            else:
                cov = env_doc.get("covariates") if isinstance(env_doc, dict) else env_doc
                env = _covariate_block(cov, base, "env covariates")

        detection = None
        link = "logistic"
        det_doc = doc.get("detection")
        if det_doc is not None:
            if not isinstance(det_doc, dict):
                raise ConfigError("detection must be an object")
            link = str(det_doc.get("link", "logistic"))
            detection = _covariate_block(det_doc.get("covariates"), base, "detection covariates")

        effort = None
        if doc.get("effort_covariates") is not None:
            effort = _covariate_block(doc["effort_covariates"], base, "effort_covariates")

        offset = None
        if doc.get("offset") is not None:
            offset = _offset_raster(doc["offset"], base, grid)

        opt = doc.get("optimizer", {})
        if not isinstance(opt, dict):
            raise ConfigError("optimizer must be an object")
        rename = doc.get("rename")
        if rename is not None and not (
            isinstance(rename, dict)
            and all(isinstance(k, str) and isinstance(v, str) for k, v in rename.items())
        ):
            raise ConfigError("rename must map coefficient names to names")

        model = IntensityModel(
            grid=grid,
            env=env,
            detection=detection,
            effort=effort,
            log_effort_offset=offset,
            intercept=bool(doc.get("intercept", True)),
            link=link,
        )
        return ModelSpec(
            model=model,
            gtol=float(opt.get("gtol", 1e-8)),
            maxiter=int(opt.get("maxiter", 500)),
            rename=rename,
        )
    except ConfigError:
        raise
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: bad model spec: {exc}") from exc


def write_fit_json(fit: FitResult, path: str | Path) -> None:
    se = fit.stderr()
    doc = {
        "names": list(fit.names),
        "theta": [float(v) for v in fit.theta],
        "coefficients": fit.coefficients,
        "stderr": {n: (None if not np.isfinite(s) else s) for n, s in se.items()},
        "loglik": float(fit.loglik),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "gradient_max_norm": (
            None if not np.isfinite(fit.gradient_max_norm) else float(fit.gradient_max_norm)
        ),
        "singular_information": bool(fit.singular_information),
        "covariance": None if fit.covariance is None else fit.covariance.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_fit_json(path: str | Path) -> FitResult:
    with open(path) as fh:
        doc = json.load(fh)
    cov = doc.get("covariance")
    gmax = doc.get("gradient_max_norm")
    return FitResult(
        names=list(doc["names"]),
        theta=np.asarray(doc["theta"], dtype=float),
        loglik=float(doc["loglik"]),
        converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]),
        covariance=None if cov is None else np.asarray(cov, dtype=float),
        singular_information=bool(doc.get("singular_information", False)),
        gradient_max_norm=float("nan") if gmax is None else float(gmax),
    )
