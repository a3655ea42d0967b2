"""Utilization-distribution summaries built on fitted intensity models.

A utilization distribution (UD) is an intensity surface rescaled to a
probability density over the region: cell values times cell area sum
to one. Downstream summaries include per-mark allocation probabilities,
exceedance (core-area) maps with sampling uncertainty, and scalar
accuracy metrics for simulation studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatchError,
    NonConcaveFitError,
    SingularCovarianceError,
    UndefinedProbabilityError,
)
from .geometry import Grid, Point, Raster, raster_from_function
from .inference import CovariateBlock, FitResult, IntensityModel, predict_intensity


@dataclass
class UDRaster(Raster):
    """A raster normalized so sum(values) * cell_area = 1."""


def normalize_ud(intensity: Raster) -> UDRaster:
    """Rescale a nonnegative intensity surface into a density."""
    v = intensity.values
    if not np.all(np.isfinite(v)):
        raise ValueError("intensity must be finite everywhere")
    if np.any(v < 0):
        raise ValueError("intensity must be nonnegative")
    total = v.sum() * intensity.grid.cell_area
    if total <= 0:
        raise ValueError("cannot normalize an all-zero intensity")
    return UDRaster(intensity.grid, v / total)


def mark_probability(intensities: list[Raster]) -> list[Raster]:
    """Cellwise allocation probabilities across marks.

    Given one intensity raster per mark, returns rasters whose values
    at each cell are intensity_k / sum_j intensity_j. Every cell must
    have positive total intensity.
    """
    if not intensities:
        raise ValueError("no mark intensities")
    grid = intensities[0].grid
    for r in intensities[1:]:
        if r.grid != grid:
            raise GridMismatchError("mark intensities on different grids")
    stack = np.stack([r.values for r in intensities])
    if np.any(stack < 0) or not np.all(np.isfinite(stack)):
        raise ValueError("mark intensities must be finite and nonnegative")
    total = stack.sum(axis=0)
    if np.any(total <= 0):
        bad = int(np.count_nonzero(total <= 0))
        raise UndefinedProbabilityError(f"{bad} cells have zero total intensity")
    return [Raster(grid, m / total) for m in stack]


@dataclass
class ExceedanceMap:
    """Per-cell probability that the intensity exceeds a high quantile.

    ``probabilities`` holds, for each cell, the fraction of coefficient
    draws under which that cell's intensity lay strictly above the
    draw's percentile threshold. Cells whose probability falls below
    ``cutoff`` are hidden by ``masked()``.
    """

    probabilities: Raster
    percentile: float
    cutoff: float | None = None
    n_samples: int = 0

    def masked(self) -> Raster:
        if self.cutoff is None:
            return self.probabilities.copy()
        v = self.probabilities.values.copy()
        v[v < self.cutoff] = np.nan
        return Raster(self.probabilities.grid, v)


def exceedance_map(
    model: IntensityModel,
    fit: FitResult,
    rng: np.random.Generator,
    percentile: float = 70.0,
    n_samples: int = 1000,
    cutoff: float | None = None,
    threshold_mode: str = "per-draw",
    fix_detection: float = 0.0,
    fix_effort: float = 0.0,
) -> ExceedanceMap:
    """Sample coefficient uncertainty into a core-area probability map.

    Coefficients are drawn from the asymptotic normal N(theta_hat,
    covariance). Per draw the environment-driven intensity surface is
    computed and compared against its own ``percentile`` threshold
    ("per-draw" mode) or against the point-estimate threshold ("fixed").
    An all-zero covariance is accepted and yields a 0/1-valued map; any
    other rank-deficient covariance is refused.
    """
    if not 0.0 < percentile < 100.0:
        raise ValueError(f"percentile must be in (0, 100), got {percentile}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    if threshold_mode not in ("per-draw", "fixed"):
        raise ValueError(f"unknown threshold mode {threshold_mode!r}")
    if fit.covariance is None:
        raise SingularCovarianceError("fit carries no covariance")
    cov = np.asarray(fit.covariance, dtype=float)
    degenerate = bool(np.all(cov == 0.0))
    if fit.singular_information and not degenerate:
        raise SingularCovarianceError("singular coefficient covariance")

    grid = model.grid
    q = percentile / 100.0
    if degenerate:
        draws = np.tile(fit.theta, (n_samples, 1))
    else:
        draws = rng.multivariate_normal(fit.theta, cov, size=n_samples, method="svd")

    fixed_thr = None
    if threshold_mode == "fixed":
        base = predict_intensity(model, fit.theta, fix_detection, fix_effort).flat
        fixed_thr = float(np.quantile(base[np.isfinite(base)], q))

    above = np.zeros(grid.ncells)
    finite_any = np.zeros(grid.ncells, dtype=bool)
    for k in range(n_samples):
        vals = predict_intensity(model, draws[k], fix_detection, fix_effort).flat
        finite = np.isfinite(vals)
        finite_any |= finite
        thr = fixed_thr if fixed_thr is not None else float(np.quantile(vals[finite], q))
        above += finite & (vals > thr)
    probs = above / n_samples
    probs[~finite_any] = np.nan
    return ExceedanceMap(
        probabilities=Raster(grid, probs.reshape(grid.ny, grid.nx)),
        percentile=percentile,
        cutoff=cutoff,
        n_samples=n_samples,
    )


def mspe(estimate: Raster, truth: Raster) -> float:
    """Mean squared prediction error over cells."""
    if estimate.grid != truth.grid:
        raise GridMismatchError("estimate and truth on different grids")
    diff = estimate.values - truth.values
    if not np.all(np.isfinite(diff)):
        raise ValueError("mspe requires finite surfaces")
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class RobustInterval:
    median: float
    lo: float
    hi: float


def robust_interval(values, c: float = 1.48, k: float = 2.0) -> RobustInterval:
    """Median +- k * c * MAD summary of replicate statistics.

    With the consistency constant c = 1.48 the MAD estimates a normal
    standard deviation, so k = 2 gives a rough 95% band.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values to summarize")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    med = float(np.median(v))
    mad = float(np.median(np.abs(v - med)))
    half = k * c * mad
    return RobustInterval(median=med, lo=med - half, hi=med + half)


@dataclass(frozen=True)
class QuadraticDesign:
    """Quadratic log-intensity surface in region-scaled coordinates.

    Coordinates are mapped to u = (x - cx) / sx, v = (y - cy) / sy with
    the region center and half-widths, keeping covariates within
    [-1, 1] so the optimizer sees a well-conditioned design. The five
    covariates are named qx, qy, qx2, qy2, qxy.
    """

    grid: Grid

    @property
    def cx(self) -> float:
        r = self.grid.region
        return (r.xmin + r.xmax) / 2.0

    @property
    def cy(self) -> float:
        r = self.grid.region
        return (r.ymin + r.ymax) / 2.0

    @property
    def sx(self) -> float:
        return self.grid.region.width / 2.0

    @property
    def sy(self) -> float:
        return self.grid.region.height / 2.0

    def block(self) -> CovariateBlock:
        cx, cy, sx, sy = self.cx, self.cy, self.sx, self.sy
        u = lambda X, Y: (X - cx) / sx  # noqa: E731
        v = lambda X, Y: (Y - cy) / sy  # noqa: E731
        g = self.grid
        return CovariateBlock(
            names=["qx", "qy", "qx2", "qy2", "qxy"],
            rasters=[
                raster_from_function(g, u),
                raster_from_function(g, v),
                raster_from_function(g, lambda X, Y: u(X, Y) ** 2),
                raster_from_function(g, lambda X, Y: v(X, Y) ** 2),
                raster_from_function(g, lambda X, Y: u(X, Y) * v(X, Y)),
            ],
        )

    def center_from(self, fit: FitResult) -> Point:
        """Maximizer of the fitted quadratic surface, in map units."""
        c = fit.coefficients
        try:
            b1, b2 = c["env:qx"], c["env:qy"]
            b3, b4, b5 = c["env:qx2"], c["env:qy2"], c["env:qxy"]
        except KeyError as exc:
            raise ValueError("fit lacks quadratic coefficients qx..qxy") from exc
        det = 4.0 * b3 * b4 - b5 * b5
        if not (b3 < 0 and det > 0):
            raise NonConcaveFitError(
                f"fitted quadratic has no interior maximum (qx2={b3}, det={det})"
            )
        u = (-b1 * 2.0 * b4 + b2 * b5) / det
        v = (-b2 * 2.0 * b3 + b1 * b5) / det
        return Point(self.cx + self.sx * u, self.cy + self.sy * v)


def ud_center_bias(fit: FitResult, design: QuadraticDesign, true_center_y: float) -> float:
    """Northward displacement of the fitted UD center from the truth."""
    return float(design.center_from(fit).y - true_center_y)
