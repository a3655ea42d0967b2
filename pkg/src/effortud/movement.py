"""Movement simulation on a bounded region.

Positions follow discretized Langevin dynamics: the drift is
``(sigma^2 / 2) * grad log pi`` where ``pi`` is the potential density and
``sigma^2`` the Brownian motion variance, so in the small-step limit the
stationary density of the process equals ``pi`` restricted to the region.
Each update is an Euler-Maruyama step

    p' = p + drift(p) * dt + sqrt(sigma^2 * dt) * Z,   Z ~ N(0, I_2)

followed by coordinate-wise reflection back into the rectangle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateSpecError
from .geometry import Grid, Point, Raster, StudyRegion

_REJECTION_CAP = 10**6


@dataclass(frozen=True)
class BivariateNormalPotential:
    """Symmetric bivariate normal potential density."""

    center: tuple[float, float]
    variance: float
    kind: str = field(default="bivariate-normal", init=False)

    def __post_init__(self) -> None:
        if self.variance <= 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        cx, cy = self.center
        return -((np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2) / (2.0 * self.variance) - np.log(
            2.0 * np.pi * self.variance
        )

    def grad_log_density(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = self.center
        return (cx - np.asarray(x)) / self.variance, (cy - np.asarray(y)) / self.variance


@dataclass(frozen=True)
class HalfNormalYPotential:
    """Normal in y, flat in x; intersected with the region this yields a
    half-normal profile when the y-center sits on the boundary."""

    center_y: float
    variance: float
    kind: str = field(default="half-normal-y", init=False)

    def __post_init__(self) -> None:
        if self.variance <= 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = -((np.asarray(y) - self.center_y) ** 2) / (2.0 * self.variance)
        return out + np.zeros_like(np.asarray(x, dtype=float))

    def grad_log_density(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gy = (self.center_y - np.asarray(y)) / self.variance
        return np.zeros_like(gy), gy


@dataclass(frozen=True)
class CustomPotential:
    """User-supplied log density (vectorized over coordinate arrays).

    If no gradient callable is given, central finite differences are used.
    """

    log_density_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    kind: str = field(default="custom-log-density", init=False)

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.log_density_fn(x, y), dtype=float)

    def grad_log_density(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.grad_fn is not None:
            gx, gy = self.grad_fn(x, y)
            return np.asarray(gx, dtype=float), np.asarray(gy, dtype=float)
        h = 1e-6
        f = self.log_density
        gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h)
        gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h)
        return gx, gy


Potential = BivariateNormalPotential | HalfNormalYPotential | CustomPotential


@dataclass(frozen=True)
class MovementSpec:
    """One entity's dynamics: potential plus Brownian motion variance."""

    potential: Potential
    bm_variance: float
    dt: float = 1.0

    def __post_init__(self) -> None:
        if self.bm_variance <= 0:
            raise ValueError(f"bm_variance must be positive, got {self.bm_variance}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass
class Trajectory:
    """A sequence of positions at fixed time spacing."""

    positions: np.ndarray
    dt: float
    entity: str = ""

    def __post_init__(self) -> None:
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"positions must be (n, 2), got {p.shape}")
        self.positions = p

    def __len__(self) -> int:
        return len(self.positions)


def potential_log_density(potential: Potential, p: Point | tuple[float, float]) -> float:
    x, y = p
    return float(potential.log_density(np.float64(x), np.float64(y)))


def drift(spec: MovementSpec, p: Point | tuple[float, float]) -> np.ndarray:
    """Langevin drift vector (bm_variance / 2) * grad log pi at ``p``."""
    x, y = p
    gx, gy = spec.potential.grad_log_density(np.float64(x), np.float64(y))
    return 0.5 * spec.bm_variance * np.array([float(gx), float(gy)])


def reflect_into(coords: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fold coordinates into [lo, hi] by repeated boundary reflection."""
    w = hi - lo
    t = np.mod(coords - lo, 2.0 * w)
    return lo + np.where(t > w, 2.0 * w - t, t)


def step_positions(
    spec: MovementSpec,
    positions: np.ndarray,
    region: StudyRegion,
    noise: np.ndarray,
) -> np.ndarray:
    """Advance an (n, 2) array of positions one Euler-Maruyama step.

    ``noise`` must be (n, 2) standard normal draws; scaling by
    sqrt(bm_variance * dt) happens here.
    """
    gx, gy = spec.potential.grad_log_density(positions[:, 0], positions[:, 1])
    scale = 0.5 * spec.bm_variance * spec.dt
    sd = np.sqrt(spec.bm_variance * spec.dt)
    nx = positions[:, 0] + scale * gx + sd * noise[:, 0]
    ny = positions[:, 1] + scale * gy + sd * noise[:, 1]
    return np.column_stack(
        (
            reflect_into(nx, region.xmin, region.xmax),
            reflect_into(ny, region.ymin, region.ymax),
        )
    )


def step(
    spec: MovementSpec,
    p: Point | tuple[float, float],
    region: StudyRegion,
    rng: np.random.Generator,
) -> Point:
    """Single-entity Euler-Maruyama step with reflection."""
    pos = np.array([[p[0], p[1]]], dtype=float)
    noise = rng.standard_normal((1, 2))
    out = step_positions(spec, pos, region, noise)
    return Point(float(out[0, 0]), float(out[0, 1]))


def simulate_trajectory(
    spec: MovementSpec,
    start: Point | tuple[float, float],
    n_steps: int,
    region: StudyRegion,
    rng: np.random.Generator,
    entity: str = "",
) -> Trajectory:
    """Simulate ``n_steps`` updates from ``start`` (n_steps + 1 positions).

    Noise for the whole trajectory is drawn up front in one generator
    call, so a given (seed, n_steps) pair is reproducible.
    """
    if n_steps < 0:
        raise ValueError(f"n_steps must be nonnegative, got {n_steps}")
    if not region.contains(start[0], start[1]):
        raise ValueError(f"start {tuple(start)} outside region")
    noise = rng.standard_normal((n_steps, 1, 2))
    out = np.empty((n_steps + 1, 2))
    out[0] = (start[0], start[1])
    pos = out[0:1]
    for i in range(n_steps):
        pos = step_positions(spec, pos, region, noise[i])
        out[i + 1] = pos[0]
    return Trajectory(positions=out, dt=spec.dt, entity=entity)


def _rejection_sample(
    propose: Callable[[int], np.ndarray],
    accept: Callable[[np.ndarray], np.ndarray],
    cap: int,
) -> np.ndarray:
    attempts = 0
    chunk = 4096
    while attempts < cap:
        n = min(chunk, cap - attempts)
        cand = propose(n)
        ok = accept(cand)
        if np.any(ok):
            return cand[np.argmax(ok)]
        attempts += n
    raise DegenerateSpecError(f"rejection sampling failed after {cap} attempts")


def sample_initial(
    potential: Potential,
    region: StudyRegion,
    rng: np.random.Generator,
    cap: int = _REJECTION_CAP,
) -> Point:
    """Draw one point from the potential density truncated to the region.

    Built-in potentials use exact rejection from their own proposal; a
    custom potential falls back to uniform proposals under a grid-based
    envelope (adequate for densities smooth at the 1/256 region scale).
    """
    if isinstance(potential, BivariateNormalPotential):
        sd = np.sqrt(potential.variance)
        cx, cy = potential.center

        def propose(n: int) -> np.ndarray:
            return rng.normal((cx, cy), sd, size=(n, 2))

        def accept(c: np.ndarray) -> np.ndarray:
            return (
                (c[:, 0] >= region.xmin)
                & (c[:, 0] <= region.xmax)
                & (c[:, 1] >= region.ymin)
                & (c[:, 1] <= region.ymax)
            )

        p = _rejection_sample(propose, accept, cap)
        return Point(float(p[0]), float(p[1]))

    if isinstance(potential, HalfNormalYPotential):
        sd = np.sqrt(potential.variance)

        def propose(n: int) -> np.ndarray:
            xs = rng.uniform(region.xmin, region.xmax, size=n)
            ys = rng.normal(potential.center_y, sd, size=n)
            return np.column_stack((xs, ys))

        def accept(c: np.ndarray) -> np.ndarray:
            return (c[:, 1] >= region.ymin) & (c[:, 1] <= region.ymax)

        p = _rejection_sample(propose, accept, cap)
        return Point(float(p[0]), float(p[1]))

    # custom: uniform proposals against an empirical envelope
    gx = np.linspace(region.xmin, region.xmax, 257)
    gy = np.linspace(region.ymin, region.ymax, 257)
    X, Y = np.meshgrid(gx, gy)
    log_m = float(np.max(potential.log_density(X, Y))) + np.log(1.5)

    def propose(n: int) -> np.ndarray:
        xs = rng.uniform(region.xmin, region.xmax, size=n)
        ys = rng.uniform(region.ymin, region.ymax, size=n)
        us = rng.uniform(size=n)
        return np.column_stack((xs, ys, us))

    def accept(c: np.ndarray) -> np.ndarray:
        logp = potential.log_density(c[:, 0], c[:, 1])
        return np.log(c[:, 2]) < logp - log_m

    p = _rejection_sample(propose, accept, cap)
    return Point(float(p[0]), float(p[1]))


def analytic_ud(potential: Potential, grid: Grid) -> Raster:
    """Stationary density of the reflected process on ``grid``.

    The potential density is evaluated at cell centers and normalized so
    that sum(value * cell_area) = 1. Custom potentials carry no
    normalization guarantee and are rejected.
    """
    if isinstance(potential, CustomPotential):
        raise ValueError("analytic_ud requires a built-in potential kind")
    X, Y = grid.center_arrays()
    logd = potential.log_density(X, Y)
    d = np.exp(logd - np.max(logd))
    total = d.sum() * grid.cell_area
    return Raster(grid, d / total)
