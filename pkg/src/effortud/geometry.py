"""Rectangular study regions, regular grids, and gridded rasters.

The spatial domain is a rectangle partitioned into nx * ny equal cells.
Cells are indexed by a single integer ``iy * nx + ix`` where ``ix`` counts
columns from the west edge and ``iy`` counts rows from the south edge.
Raster values are stored as a (ny, nx) array so that ``values.ravel()``
follows the same flat ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import MissingDataError, OutOfDomainError


class Point(NamedTuple):
    """A planar location in region coordinates."""

    x: float
    y: float


@dataclass(frozen=True)
class StudyRegion:
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(
                f"degenerate region: x [{self.xmin}, {self.xmax}], "
                f"y [{self.ymin}, {self.ymax}]"
            )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        """Closed-rectangle membership (boundary counts as inside)."""
        return (self.xmin <= x <= self.xmax) and (self.ymin <= y <= self.ymax)


@dataclass(frozen=True)
class Grid:
    """Regular partition of a region into nx columns and ny rows."""

    region: StudyRegion
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must have at least one cell, got {self.nx}x{self.ny}")

    @property
    def dx(self) -> float:
        return self.region.width / self.nx

    @property
    def dy(self) -> float:
        return self.region.height / self.ny

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.region.area / (self.nx * self.ny)

    def x_centers(self) -> np.ndarray:
        return self.region.xmin + (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return self.region.ymin + (np.arange(self.ny) + 0.5) * self.dy

    def center_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as (ny, nx) arrays (X, Y)."""
        return np.meshgrid(self.x_centers(), self.y_centers())

    def cell_center(self, index: int) -> Point:
        ix, iy = self.cell_xy(index)
        return Point(
            self.region.xmin + (ix + 0.5) * self.dx,
            self.region.ymin + (iy + 0.5) * self.dy,
        )

    def cell_xy(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.ncells:
            raise OutOfDomainError(f"cell index {index} outside [0, {self.ncells})")
        return index % self.nx, index // self.nx


def build_grid(region: StudyRegion, nx: int, ny: int) -> Grid:
    """Construct a regular grid over ``region``."""
    return Grid(region=region, nx=nx, ny=ny)


def _axis_index(coord: np.ndarray, lo: float, step: float, n: int) -> np.ndarray:
    # ceil(t/step) - 1 sends interior boundary points to the lower-index cell;
    # clipping keeps the region's own edges in the first/last cell.
    idx = np.ceil((coord - lo) / step).astype(np.int64) - 1
    return np.clip(idx, 0, n - 1)


def cells_of(grid: Grid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized flat cell indices for points inside the region.

    Points outside the closed region raise OutOfDomainError.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = grid.region
    bad = (xs < r.xmin) | (xs > r.xmax) | (ys < r.ymin) | (ys > r.ymax)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfDomainError(f"point ({xs.flat[i]}, {ys.flat[i]}) outside region")
    ix = _axis_index(xs, r.xmin, grid.dx, grid.nx)
    iy = _axis_index(ys, r.ymin, grid.dy, grid.ny)
    return iy * grid.nx + ix


def cell_of(grid: Grid, p: Point | tuple[float, float]) -> int:
    """Flat index of the cell containing ``p``.

    Interior boundary points belong to the lower-index adjacent cell, so
    the cells partition the region with no point claimed twice.
    """
    x, y = p
    return int(cells_of(grid, np.array([x]), np.array([y]))[0])


@dataclass
class Raster:
    """Per-cell values on a grid; NaN marks a missing cell."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape == (self.grid.ncells,):
            v = v.reshape(self.grid.ny, self.grid.nx)
        if v.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(
                f"values shape {v.shape} does not match grid "
                f"({self.grid.ny}, {self.grid.nx})"
            )
        self.values = v

    @property
    def flat(self) -> np.ndarray:
        """Flat view in cell-index order."""
        return self.values.reshape(-1)

    def copy(self) -> "Raster":
        return Raster(self.grid, self.values.copy())


def constant_raster(grid: Grid, value: float) -> Raster:
    return Raster(grid, np.full((grid.ny, grid.nx), float(value)))


def raster_from_function(grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Raster:
    """Evaluate ``fn(X, Y)`` at all cell centers."""
    X, Y = grid.center_arrays()
    return Raster(grid, np.asarray(fn(X, Y), dtype=float))


def raster_lookup(raster: Raster, p: Point | tuple[float, float]) -> float:
    """Piecewise-constant lookup: the value of the cell containing ``p``.

    Raises OutOfDomainError outside the region and MissingDataError on
    cells flagged missing (NaN).
    """
    idx = cell_of(raster.grid, p)
    v = float(raster.flat[idx])
    if np.isnan(v):
        raise MissingDataError(f"missing value at cell {idx} (point {tuple(p)})")
    return v


def same_grid(a: Grid, b: Grid) -> bool:
    return a == b
