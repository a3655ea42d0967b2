"""Raster file formats: cell-center CSV and ESRI ASCII grid.

Both writers print floats with 17 significant digits so finite values
survive a write/read cycle bit-exact.

CSV layout: header ``x,y,value``, one row per cell center, x varying
fastest, rows from the south edge upward. The reader reconstructs the
grid from the center coordinates, assuming uniform spacing.

ASCII grid layout follows the ESRI convention: six header lines
(ncols, nrows, xllcorner, yllcorner, cellsize, NODATA_value) and data
rows written from the north edge downward. ``cellsize`` is a single
number, so writing requires square cells.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .geometry import Grid, Raster, StudyRegion

_FMT = "%.17g"
_DEFAULT_NODATA = -9999.0


def _fmt(v: float) -> str:
    return _FMT % v


def write_raster_csv(raster: Raster, path: str | Path) -> None:
    grid = raster.grid
    xc = grid.x_centers()
    yc = grid.y_centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for iy in range(grid.ny):
            row = raster.values[iy]
            for ix in range(grid.nx):
                w.writerow([_fmt(xc[ix]), _fmt(yc[iy]), _fmt(row[ix])])


def read_raster_csv(path: str | Path) -> Raster:
    xs: list[float] = []
    ys: list[float] = []
    vs: list[float] = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["x", "y", "value"]:
            raise ValueError(f"{path}: expected header x,y,value, got {header}")
        for row in r:
            if not row:
                continue
            xs.append(float(row[0]))
            ys.append(float(row[1]))
            vs.append(float(row[2]))
    if not vs:
        raise ValueError(f"{path}: no data rows")
    ux = np.unique(np.asarray(xs))
    uy = np.unique(np.asarray(ys))
    nx, ny = len(ux), len(uy)
    if nx * ny != len(vs):
        raise ValueError(f"{path}: {len(vs)} rows do not fill a {nx}x{ny} grid")
    dx = ux[1] - ux[0] if nx > 1 else 2.0 * (ux[0] - 0.0) if ux[0] > 0 else 1.0
    dy = uy[1] - uy[0] if ny > 1 else 2.0 * (uy[0] - 0.0) if uy[0] > 0 else 1.0
    region = StudyRegion(
        xmin=float(ux[0] - dx / 2.0),
        xmax=float(ux[-1] + dx / 2.0),
        ymin=float(uy[0] - dy / 2.0),
        ymax=float(uy[-1] + dy / 2.0),
    )
    grid = Grid(region, nx, ny)
    values = np.full((ny, nx), np.nan)
    ix = np.searchsorted(ux, xs)
    iy = np.searchsorted(uy, ys)
    values[iy, ix] = vs
    return Raster(grid, values)


def write_ascii_grid(raster: Raster, path: str | Path, nodata: float = _DEFAULT_NODATA) -> None:
    grid = raster.grid
    if not np.isclose(grid.dx, grid.dy, rtol=1e-12, atol=0.0):
        raise ValueError(
            f"ASCII grid needs square cells; dx={grid.dx!r} dy={grid.dy!r}"
        )
    vals = np.where(np.isnan(raster.values), nodata, raster.values)
    with open(path, "w") as fh:
        fh.write(f"NCOLS {grid.nx}\n")
        fh.write(f"NROWS {grid.ny}\n")
        fh.write(f"XLLCORNER {_fmt(grid.region.xmin)}\n")
        fh.write(f"YLLCORNER {_fmt(grid.region.ymin)}\n")
        fh.write(f"CELLSIZE {_fmt(grid.dx)}\n")
        fh.write(f"NODATA_VALUE {_fmt(nodata)}\n")
        for iy in range(grid.ny - 1, -1, -1):
            fh.write(" ".join(_fmt(v) for v in vals[iy]))
            fh.write("\n")


def read_ascii_grid(path: str | Path) -> Raster:
    header: dict[str, float] = {}
    data_rows: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            key = parts[0].lower()
            if len(parts) == 2 and key in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
            ):
                header[key] = float(parts[1])
            else:
                data_rows.append([float(tok) for tok in parts])
    for need in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if need not in header:
            raise ValueError(f"{path}: missing ASCII grid header field {need}")
    nx = int(header["ncols"])
    ny = int(header["nrows"])
    cell = header["cellsize"]
    vals = np.asarray(data_rows, dtype=float).reshape(ny, nx)
    nodata = header.get("nodata_value")
    if nodata is not None:
        vals = np.where(vals == nodata, np.nan, vals)
    region = StudyRegion(
        xmin=header["xllcorner"],
        xmax=header["xllcorner"] + nx * cell,
        ymin=header["yllcorner"],
        ymax=header["yllcorner"] + ny * cell,
    )
    # rows are stored north to south
    return Raster(Grid(region, nx, ny), vals[::-1].copy())
