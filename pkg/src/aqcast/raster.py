"""Uniform georeferenced grids and disc-based spatial aggregation.

Grids live in a planar projected CRS with coordinates in meters; callers
are responsible for supplying query points in the same CRS. Disc membership
is decided by the cell *center* (no area weighting), and every aggregation
visits cells in row-major order (north row first) so results are
bit-reproducible and checkable against a full-grid scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, OutOfExtent, ParseError, SchemaError, UnknownClass

__all__ = [
    "RasterGrid",
    "LandCoverMap",
    "TopoProfile",
    "LANDCOVER_CATEGORIES",
    "load_grid",
    "save_grid",
    "load_classmap",
    "radius_mean",
    "class_fractions",
    "dem_profile",
    "topo_profile",
]

LANDCOVER_CATEGORIES: tuple[str, ...] = (
    "urban", "road", "railways", "port", "airports",
    "extraction", "no_use", "green", "open_spaces", "water",
)

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True)
class RasterGrid:
    """Row-major uniform grid; row 0 is the northernmost row.

    ``cells`` has shape (nrows, ncols); entries equal to ``nodata`` are
    treated as missing by every aggregation.
    """

    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata: float
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.ncols < 1 or self.nrows < 1:
            raise ValueError("grid must have positive dimensions")
        if self.cellsize <= 0:
            raise ValueError("cellsize must be > 0")
        if self.cells.shape != (self.nrows, self.ncols):
            raise DimensionMismatch(
                f"cells shape {self.cells.shape} != (nrows={self.nrows}, ncols={self.ncols})")
        self.cells.flags.writeable = False  # grids are immutable after load

    @property
    def xmax(self) -> float:
        return self.xllcorner + self.ncols * self.cellsize

    @property
    def ymax(self) -> float:
        return self.yllcorner + self.nrows * self.cellsize

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.xllcorner + (col + 0.5) * self.cellsize
        y = self.yllcorner + (self.nrows - row - 0.5) * self.cellsize
        return x, y

    def cell_at(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing the point; right/top edges inclusive."""
        if not (self.xllcorner <= x <= self.xmax and self.yllcorner <= y <= self.ymax):
            raise OutOfExtent(
                f"point ({x}, {y}) outside grid "
                f"[{self.xllcorner}, {self.xmax}] x [{self.yllcorner}, {self.ymax}]")
        col = min(int((x - self.xllcorner) // self.cellsize), self.ncols - 1)
        row_from_bottom = min(int((y - self.yllcorner) // self.cellsize), self.nrows - 1)
        return self.nrows - 1 - row_from_bottom, col

    def is_nodata(self, row: int, col: int) -> bool:
        return self.cells[row, col] == self.nodata

    def value(self, row: int, col: int) -> float | None:
        v = float(self.cells[row, col])
        return None if v == self.nodata else v


def load_grid(path: str | Path) -> RasterGrid:
    """Parse an ESRI ASCII grid (.asc): 6 header lines, then row-major values."""
    path = Path(path)
    header: dict[str, float] = {}
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        for raw in fh:
            lineno += 1
            tokens = raw.split()
            if not tokens:
                continue
            if len(header) < len(_HEADER_KEYS):
                if len(tokens) != 2:
                    raise ParseError(
                        f"expected 'key value' header, got {raw.strip()!r}",
                        file=str(path), line=lineno)
                key = tokens[0].lower()
                if key not in _HEADER_KEYS:
                    raise ParseError(f"unknown header key {tokens[0]!r}",
                                     file=str(path), line=lineno)
                if key in header:
                    raise ParseError(f"duplicate header key {tokens[0]!r}",
                                     file=str(path), line=lineno)
                try:
                    header[key] = float(tokens[1])
                except ValueError:
                    raise ParseError(f"non-numeric header value {tokens[1]!r}",
                                     file=str(path), line=lineno) from None
            else:
                try:
                    values.extend(float(t) for t in tokens)
                except ValueError:
                    raise ParseError(f"non-numeric cell value in {raw.strip()!r}",
                                     file=str(path), line=lineno) from None
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"missing header keys: {', '.join(missing)}",
                         file=str(path), line=lineno or None)
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    if ncols < 1 or nrows < 1:
        raise ParseError(f"non-positive grid dimensions {ncols}x{nrows}", file=str(path))
    if header["cellsize"] <= 0:
        raise ParseError(f"cellsize {header['cellsize']} must be > 0", file=str(path))
    if len(values) != ncols * nrows:
        raise DimensionMismatch(
            f"{path}: declared {nrows}x{ncols} = {ncols * nrows} cells, found {len(values)}")
    cells = np.array(values, dtype=float).reshape(nrows, ncols)
    return RasterGrid(ncols=ncols, nrows=nrows,
                      xllcorner=header["xllcorner"], yllcorner=header["yllcorner"],
                      cellsize=header["cellsize"], nodata=header["nodata_value"],
                      cells=cells)


def save_grid(grid: RasterGrid, path: str | Path) -> None:
    """Write a grid in the same ASCII format ``load_grid`` reads.

    Values are written with full repr precision so a round trip is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {grid.ncols}\n")
        fh.write(f"nrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.xllcorner!r}\n")
        fh.write(f"yllcorner {grid.yllcorner!r}\n")
        fh.write(f"cellsize {grid.cellsize!r}\n")
        fh.write(f"NODATA_value {grid.nodata!r}\n")
        for row in range(grid.nrows):
            fh.write(" ".join(repr(float(v)) for v in grid.cells[row]) + "\n")


@dataclass(frozen=True)
class LandCoverMap:
    """Total mapping from raw land-cover codes to the 10 broad categories."""

    raw_to_category: dict[int, str]

    def __post_init__(self) -> None:
        bad = sorted(set(self.raw_to_category.values()) - set(LANDCOVER_CATEGORIES))
        if bad:
            raise ValueError(f"unknown land-cover categories: {bad}")

    def category(self, raw: int) -> str:
        try:
            return self.raw_to_category[raw]
        except KeyError:
            raise UnknownClass(raw) from None


def load_classmap(path: str | Path) -> LandCoverMap:
    """Read classmap.csv (``raw_class,category``)."""
    import csv

    path = Path(path)
    mapping: dict[int, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"raw_class", "category"}:
            raise SchemaError("expected header 'raw_class,category'", file=str(path), line=1)
        for i, row in enumerate(reader, start=2):
            try:
                raw = int(row["raw_class"])
            except (TypeError, ValueError):
                raise SchemaError(f"non-integer raw_class {row.get('raw_class')!r}",
                                  file=str(path), line=i, column="raw_class") from None
            cat = (row.get("category") or "").strip()
            if cat not in LANDCOVER_CATEGORIES:
                raise SchemaError(f"unknown category {cat!r}",
                                  file=str(path), line=i, column="category")
            mapping[raw] = cat
    if not mapping:
        raise SchemaError("class map is empty", file=str(path))
    return LandCoverMap(mapping)


def _disc_cells(grid: RasterGrid, x: float, y: float, radius: float):
    """Yield (row, col) of cells whose center lies within the disc, row-major.

    Iterates only the disc's bounding box; the visiting order is the
    row-major order of the full grid restricted to that box, which keeps
    summation order identical to a full scan.
    """
    cs = grid.cellsize
    col_lo = max(0, int(math.floor((x - radius - grid.xllcorner) / cs - 0.5)))
    col_hi = min(grid.ncols - 1, int(math.ceil((x + radius - grid.xllcorner) / cs - 0.5)))
    # row 0 is north: larger y -> smaller row index
    row_lo = max(0, int(math.floor((grid.ymax - (y + radius)) / cs - 0.5)))
    row_hi = min(grid.nrows - 1, int(math.ceil((grid.ymax - (y - radius)) / cs - 0.5)))
    r2 = radius * radius
    for row in range(row_lo, row_hi + 1):
        cy = grid.yllcorner + (grid.nrows - row - 0.5) * cs
        dy = cy - y
        for col in range(col_lo, col_hi + 1):
            cx = grid.xllcorner + (col + 0.5) * cs
            dx = cx - x
            if dx * dx + dy * dy <= r2:
                yield row, col


def radius_mean(grid: RasterGrid, x: float, y: float, radius: float) -> float | None:
    """Mean of non-nodata cells whose centers fall within ``radius`` of (x, y).

    Returns None when no such cell exists. Summation is left-to-right in
    row-major order.
    """
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    total = 0.0
    count = 0
    for row, col in _disc_cells(grid, x, y, radius):
        v = float(grid.cells[row, col])
        if v == grid.nodata:
            continue
        total = total + v
        count += 1
    if count == 0:
        return None
    return total / count


def class_fractions(grid: RasterGrid, cover: LandCoverMap, x: float, y: float,
                    radius: float) -> tuple[float, ...]:
    """Per-category share of the in-disc non-nodata cells (10 values).

    All-zero when the disc holds no usable cell. Raises UnknownClass if an
    in-disc cell carries a code absent from the map.
    """
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    counts = {cat: 0 for cat in LANDCOVER_CATEGORIES}
    total = 0
    for row, col in _disc_cells(grid, x, y, radius):
        v = float(grid.cells[row, col])
        if v == grid.nodata:
            continue
        raw = int(v)
        if raw != v:
            raise UnknownClass(raw)
        counts[cover.category(raw)] += 1
        total += 1
    if total == 0:
        return tuple(0.0 for _ in LANDCOVER_CATEGORIES)
    return tuple(counts[cat] / total for cat in LANDCOVER_CATEGORIES)


def dem_profile(dem: RasterGrid, x: float, y: float) -> tuple[float | None, float | None, float | None]:
    """Altitude at three scales: exact cell, 100 m disc mean, 1 km disc mean.

    The point sample is None when the containing cell is nodata; the disc
    means then still average whatever usable cells remain.
    """
    row, col = dem.cell_at(x, y)  # raises OutOfExtent when outside
    alt_point = dem.value(row, col)
    return alt_point, radius_mean(dem, x, y, 100.0), radius_mean(dem, x, y, 1000.0)


@dataclass(frozen=True)
class TopoProfile:
    """Static terrain descriptors for one location."""

    alt_point: float | None
    alt_100m: float | None
    alt_1km: float | None
    landcover_fractions: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.landcover_fractions) != len(LANDCOVER_CATEGORIES):
            raise ValueError("landcover_fractions must have one entry per category")


def topo_profile(dem: RasterGrid, landcover: RasterGrid, cover: LandCoverMap,
                 x: float, y: float, radius: float = 500.0) -> TopoProfile:
    """Full static feature block for a point: DEM scales + land-cover shares."""
    alt_point, alt_100m, alt_1km = dem_profile(dem, x, y)
    fractions = class_fractions(landcover, cover, x, y, radius)
    return TopoProfile(alt_point=alt_point, alt_100m=alt_100m, alt_1km=alt_1km,
                       landcover_fractions=fractions)
