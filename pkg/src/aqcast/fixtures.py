"""Deterministic synthetic mini-dataset for tests and documentation runs.

The generator plants a known relationship between the target and a handful
of satellite/weather features, so pipeline correctness is checkable
end-to-end: a zero-noise linear plant must be fitted exactly by least
squares, and a threshold-interaction plant must favor boosted trees over a
linear model on held-out years.

Everything is derived from one seeded generator in a fixed draw order, so
regeneration from the same spec is byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .core import SATELLITE_BANDS, WEATHER_VARS, PollutantKind, Station
from .ingest import LocalProjection, write_stations
from .raster import RasterGrid, radius_mean, save_grid

__all__ = ["FixtureSpec", "FixturePaths", "generate_fixture", "station_position"]

REF_LON = 9.19
REF_LAT = 45.4642

GRID_N = 24
CELLSIZE = 100.0
EXTENT = GRID_N * CELLSIZE
NODATA = -9999.0

# (base level, seasonal span, spatial gradient, ripple, season phase) per band.
_BAND_SHAPE: dict[str, tuple[float, float, float, float, float]] = {
    "no2": (28.0, 8.0, 6.0, 1.5, 0.0),
    "o3": (55.0, 15.0, -4.0, 2.0, 182.0),
    "so2": (6.0, 2.0, 1.5, 0.5, 40.0),
    "hcho": (12.0, 3.0, 2.0, 0.8, 90.0),
    "co": (180.0, 40.0, 20.0, 5.0, 300.0),
    "aerosol_index": (0.6, 0.8, 0.4, 0.15, 130.0),
}

_POLLUTANT_SCALE = {
    PollutantKind.PM10: 1.0,
    PollutantKind.PM25: 0.7,
    PollutantKind.NO2: 1.3,
    PollutantKind.SO2: 0.25,
    PollutantKind.O3: 1.6,
}

_MEASURED_PATTERNS = (
    tuple(PollutantKind),
    (PollutantKind.PM10, PollutantKind.PM25, PollutantKind.NO2, PollutantKind.O3),
    (PollutantKind.PM10, PollutantKind.NO2, PollutantKind.SO2, PollutantKind.O3),
)

# Thresholds for the planted interaction (near the feature medians).
_THETA_NO2 = 28.0
_THETA_TEMP = 12.0
_THETA_HUM = 58.0


@dataclass(frozen=True)
class FixtureSpec:
    n_stations: int = 3
    n_days: int = 120
    seed: int = 2024
    start: date = date(2020, 11, 2)  # spans two calendar years by default
    noise: float = 0.5
    target_kind: str = "nonlinear"  # "nonlinear" | "linear"
    missing_target_rate: float = 0.05
    missing_satellite_rate: float = 0.03
    write_rasters: bool = True

    def __post_init__(self) -> None:
        if self.target_kind not in ("nonlinear", "linear"):
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        if not 1 <= self.n_stations <= 9:
            raise ValueError("n_stations must be in 1..9 (placement grid)")
        if self.n_days < 2:
            raise ValueError("n_days must be >= 2")


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    stations: Path
    pollution: Path
    weather: Path
    satellite: Path
    dem: Path
    landcover: Path
    classmap: Path
    rasters_dir: Path
    config: Path


def station_position(i: int) -> tuple[float, float]:
    """Projected meters; offset from cell centers so no disc boundary is razor-thin."""
    return 730.0 + 500.0 * (i % 3), 770.0 + 500.0 * (i // 3)


def _cell_centers() -> tuple[np.ndarray, np.ndarray]:
    x = CELLSIZE / 2.0 + CELLSIZE * np.arange(GRID_N)
    y = EXTENT - CELLSIZE * np.arange(GRID_N) - CELLSIZE / 2.0  # row 0 is north
    return np.meshgrid(x, y)


def _dem_grid() -> RasterGrid:
    X, Y = _cell_centers()
    cells = 120.0 + 0.02 * X + 0.01 * Y + 8.0 * np.sin(X / 300.0) * np.cos(Y / 240.0)
    cells[0, 0] = NODATA  # far corner, outside every station disc
    cells[0, 1] = NODATA
    return RasterGrid(ncols=GRID_N, nrows=GRID_N, xllcorner=0.0, yllcorner=0.0,
                      cellsize=CELLSIZE, nodata=NODATA, cells=cells)


def _landcover_grid() -> RasterGrid:
    rows, cols = np.indices((GRID_N, GRID_N))
    cells = ((cols // 2 + 3 * (rows // 3)) % 12 + 1).astype(float)
    return RasterGrid(ncols=GRID_N, nrows=GRID_N, xllcorner=0.0, yllcorner=0.0,
                      cellsize=CELLSIZE, nodata=NODATA, cells=cells)


_CLASSMAP_ROWS = [
    (1, "urban"), (2, "road"), (3, "railways"), (4, "port"), (5, "airports"),
    (6, "extraction"), (7, "no_use"), (8, "green"), (9, "open_spaces"),
    (10, "water"), (11, "urban"), (12, "green"),
]


def _band_grid(band: str, day: int, jitter: float) -> RasterGrid:
    base, span, gradient, ripple, phase = _BAND_SHAPE[band]
    X, Y = _cell_centers()
    season = math.sin(2.0 * math.pi * (day + phase) / 365.25)
    cells = (base + span * season + jitter
             + gradient * ((X - 1200.0) + (Y - 1200.0)) / 2400.0
             + ripple * np.sin((X + 2.0 * Y) / 400.0))
    return RasterGrid(ncols=GRID_N, nrows=GRID_N, xllcorner=0.0, yllcorner=0.0,
                      cellsize=CELLSIZE, nodata=NODATA, cells=cells)


def _planted_target(kind: str, scale: float, no2_prev: float, o3_prev: float,
                    temp_t: float, hum_t: float) -> float:
    if kind == "linear":
        return scale * (18.0 + 0.9 * no2_prev + 0.6 * temp_t)
    interaction = 9.0 if (no2_prev > _THETA_NO2 and temp_t > _THETA_TEMP) else 0.0
    humid_bump = 4.0 if hum_t > _THETA_HUM else 0.0
    return scale * (14.0 + 0.45 * no2_prev + 0.08 * o3_prev + interaction + humid_bump)


def generate_fixture(spec: FixtureSpec, out_dir: str | Path) -> FixturePaths:
    """Write the full dataset (all interface formats) under ``out_dir``."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    proj = LocalProjection(REF_LON, REF_LAT)
    n = spec.n_days
    dates = [spec.start + timedelta(days=d) for d in range(n)]

    stations: list[Station] = []
    station_xy: dict[str, tuple[float, float]] = {}
    for i in range(spec.n_stations):
        x, y = station_position(i)
        lon, lat = proj.to_lonlat(x, y)
        sid = f"ST{i + 1}"
        stations.append(Station(id=sid, lon=lon, lat=lat,
                                measured=frozenset(_MEASURED_PATTERNS[i % 3])))
        station_xy[sid] = (x, y)

    # Weather: one draw block per day, fixed variable order.
    weather = {var: np.empty(n) for var in WEATHER_VARS}
    for d in range(n):
        season = math.sin(2.0 * math.pi * dates[d].timetuple().tm_yday / 365.25)
        temp = 12.0 + 9.0 * season + rng.uniform(-1.5, 1.5)
        dew = temp - 2.0 - 2.0 * rng.uniform(0.0, 1.0)
        hum = float(np.clip(58.0 - 14.0 * season + rng.uniform(-6.0, 6.0), 5.0, 100.0))
        precip = max(0.0, rng.uniform(-4.0, 6.0))
        wind_speed = 1.0 + 4.0 * rng.uniform(0.0, 1.0)
        wind_dir = rng.uniform(0.0, 360.0)
        pressure = 1013.0 + 7.0 * math.sin(2.0 * math.pi * d / 23.0) + rng.uniform(-4.0, 4.0)
        cloud = float(np.clip(50.0 - 30.0 * season + rng.uniform(-20.0, 20.0), 0.0, 100.0))
        solar = max(5.0, 170.0 + 130.0 * season + rng.uniform(-25.0, 25.0))
        for var, value in zip(WEATHER_VARS, (temp, dew, hum, precip, wind_speed,
                                             wind_dir, pressure, cloud, solar)):
            weather[var][d] = value

    # Satellite fields and their per-station disc means (before masking).
    jitter = {band: rng.uniform(-1.0, 1.0, size=n) * (_BAND_SHAPE[band][1] * 0.15)
              for band in SATELLITE_BANDS}
    grids: dict[str, list[RasterGrid]] = {}
    extracted: dict[tuple[str, str], np.ndarray] = {
        (st.id, band): np.empty(n) for st in stations for band in SATELLITE_BANDS}
    for band in SATELLITE_BANDS:
        grids[band] = []
        for d in range(n):
            grid = _band_grid(band, d, float(jitter[band][d]))
            grids[band].append(grid)
            for st in stations:
                x, y = station_xy[st.id]
                value = radius_mean(grid, x, y, 500.0)
                assert value is not None  # synthetic grids cover every disc
                extracted[(st.id, band)][d] = value

    # Targets: always draw noise for every (station, pollutant, day) so the
    # stream position is independent of the measured sets and missing masks.
    targets: dict[tuple[str, PollutantKind], np.ndarray] = {}
    for st in stations:
        for pol in PollutantKind:
            series = np.empty(n)
            for d in range(n):
                prev = d - 1 if d >= 1 else 0
                value = _planted_target(
                    spec.target_kind, _POLLUTANT_SCALE[pol],
                    no2_prev=float(extracted[(st.id, "no2")][prev]),
                    o3_prev=float(extracted[(st.id, "o3")][prev]),
                    temp_t=float(weather["temp"][d]),
                    hum_t=float(weather["humidity"][d]))
                series[d] = value + rng.uniform(-1.0, 1.0) * spec.noise
            targets[(st.id, pol)] = series

    sat_missing: dict[str, np.ndarray] = {}
    for band in SATELLITE_BANDS:
        mask = rng.random(n) < spec.missing_satellite_rate
        if mask.all():
            mask[0] = False  # keep at least one observation per band
        sat_missing[band] = mask
    target_missing: dict[tuple[str, PollutantKind], np.ndarray] = {}
    for st in stations:
        for pol in PollutantKind:
            target_missing[(st.id, pol)] = rng.random(n) < spec.missing_target_rate

    # --- write everything ---------------------------------------------
    paths = FixturePaths(
        root=root,
        stations=root / "stations.csv",
        pollution=root / "pollution.csv",
        weather=root / "weather.csv",
        satellite=root / "satellite.csv",
        dem=root / "dem.asc",
        landcover=root / "landcover.asc",
        classmap=root / "classmap.csv",
        rasters_dir=root / "rasters",
        config=root / "config.json",
    )

    write_stations(stations, paths.stations)

    with open(paths.weather, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(WEATHER_VARS))
        for d in range(n):
            writer.writerow([dates[d].isoformat()]
                            + [repr(float(weather[var][d])) for var in WEATHER_VARS])

    with open(paths.satellite, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "date"] + list(SATELLITE_BANDS))
        for st in stations:
            for d in range(n):
                row = [st.id, dates[d].isoformat()]
                for band in SATELLITE_BANDS:
                    if sat_missing[band][d]:
                        row.append("")
                    else:
                        row.append(repr(float(extracted[(st.id, band)][d])))
                writer.writerow(row)

    with open(paths.pollution, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "date", "pollutant", "value"])
        for st in stations:
            for pol in sorted(st.measured, key=lambda p: p.value):
                for d in range(n):
                    if target_missing[(st.id, pol)][d]:
                        continue
                    writer.writerow([st.id, dates[d].isoformat(), pol.value,
                                     repr(float(targets[(st.id, pol)][d]))])

    save_grid(_dem_grid(), paths.dem)
    save_grid(_landcover_grid(), paths.landcover)
    with open(paths.classmap, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["raw_class", "category"])
        for raw, cat in _CLASSMAP_ROWS:
            writer.writerow([raw, cat])

    if spec.write_rasters:
        paths.rasters_dir.mkdir(exist_ok=True)
        for band in SATELLITE_BANDS:
            for d in range(n):
                if sat_missing[band][d]:
                    continue
                save_grid(grids[band][d],
                          paths.rasters_dir / f"{band}_{dates[d].isoformat()}.asc")

    end = dates[-1]
    config = {
        "paths": {
            "stations": "stations.csv",
            "pollution": "pollution.csv",
            "weather": "weather.csv",
            "satellite": "satellite.csv",
            "satellite_rasters": "rasters",
            "dem": "dem.asc",
            "landcover": "landcover.asc",
            "classmap": "classmap.csv",
        },
        "projection": {"ref_lon": REF_LON, "ref_lat": REF_LAT},
        "pollutants": [p.value for p in PollutantKind],
        "models": ["ols", "sgd", "gbt"],
        "windows": [1, 7, 14],
        "gbt": {"n_trees": 40, "learning_rate": 0.1, "max_depth": 3, "min_samples_leaf": 5},
        # eta0 sized for the widest window (29*14+16 features in [0,1]):
        # per-sample updates stay contractive only while eta < 1/||x||^2.
        "sgd": {"eta0": 0.002, "decay": 0.0001, "epochs": 80, "l2": 0.0},
        "seed": spec.seed,
        "workers": 1,
        "out_dir": "out",
        "predict": {"date": end.isoformat()},
        "grid": {
            "xmin": 480.0, "ymin": 520.0, "xmax": 1480.0, "ymax": 1520.0,
            "cellsize": 500.0, "pollutant": "PM10", "model": "gbt", "w": 7,
            "date": end.isoformat(),
        },
    }
    with open(paths.config, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return paths


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(
        prog="python -m aqcast.fixtures",
        description="Generate the deterministic synthetic example dataset.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--days", type=int, default=120)
    parser.add_argument("--stations", type=int, default=3)
    parser.add_argument("--noise", type=float, default=0.5)
    parser.add_argument("--target", choices=["nonlinear", "linear"], default="nonlinear")
    parser.add_argument("--missing-target-rate", type=float, default=0.05)
    parser.add_argument("--missing-satellite-rate", type=float, default=0.03)
    parser.add_argument("--no-rasters", action="store_true",
                        help="skip writing the daily satellite rasters")
    args = parser.parse_args(argv)
    spec = FixtureSpec(
        n_stations=args.stations, n_days=args.days, seed=args.seed,
        noise=args.noise, target_kind=args.target,
        missing_target_rate=args.missing_target_rate,
        missing_satellite_rate=args.missing_satellite_rate,
        write_rasters=not args.no_rasters)
    paths = generate_fixture(spec, args.out)
    print(f"fixture written under {paths.root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
