"""File readers, writers, and dataset assembly.

All sources are plain CSV or ASCII grids; the readers raise
:class:`~aqcast.errors.SchemaError` (with file/line/column) on malformed
input and keep missing values as explicit gaps. Assembly clips every series
to the intersection of the source date ranges.

Station coordinates arrive as lon/lat degrees while rasters use planar
meters; a local equirectangular projection around a reference point bridges
the two. That approximation is accurate to well under a meter at city scale
and avoids dragging in a full CRS stack.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    SATELLITE_BANDS,
    WEATHER_VARS,
    DailySeries,
    Measurement,
    PollutantKind,
    Quality,
    Station,
)
from .errors import GapError, SchemaError, UnknownPollutant, UnknownStation
from .raster import (
    RasterGrid,
    TopoProfile,
    load_classmap,
    load_grid,
    radius_mean,
    topo_profile,
)

__all__ = [
    "LocalProjection",
    "StationDataset",
    "MissingnessReport",
    "read_stations",
    "read_pollution",
    "read_weather",
    "read_satellite_csv",
    "extract_satellite",
    "load_satellite_rasters",
    "assemble_dataset",
    "load_dataset",
    "missingness_report",
    "write_stations",
    "write_pollution",
    "write_weather",
    "write_satellite_csv",
    "write_missingness_csv",
]

log = logging.getLogger("aqcast.ingest")

METERS_PER_DEGREE = 111_320.0


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular lon/lat <-> planar meters around a reference point."""

    ref_lon: float
    ref_lat: float

    def to_xy(self, lon: float, lat: float) -> tuple[float, float]:
        kx = METERS_PER_DEGREE * math.cos(math.radians(self.ref_lat))
        return (lon - self.ref_lon) * kx, (lat - self.ref_lat) * METERS_PER_DEGREE

    def to_lonlat(self, x: float, y: float) -> tuple[float, float]:
        kx = METERS_PER_DEGREE * math.cos(math.radians(self.ref_lat))
        return self.ref_lon + x / kx, self.ref_lat + y / METERS_PER_DEGREE

    @classmethod
    def centered_on(cls, stations: Sequence[Station]) -> "LocalProjection":
        lon = sum(s.lon for s in stations) / len(stations)
        lat = sum(s.lat for s in stations) / len(stations)
        return cls(ref_lon=lon, ref_lat=lat)


def _parse_date(token: str, *, file: str, line: int, column: str = "date") -> date:
    try:
        return date.fromisoformat(token.strip())
    except ValueError:
        raise SchemaError(f"invalid ISO date {token!r}", file=file, line=line,
                          column=column) from None


def _parse_float(token: str, *, file: str, line: int, column: str) -> float:
    try:
        return float(token)
    except (TypeError, ValueError):
        raise SchemaError(f"non-numeric value {token!r}", file=file, line=line,
                          column=column) from None


def _require_header(reader: csv.DictReader, expected: Sequence[str], path: str) -> None:
    if reader.fieldnames is None or list(reader.fieldnames) != list(expected):
        raise SchemaError(
            f"expected header {','.join(expected)!r}, got "
            f"{','.join(reader.fieldnames or ())!r}", file=path, line=1)


def read_stations(path: str | Path) -> list[Station]:
    """Read stations.csv: ``station_id,lon,lat,pollutants``."""
    path = str(path)
    stations: list[Station] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader, ["station_id", "lon", "lat", "pollutants"], path)
        for i, row in enumerate(reader, start=2):
            sid = (row["station_id"] or "").strip()
            if not sid:
                raise SchemaError("empty station_id", file=path, line=i, column="station_id")
            if sid in seen:
                raise SchemaError(f"duplicate station id {sid!r}", file=path, line=i,
                                  column="station_id")
            seen.add(sid)
            lon = _parse_float(row["lon"], file=path, line=i, column="lon")
            lat = _parse_float(row["lat"], file=path, line=i, column="lat")
            tokens = [t for t in (row["pollutants"] or "").split(";") if t.strip()]
            measured: set[PollutantKind] = set()
            for tok in tokens:
                try:
                    measured.add(PollutantKind(tok.strip()))
                except ValueError:
                    raise SchemaError(f"unknown pollutant {tok.strip()!r}",
                                      file=path, line=i, column="pollutants") from None
            try:
                stations.append(Station(id=sid, lon=lon, lat=lat, measured=frozenset(measured)))
            except ValueError as exc:
                raise SchemaError(str(exc), file=path, line=i) from None
    if not stations:
        raise SchemaError("no stations defined", file=path)
    return stations


def _series_from_cells(start: date, end: date,
                       cells: Mapping[date, float | None]) -> DailySeries:
    n = (end - start).days + 1
    values: list[Measurement | None] = [None] * n
    for d, v in cells.items():
        if v is not None:
            values[(d - start).days] = Measurement(v)
    return DailySeries(start, tuple(values))


def read_pollution(
    path: str | Path,
    stations: Sequence[Station] | None = None,
) -> dict[tuple[str, PollutantKind], DailySeries]:
    """Read pollution.csv: ``station_id,date,pollutant,value``.

    With ``stations`` given, every (station, measured pollutant) pair gets a
    series over the file's date span, gaps included; rows for unknown
    stations raise. Without it, series are keyed by whatever ids appear
    (used by the lenient validation path).
    """
    path = str(path)
    known = {s.id: s for s in stations} if stations is not None else None
    cells: dict[tuple[str, PollutantKind], dict[date, float | None]] = {}
    lo: date | None = None
    hi: date | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader, ["station_id", "date", "pollutant", "value"], path)
        for i, row in enumerate(reader, start=2):
            sid = (row["station_id"] or "").strip()
            if known is not None and sid not in known:
                raise UnknownStation(f"{path}:{i}: unknown station id {sid!r}")
            try:
                pol = PollutantKind((row["pollutant"] or "").strip())
            except ValueError:
                raise UnknownPollutant(
                    f"{path}:{i}: unknown pollutant {row['pollutant']!r} "
                    f"(valid: {', '.join(p.value for p in PollutantKind)})") from None
            if known is not None and pol not in known[sid].measured:
                raise SchemaError(f"station {sid} does not measure {pol}",
                                  file=path, line=i, column="pollutant")
            d = _parse_date(row["date"], file=path, line=i)
            raw = (row["value"] or "").strip()
            value = None if raw == "" else _parse_float(raw, file=path, line=i, column="value")
            key = (sid, pol)
            day_cells = cells.setdefault(key, {})
            if d in day_cells:
                log.warning("%s:%d: duplicate reading for (%s, %s, %s); last one wins",
                            path, i, sid, pol, d)
            day_cells[d] = value
            lo = d if lo is None or d < lo else lo
            hi = d if hi is None or d > hi else hi
    if lo is None or hi is None:
        raise SchemaError("pollution file holds no rows", file=path)
    out: dict[tuple[str, PollutantKind], DailySeries] = {}
    keys: Iterable[tuple[str, PollutantKind]]
    if stations is not None:
        keys = [(s.id, p) for s in stations for p in sorted(s.measured, key=lambda q: q.value)]
    else:
        keys = sorted(cells, key=lambda k: (k[0], k[1].value))
    for key in keys:
        out[key] = _series_from_cells(lo, hi, cells.get(key, {}))
    return out


def read_weather(path: str | Path) -> dict[str, DailySeries]:
    """Read weather.csv; the feed must be complete (no gaps, no blanks)."""
    path = str(path)
    expected = ["date"] + list(WEATHER_VARS)
    rows: dict[date, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader, expected, path)
        for i, row in enumerate(reader, start=2):
            d = _parse_date(row["date"], file=path, line=i)
            if d in rows:
                raise SchemaError(f"duplicate weather row for {d}", file=path, line=i,
                                  column="date")
            vals: dict[str, float] = {}
            for var in WEATHER_VARS:
                raw = (row[var] or "").strip()
                if raw == "":
                    raise SchemaError(f"weather value for {var} is empty (feed must be complete)",
                                      file=path, line=i, column=var)
                vals[var] = _parse_float(raw, file=path, line=i, column=var)
            if not 0.0 <= vals["wind_dir_deg"] <= 360.0:
                raise SchemaError(f"direction outside [0,360]: {vals['wind_dir_deg']}",
                                  file=path, line=i, column="wind_dir_deg")
            rows[d] = vals
    if not rows:
        raise SchemaError("weather file holds no rows", file=path)
    lo, hi = min(rows), max(rows)
    for off in range((hi - lo).days + 1):
        d = lo + timedelta(days=off)
        if d not in rows:
            raise GapError(f"{path}: weather feed is missing {d}")
    out: dict[str, DailySeries] = {}
    for var in WEATHER_VARS:
        seq = [rows[lo + timedelta(days=off)][var] for off in range((hi - lo).days + 1)]
        out[var] = DailySeries.from_floats(lo, seq)
    return out


def read_satellite_csv(
    path: str | Path,
    stations: Sequence[Station] | None = None,
) -> dict[tuple[str, str], DailySeries]:
    """Read satellite.csv: ``station_id,date,no2,o3,so2,hcho,co,aerosol_index``.

    Empty band fields are gaps. With ``stations`` given, all station x band
    series exist over the file span even when a station has no rows.
    """
    path = str(path)
    known = {s.id for s in stations} if stations is not None else None
    cells: dict[tuple[str, str], dict[date, float | None]] = {}
    ids_seen: list[str] = []
    lo: date | None = None
    hi: date | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_header(reader, ["station_id", "date"] + list(SATELLITE_BANDS), path)
        for i, row in enumerate(reader, start=2):
            sid = (row["station_id"] or "").strip()
            if known is not None and sid not in known:
                raise UnknownStation(f"{path}:{i}: unknown station id {sid!r}")
            if sid not in ids_seen:
                ids_seen.append(sid)
            d = _parse_date(row["date"], file=path, line=i)
            for band in SATELLITE_BANDS:
                raw = (row[band] or "").strip()
                value = None if raw == "" else _parse_float(raw, file=path, line=i, column=band)
                day_cells = cells.setdefault((sid, band), {})
                if d in day_cells:
                    log.warning("%s:%d: duplicate satellite reading (%s, %s, %s); last one wins",
                                path, i, sid, band, d)
                day_cells[d] = value
            lo = d if lo is None or d < lo else lo
            hi = d if hi is None or d > hi else hi
    if lo is None or hi is None:
        raise SchemaError("satellite file holds no rows", file=path)
    sids = [s.id for s in stations] if stations is not None else ids_seen
    out: dict[tuple[str, str], DailySeries] = {}
    for sid in sids:
        for band in SATELLITE_BANDS:
            out[(sid, band)] = _series_from_cells(lo, hi, cells.get((sid, band), {}))
    return out


def extract_satellite(
    daily_rasters: Mapping[date, Mapping[str, RasterGrid]],
    stations: Sequence[Station],
    station_xy: Mapping[str, tuple[float, float]],
    radius: float = 500.0,
) -> dict[tuple[str, str], DailySeries]:
    """Reduce daily band rasters to one disc mean per station and band.

    Dates or bands with no raster yield gaps; so do discs that contain no
    usable cell.
    """
    if not daily_rasters:
        raise ValueError("no rasters supplied")
    lo, hi = min(daily_rasters), max(daily_rasters)
    out: dict[tuple[str, str], DailySeries] = {}
    for st in stations:
        x, y = station_xy[st.id]
        for band in SATELLITE_BANDS:
            cells: dict[date, float | None] = {}
            for d, grids in daily_rasters.items():
                grid = grids.get(band)
                if grid is not None:
                    cells[d] = radius_mean(grid, x, y, radius)
            out[(st.id, band)] = _series_from_cells(lo, hi, cells)
    return out


def load_satellite_rasters(
    rasters_dir: str | Path,
    dates: Iterable[date] | None = None,
) -> dict[date, dict[str, RasterGrid]]:
    """Load per-day band grids named ``<band>_<YYYY-MM-DD>.asc``.

    With ``dates`` given, only those days are loaded (grid prediction needs
    a narrow window, not the whole archive).
    """
    rasters_dir = Path(rasters_dir)
    wanted = set(dates) if dates is not None else None
    out: dict[date, dict[str, RasterGrid]] = {}
    for path in sorted(rasters_dir.glob("*.asc")):
        stem = path.stem
        band, _, datepart = stem.rpartition("_")
        if band not in SATELLITE_BANDS:
            continue
        try:
            d = date.fromisoformat(datepart)
        except ValueError:
            continue
        if wanted is not None and d not in wanted:
            continue
        out.setdefault(d, {})[band] = load_grid(path)
    return out


@dataclass(frozen=True)
class StationDataset:
    """Everything the feature pipeline consumes, aligned to one date range.

    All series are clipped to [start, end]; satellite series exist for every
    station x band, weather for every variable, pollutant series only for
    the pollutants each station measures.
    """

    stations: tuple[Station, ...]
    start: date
    end: date
    pollutants: Mapping[str, Mapping[PollutantKind, DailySeries]]
    satellite: Mapping[str, Mapping[str, DailySeries]]
    weather: Mapping[str, DailySeries]
    topo: Mapping[str, TopoProfile]
    station_xy: Mapping[str, tuple[float, float]]

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def station_by_id(self, sid: str) -> Station:
        for st in self.stations:
            if st.id == sid:
                return st
        raise UnknownStation(f"unknown station id {sid!r}")

    def date_at(self, i: int) -> date:
        return self.start + timedelta(days=i)


def assemble_dataset(
    stations: Sequence[Station],
    pollutant_series: Mapping[tuple[str, PollutantKind], DailySeries],
    satellite_series: Mapping[tuple[str, str], DailySeries],
    weather_series: Mapping[str, DailySeries],
    topo: Mapping[str, TopoProfile],
    station_xy: Mapping[str, tuple[float, float]],
) -> StationDataset:
    """Clip all sources to their common date range and regroup per station."""
    spans = []
    for group in (pollutant_series.values(), satellite_series.values(), weather_series.values()):
        seqs = list(group)
        if not seqs:
            raise GapError("a source group is empty; cannot establish a date range")
        spans.append((min(s.start for s in seqs), max(s.end for s in seqs)))
    start = max(lo for lo, _ in spans)
    end = min(hi for _, hi in spans)
    if end < start:
        raise GapError(
            f"source date ranges do not overlap (latest start {start}, earliest end {end})")

    pol: dict[str, dict[PollutantKind, DailySeries]] = {}
    for (sid, p), series in pollutant_series.items():
        pol.setdefault(sid, {})[p] = series.clipped(start, end)
    sat: dict[str, dict[str, DailySeries]] = {}
    for (sid, band), series in satellite_series.items():
        sat.setdefault(sid, {})[band] = series.clipped(start, end)
    wx = {var: series.clipped(start, end) for var, series in weather_series.items()}
    return StationDataset(
        stations=tuple(stations), start=start, end=end,
        pollutants=pol, satellite=sat, weather=wx,
        topo=dict(topo), station_xy=dict(station_xy),
    )


def load_dataset(
    stations_path: str | Path,
    pollution_path: str | Path,
    weather_path: str | Path,
    *,
    satellite_path: str | Path | None = None,
    satellite_rasters_dir: str | Path | None = None,
    dem_path: str | Path | None = None,
    landcover_path: str | Path | None = None,
    classmap_path: str | Path | None = None,
    projection: LocalProjection | None = None,
    with_topo: bool = True,
) -> StationDataset:
    """Read every source file and assemble one aligned dataset.

    Satellite data comes either from a pre-extracted CSV or from a directory
    of daily rasters; both yield the same dataset shape. ``with_topo=False``
    skips the raster-backed static features (enough for the missingness
    report).
    """
    stations = read_stations(stations_path)
    proj = projection or LocalProjection.centered_on(stations)
    station_xy = {s.id: proj.to_xy(s.lon, s.lat) for s in stations}

    pollutant_series = read_pollution(pollution_path, stations)
    weather_series = read_weather(weather_path)

    if satellite_path is not None:
        satellite_series = read_satellite_csv(satellite_path, stations)
    elif satellite_rasters_dir is not None:
        rasters = load_satellite_rasters(satellite_rasters_dir)
        if not rasters:
            raise GapError(f"no satellite rasters found under {satellite_rasters_dir}")
        satellite_series = extract_satellite(rasters, stations, station_xy)
    else:
        raise ValueError("need satellite_path or satellite_rasters_dir")

    topo: dict[str, TopoProfile] = {}
    if with_topo:
        if dem_path is None or landcover_path is None or classmap_path is None:
            raise ValueError("topo extraction needs dem_path, landcover_path and classmap_path")
        dem = load_grid(dem_path)
        landcover = load_grid(landcover_path)
        cover = load_classmap(classmap_path)
        for st in stations:
            x, y = station_xy[st.id]
            topo[st.id] = topo_profile(dem, landcover, cover, x, y)
    else:
        for st in stations:
            topo[st.id] = TopoProfile(None, None, None, tuple(0.0 for _ in range(10)))

    return assemble_dataset(stations, pollutant_series, satellite_series,
                            weather_series, topo, station_xy)


@dataclass(frozen=True)
class MissingnessReport:
    """Per (pollutant, date) share of expected stations that are silent."""

    entries: Mapping[tuple[PollutantKind, date], tuple[int, int]]

    def fraction(self, pollutant: PollutantKind, d: date) -> float:
        expected, missing = self.entries[(pollutant, d)]
        return missing / expected


def missingness_report(dataset: StationDataset) -> MissingnessReport:
    """Count silent stations per pollutant and day.

    The denominator is the number of stations declared to measure the
    pollutant, never the global station count.
    """
    entries: dict[tuple[PollutantKind, date], tuple[int, int]] = {}
    for pol in PollutantKind:
        expected = [s for s in dataset.stations if pol in s.measured]
        if not expected:
            continue
        for off in range(dataset.n_days):
            d = dataset.start + timedelta(days=off)
            missing = 0
            for st in expected:
                series = dataset.pollutants.get(st.id, {}).get(pol)
                if series is None or series.values[off] is None:
                    missing += 1
            entries[(pol, d)] = (len(expected), missing)
    return MissingnessReport(entries)


# --- writers (inverse of the readers; floats keep full repr precision) ----


def write_stations(stations: Sequence[Station], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "lon", "lat", "pollutants"])
        for st in stations:
            measured = ";".join(p.value for p in sorted(st.measured, key=lambda q: q.value))
            w.writerow([st.id, repr(st.lon), repr(st.lat), measured])


def write_pollution(dataset: StationDataset, path: str | Path) -> None:
    """One row per observed reading; gaps stay absent."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "date", "pollutant", "value"])
        for st in dataset.stations:
            for pol in sorted(st.measured, key=lambda q: q.value):
                series = dataset.pollutants[st.id][pol]
                for d, m in series.iter_days():
                    if m is not None:
                        w.writerow([st.id, d.isoformat(), pol.value, repr(m.value)])


def write_weather(dataset: StationDataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date"] + list(WEATHER_VARS))
        for off in range(dataset.n_days):
            d = dataset.start + timedelta(days=off)
            row = [d.isoformat()]
            for var in WEATHER_VARS:
                m = dataset.weather[var].values[off]
                if m is None:
                    raise GapError(f"weather {var} missing on {d}; cannot serialize a gapped feed")
                row.append(repr(m.value))
            w.writerow(row)


def write_satellite_csv(dataset: StationDataset, path: str | Path) -> None:
    """One row per (station, date); band gaps become empty fields."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "date"] + list(SATELLITE_BANDS))
        for st in dataset.stations:
            for off in range(dataset.n_days):
                d = dataset.start + timedelta(days=off)
                row = [st.id, d.isoformat()]
                for band in SATELLITE_BANDS:
                    m = dataset.satellite[st.id][band].values[off]
                    row.append("" if m is None else repr(m.value))
                w.writerow(row)


def write_missingness_csv(report: MissingnessReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "pollutant", "n_expected", "n_missing", "fraction"])
        for (pol, d), (expected, missing) in sorted(
                report.entries.items(), key=lambda kv: (kv[0][1], kv[0][0].value)):
            w.writerow([d.isoformat(), pol.value, expected, missing,
                        repr(missing / expected)])
