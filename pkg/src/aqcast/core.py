"""Core value types and calendar arithmetic.

Dates are plain :class:`datetime.date` objects: the dataset is strictly
daily, so the stdlib Gregorian calendar (total order, one-day successor via
``timedelta(days=1)``) is exactly the required semantics. Missing readings
are represented by ``None`` entries inside :class:`DailySeries` -- never by
a sentinel number, so a gap can not silently leak into a mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "PollutantKind",
    "Quality",
    "Measurement",
    "Station",
    "DailySeries",
    "ValidationReport",
    "Violation",
    "SATELLITE_BANDS",
    "WEATHER_VARS",
    "day_of_year",
    "weekday",
    "date_index",
    "validate_dataset",
]

# Daily satellite bands, in the column order of satellite.csv.
SATELLITE_BANDS: tuple[str, ...] = ("no2", "o3", "so2", "hcho", "co", "aerosol_index")

# City-level weather variables, in the column order of weather.csv.
WEATHER_VARS: tuple[str, ...] = (
    "temp", "dewpoint", "humidity", "precip", "wind_speed",
    "wind_dir_deg", "pressure", "cloud_cover", "solar_rad",
)


class PollutantKind(str, Enum):
    """The five pollutants of the European air-quality index (closed set)."""

    PM10 = "PM10"
    PM25 = "PM25"
    NO2 = "NO2"
    SO2 = "SO2"
    O3 = "O3"

    def __str__(self) -> str:  # CSV-friendly
        return self.value


class Quality(str, Enum):
    OBSERVED = "observed"
    INTERPOLATED = "interpolated"


@dataclass(frozen=True)
class Measurement:
    """A single daily value plus how it was obtained."""

    value: float
    quality: Quality = Quality.OBSERVED


@dataclass(frozen=True)
class Station:
    """A fixed monitoring site and the pollutants it reports."""

    id: str
    lon: float
    lat: float
    measured: frozenset[PollutantKind]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("station id must be non-empty")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"station {self.id}: lon {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"station {self.id}: lat {self.lat} outside [-90, 90]")
        if not self.measured:
            raise ValueError(f"station {self.id}: measured pollutant set is empty")


def day_of_year(d: date) -> int:
    """Zero-based ordinal of ``d`` within its year (Jan 1 -> 0)."""
    return d.timetuple().tm_yday - 1


def weekday(d: date) -> int:
    """Zero-based day of week, Monday -> 0."""
    return d.weekday()


def date_index(start: date, d: date) -> int:
    """Offset in days of ``d`` relative to ``start`` (may be negative)."""
    return (d - start).days


@dataclass(frozen=True)
class DailySeries:
    """Daily values anchored at ``start``; index i holds day start+i.

    Entries are ``Measurement`` or ``None`` (missing). Instances are
    immutable; transformations return new series.
    """

    start: date
    values: tuple[Measurement | None, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("series must hold at least one day")

    @classmethod
    def from_floats(cls, start: date, raw: Iterable[float | None],
                    quality: Quality = Quality.OBSERVED) -> "DailySeries":
        return cls(start, tuple(
            None if v is None else Measurement(float(v), quality) for v in raw))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> date:
        """Last covered date (inclusive)."""
        return self.start + timedelta(days=len(self.values) - 1)

    def date_at(self, i: int) -> date:
        return self.start + timedelta(days=i)

    def index_of(self, d: date) -> int:
        i = date_index(self.start, d)
        if not 0 <= i < len(self.values):
            raise IndexError(f"{d} outside series range {self.start}..{self.end}")
        return i

    def at(self, d: date) -> Measurement | None:
        return self.values[self.index_of(d)]

    def value_at(self, i: int) -> float | None:
        m = self.values[i]
        return None if m is None else m.value

    def iter_days(self) -> Iterator[tuple[date, Measurement | None]]:
        for i, m in enumerate(self.values):
            yield self.date_at(i), m

    def clipped(self, start: date, end: date) -> "DailySeries":
        """Restrict to [start, end], padding uncovered days with missing."""
        if end < start:
            raise ValueError(f"empty clip range {start}..{end}")
        out: list[Measurement | None] = []
        for off in range((end - start).days + 1):
            d = start + timedelta(days=off)
            i = date_index(self.start, d)
            out.append(self.values[i] if 0 <= i < len(self.values) else None)
        return DailySeries(start, tuple(out))

    def n_missing(self) -> int:
        return sum(1 for m in self.values if m is None)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of dataset-wide validation.

    Missing values never appear here: they are data, not defects. Only
    semantic problems (impossible values, dangling references) do.
    """

    coverage: Mapping[str, tuple[date, date] | None]
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def render(self) -> str:
        lines = ["source coverage:"]
        for name, span in self.coverage.items():
            if span is None:
                lines.append(f"  {name}: (no data)")
            else:
                lines.append(f"  {name}: {span[0]} .. {span[1]}")
        if self.violations:
            lines.append(f"violations ({len(self.violations)}):")
            for v in self.violations:
                lines.append(f"  [{v.kind}] {v.message}")
        else:
            lines.append("violations: none")
        return "\n".join(lines)


def _coverage(series: Iterable[DailySeries]) -> tuple[date, date] | None:
    spans = [(s.start, s.end) for s in series]
    if not spans:
        return None
    return min(s for s, _ in spans), max(e for _, e in spans)


def validate_dataset(
    stations: Sequence[Station],
    pollutant_series: Mapping[tuple[str, PollutantKind], DailySeries],
    satellite_series: Mapping[tuple[str, str], DailySeries],
    weather_series: Mapping[str, DailySeries],
) -> ValidationReport:
    """Cross-check loaded sources and list semantic violations.

    The dataset is rejected upstream only on schema violations (the readers
    raise); everything found here is reported, never fatal.
    """
    violations: list[Violation] = []
    ids = [st.id for st in stations]
    known = set(ids)
    for sid in sorted({i for i in ids if ids.count(i) > 1}):
        violations.append(Violation("duplicate-station", f"station id {sid!r} declared more than once"))

    for (sid, pol), series in sorted(pollutant_series.items(),
                                     key=lambda kv: (kv[0][0], kv[0][1].value)):
        if sid not in known:
            violations.append(Violation(
                "unknown-station", f"pollutant series ({sid}, {pol}) references unknown station id {sid!r}"))
        for d, m in series.iter_days():
            if m is not None and m.quality is Quality.OBSERVED and m.value < 0.0:
                violations.append(Violation(
                    "negative-concentration",
                    f"negative concentration {m.value} for {pol} at station {sid} on {d}"))

    for (sid, band), _series in sorted(satellite_series.items()):
        if sid not in known:
            violations.append(Violation(
                "unknown-station", f"satellite series ({sid}, {band}) references unknown station id {sid!r}"))

    wind = weather_series.get("wind_dir_deg")
    if wind is not None:
        for d, m in wind.iter_days():
            if m is not None and not 0.0 <= m.value <= 360.0:
                violations.append(Violation(
                    "direction-range", f"wind direction {m.value} outside [0, 360] on {d}"))

    coverage: dict[str, tuple[date, date] | None] = {
        "pollution": _coverage(pollutant_series.values()),
        "satellite": _coverage(satellite_series.values()),
        "weather": _coverage(weather_series.values()),
    }
    return ValidationReport(coverage=coverage, violations=tuple(violations))
