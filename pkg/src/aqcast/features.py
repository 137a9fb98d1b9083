"""Feature engineering: encodings, gap filling, scaling, and windowing.

A training sample for target day t concatenates, in this fixed order:

* per-day blocks for days t-w .. t-1 (oldest first), each holding the 6
  satellite bands, the 10 wind-encoded weather values, and the 13 static
  terrain values (replicated per day) -- 29 values per day;
* 6 cyclic encodings (day of year / month / weekday) of day t-1;
* the 10 observed weather values of day t, standing in for a forecast.

That makes ``29*w + 16`` features. The order is frozen in
:func:`feature_names` and embedded in model files, so a prediction-time
vector can never silently permute.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (
    SATELLITE_BANDS,
    WEATHER_VARS,
    DailySeries,
    Measurement,
    PollutantKind,
    Quality,
    day_of_year,
    weekday,
)
from .errors import AllMissing, ConfigError, DimensionMismatch, DomainError, GapError
from .ingest import StationDataset
from .raster import LANDCOVER_CATEGORIES, TopoProfile

__all__ = [
    "WEATHER_ENCODED",
    "TOPO_NAMES",
    "TEMPORAL_NAMES",
    "encode_wind",
    "encode_cyclic",
    "interpolate_gaps",
    "interpolate_dataset",
    "Normalizer",
    "WindowConfig",
    "WindowedSample",
    "feature_names",
    "weather_block",
    "day_block",
    "temporal_block",
    "compose_vector",
    "FeatureAssembler",
    "build_windows",
    "write_features_csv",
]

# Weather order after the direction angle is replaced by its sin/cos pair.
WEATHER_ENCODED: tuple[str, ...] = (
    "temp", "dewpoint", "humidity", "precip", "wind_speed",
    "wd_sin", "wd_cos", "pressure", "cloud_cover", "solar_rad",
)

TOPO_NAMES: tuple[str, ...] = (
    "alt_point", "alt_100m", "alt_1km",
) + tuple(f"frac_{c}" for c in LANDCOVER_CATEGORIES)

TEMPORAL_NAMES: tuple[str, ...] = (
    "doy_sin", "doy_cos", "month_sin", "month_cos", "weekday_sin", "weekday_cos",
)

FEATURES_PER_DAY = len(SATELLITE_BANDS) + len(WEATHER_ENCODED) + len(TOPO_NAMES)


def encode_wind(alpha: float) -> tuple[float, float]:
    """Trigonometric pair for a wind direction angle in degrees.

    The angle is reduced modulo 360 first, so 0 and 360 encode identically.
    """
    if not 0.0 <= alpha <= 360.0:
        raise DomainError(f"wind direction {alpha} outside [0, 360]")
    a = math.radians(alpha % 360.0)
    return math.sin(a), math.cos(a)


def encode_cyclic(f: int, period: int) -> tuple[float, float]:
    """(sin, cos) of a periodic integer feature with zero-based phase f."""
    if period < 1:
        raise DomainError(f"period must be >= 1, got {period}")
    if not 0 <= f < period:
        raise DomainError(f"phase {f} outside [0, {period})")
    a = 2.0 * math.pi * f / period
    return math.sin(a), math.cos(a)


def interpolate_gaps(series: DailySeries) -> DailySeries:
    """Fill gaps: interior runs linearly, edge runs with the nearest value.

    Filled entries are tagged INTERPOLATED. Idempotent; raises AllMissing
    when there is nothing to interpolate from.
    """
    known = [(i, m.value) for i, m in enumerate(series.values) if m is not None]
    if not known:
        raise AllMissing("series has no observed value")
    out = list(series.values)
    first_i, first_v = known[0]
    for i in range(first_i):
        out[i] = Measurement(first_v, Quality.INTERPOLATED)
    last_i, last_v = known[-1]
    for i in range(last_i + 1, len(out)):
        out[i] = Measurement(last_v, Quality.INTERPOLATED)
    for (i0, v0), (i1, v1) in zip(known, known[1:]):
        for k in range(i0 + 1, i1):
            out[k] = Measurement(v0 + (v1 - v0) * ((k - i0) / (i1 - i0)),
                                 Quality.INTERPOLATED)
    return DailySeries(series.start, tuple(out))


def interpolate_dataset(dataset: StationDataset) -> StationDataset:
    """Gap-fill every satellite and weather series; pollutants stay as read.

    Target readings are never interpolated -- a missing target drops the
    record instead.
    """
    sat: dict[str, dict[str, DailySeries]] = {}
    for sid, bands in dataset.satellite.items():
        sat[sid] = {}
        for band, series in bands.items():
            try:
                sat[sid][band] = interpolate_gaps(series)
            except AllMissing:
                raise AllMissing(
                    f"satellite band {band} at station {sid} has no observed value") from None
    wx: dict[str, DailySeries] = {}
    for var, series in dataset.weather.items():
        try:
            wx[var] = interpolate_gaps(series)
        except AllMissing:
            raise AllMissing(f"weather variable {var} has no observed value") from None
    return replace(dataset, satellite=sat, weather=wx)


@dataclass(frozen=True)
class Normalizer:
    """Min-max scaler learned from training rows only.

    apply() maps x to (x - min) / (max - min); constant columns map to 0.
    Values outside the training range are *not* clamped.
    """

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, feature_names: Sequence[str] | None = None) -> "Normalizer":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("fit needs a 2-D matrix with at least one row")
        names = tuple(feature_names) if feature_names is not None else tuple(
            f"x{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionMismatch(
                f"{X.shape[1]} columns but {len(names)} feature names")
        return cls(feature_names=names, mins=X.min(axis=0), maxs=X.max(axis=0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        d = X.shape[-1] if X.ndim else 0
        if d != len(self.feature_names):
            raise DimensionMismatch(
                f"input has {d} features, normalizer was fitted on {len(self.feature_names)}")
        span = self.maxs - self.mins
        safe = np.where(span == 0.0, 1.0, span)
        out = (X - self.mins) / safe
        return np.where(span == 0.0, 0.0, out)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "Normalizer":
        return cls(feature_names=tuple(payload["feature_names"]),
                   mins=np.array(payload["mins"], dtype=float),
                   maxs=np.array(payload["maxs"], dtype=float))


@dataclass(frozen=True)
class WindowConfig:
    """Days of history feeding each sample; 1, 7 and 14 mirror the study."""

    w: int

    def __post_init__(self) -> None:
        if self.w < 1:
            raise ConfigError(f"window must be >= 1 day, got {self.w}")


@dataclass(frozen=True)
class WindowedSample:
    station_id: str
    target_date: date
    features: np.ndarray
    target: float
    feature_names: tuple[str, ...]


def feature_names(w: int) -> tuple[str, ...]:
    """The frozen feature order for a w-day window (length 29*w + 16)."""
    names: list[str] = []
    for k in range(w, 0, -1):
        names.extend(f"sat_{b}[t-{k}]" for b in SATELLITE_BANDS)
        names.extend(f"wx_{v}[t-{k}]" for v in WEATHER_ENCODED)
        names.extend(f"topo_{t}[t-{k}]" for t in TOPO_NAMES)
    names.extend(f"time_{t}[t-1]" for t in TEMPORAL_NAMES)
    names.extend(f"fcst_{v}[t]" for v in WEATHER_ENCODED)
    return tuple(names)


def weather_block(raw: Sequence[float]) -> list[float]:
    """Encode one day of raw weather (order WEATHER_VARS) into 10 values."""
    if len(raw) != len(WEATHER_VARS):
        raise DimensionMismatch(f"expected {len(WEATHER_VARS)} weather values, got {len(raw)}")
    values = dict(zip(WEATHER_VARS, raw))
    wd_sin, wd_cos = encode_wind(values["wind_dir_deg"])
    return [values["temp"], values["dewpoint"], values["humidity"], values["precip"],
            values["wind_speed"], wd_sin, wd_cos, values["pressure"],
            values["cloud_cover"], values["solar_rad"]]


def topo_block(topo: TopoProfile, *, context: str = "") -> list[float]:
    """Static 13-value terrain block; refuses profiles with nodata holes."""
    for name, v in (("alt_point", topo.alt_point), ("alt_100m", topo.alt_100m),
                    ("alt_1km", topo.alt_1km)):
        if v is None:
            raise GapError(f"terrain {name} unavailable{context}; features cannot hold gaps")
    return [topo.alt_point, topo.alt_100m, topo.alt_1km, *topo.landcover_fractions]


def day_block(sat_values: Sequence[float], weather_raw: Sequence[float],
              topo_values: Sequence[float]) -> np.ndarray:
    """One day's 29 dynamic+static values in feature order."""
    if len(sat_values) != len(SATELLITE_BANDS):
        raise DimensionMismatch(f"expected {len(SATELLITE_BANDS)} band values, got {len(sat_values)}")
    return np.array([*sat_values, *weather_block(weather_raw), *topo_values], dtype=float)


def temporal_block(d: date) -> list[float]:
    """Six cyclic values for a calendar day (year / month / week phases)."""
    doy_sin, doy_cos = encode_cyclic(day_of_year(d), 366)
    mon_sin, mon_cos = encode_cyclic(d.month - 1, 12)
    wd_sin, wd_cos = encode_cyclic(weekday(d), 7)
    return [doy_sin, doy_cos, mon_sin, mon_cos, wd_sin, wd_cos]


def compose_vector(day_blocks: Sequence[np.ndarray] | np.ndarray, t: date,
                   fcst_weather_raw: Sequence[float]) -> np.ndarray:
    """Assemble the final vector from per-day blocks (oldest first) for day t."""
    blocks = np.asarray(day_blocks, dtype=float)
    parts = [blocks.reshape(-1),
             np.array(temporal_block(t - timedelta(days=1)), dtype=float),
             np.array(weather_block(fcst_weather_raw), dtype=float)]
    return np.concatenate(parts)


class FeatureAssembler:
    """Builds feature vectors for stations from an interpolated dataset.

    Day blocks are computed once per (station, day) and copied into every
    window that covers the day, so overlapping samples agree bit for bit.
    """

    def __init__(self, dataset: StationDataset, config: WindowConfig):
        self.dataset = dataset
        self.w = config.w
        self.names = feature_names(self.w)
        if dataset.n_days <= self.w:
            raise ConfigError(
                f"dataset spans {dataset.n_days} days; needs more than w={self.w}")
        self._weather_raw = self._collect_weather()
        self._blocks = {st.id: self._station_blocks(st.id) for st in dataset.stations}

    def _collect_weather(self) -> list[list[float]]:
        rows: list[list[float]] = []
        for off in range(self.dataset.n_days):
            row: list[float] = []
            for var in WEATHER_VARS:
                m = self.dataset.weather[var].values[off]
                if m is None:
                    raise GapError(
                        f"weather {var} missing on {self.dataset.date_at(off)}; "
                        "interpolate the dataset before windowing")
                row.append(m.value)
            rows.append(row)
        return rows

    def _station_blocks(self, sid: str) -> np.ndarray:
        topo_values = topo_block(self.dataset.topo[sid], context=f" at station {sid}")
        blocks = np.empty((self.dataset.n_days, FEATURES_PER_DAY), dtype=float)
        for off in range(self.dataset.n_days):
            sat_values = []
            for band in SATELLITE_BANDS:
                m = self.dataset.satellite[sid][band].values[off]
                if m is None:
                    raise GapError(
                        f"satellite {band} missing at station {sid} on "
                        f"{self.dataset.date_at(off)}; interpolate the dataset before windowing")
                sat_values.append(m.value)
            blocks[off] = day_block(sat_values, self._weather_raw[off], topo_values)
        return blocks

    def vector(self, station_id: str, t: date) -> np.ndarray:
        """Feature vector for predicting station ``station_id`` on day t."""
        i = (t - self.dataset.start).days
        if i < self.w or i >= self.dataset.n_days:
            raise DomainError(
                f"target day {t} needs days {t - timedelta(days=self.w)}..{t} inside "
                f"{self.dataset.start}..{self.dataset.end}")
        blocks = self._blocks[station_id][i - self.w:i]
        return compose_vector(blocks, t, self._weather_raw[i])

    def samples(self, pollutant: PollutantKind) -> list[WindowedSample]:
        out: list[WindowedSample] = []
        for st in self.dataset.stations:
            if pollutant not in st.measured:
                continue
            series = self.dataset.pollutants[st.id][pollutant]
            for i in range(self.w, self.dataset.n_days):
                m = series.values[i]
                if m is None:
                    continue  # missing target drops the record
                t = self.dataset.date_at(i)
                out.append(WindowedSample(
                    station_id=st.id, target_date=t,
                    features=self.vector(st.id, t),
                    target=m.value, feature_names=self.names))
        return out


def build_windows(dataset: StationDataset, pollutant: PollutantKind,
                  config: WindowConfig) -> list[WindowedSample]:
    """All valid training samples for one pollutant; empty when none exist.

    The dataset's satellite and weather series must already be gap-free
    (see :func:`interpolate_dataset`).
    """
    return FeatureAssembler(dataset, config).samples(pollutant)


def sample_matrix(samples: Sequence[WindowedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (X, y) suitable for the learners."""
    if not samples:
        raise ValueError("no samples to stack")
    X = np.stack([s.features for s in samples])
    y = np.array([s.target for s in samples], dtype=float)
    return X, y


def write_features_csv(samples: Sequence[WindowedSample], path: str | Path) -> None:
    """Dump samples with header = feature names + target/station/date."""
    if not samples:
        raise ValueError("no samples to write")
    names = samples[0].feature_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["target", "station_id", "date"])
        for s in samples:
            w.writerow([repr(float(v)) for v in s.features]
                       + [repr(s.target), s.station_id, s.target_date.isoformat()])
