"""Metrics, year-wise cross-validation, and results rendering.

Each calendar year present in the samples serves once as the held-out
fold (membership decided by the target date), and aggregate metrics are
the unweighted mean over folds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import PollutantKind
from .errors import (
    AllExcluded,
    EmptyInput,
    EmptyOutput,
    InsufficientYears,
    LengthMismatch,
    MissingCell,
)
from .features import WindowConfig, WindowedSample, build_windows, interpolate_dataset, sample_matrix
from .ingest import StationDataset
from .models import GbtConfig, ModelKind, SgdConfig, train_model

__all__ = [
    "MAPE_ACTUAL_FLOOR",
    "mae",
    "mape",
    "rmse",
    "FoldSpec",
    "FoldResult",
    "CvReport",
    "loyo_cv",
    "write_results_csv",
    "render_results_table",
]

# Actuals smaller than this are excluded from MAPE (their count is reported).
MAPE_ACTUAL_FLOOR = 1e-6

_KIND_LABEL = {ModelKind.OLS: "OLS", ModelKind.SGD: "SGD", ModelKind.GBT: "GBT"}


def _paired(pred: Sequence[float], actual: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.ndim != 1 or a.ndim != 1:
        raise LengthMismatch("metrics expect 1-D vectors")
    if p.shape[0] != a.shape[0]:
        raise LengthMismatch(f"pred has {p.shape[0]} values, actual has {a.shape[0]}")
    if p.shape[0] == 0:
        raise EmptyInput("metrics need at least one sample")
    return p, a


def mae(pred: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute difference."""
    p, a = _paired(pred, actual)
    return float(np.mean(np.abs(p - a)))


def mape(pred: Sequence[float], actual: Sequence[float]) -> tuple[float, int]:
    """Mean absolute relative error as a fraction, plus the excluded count.

    Samples with |actual| below MAPE_ACTUAL_FLOOR are skipped so near-zero
    days cannot blow the metric up.
    """
    p, a = _paired(pred, actual)
    mask = np.abs(a) >= MAPE_ACTUAL_FLOOR
    excluded = int(mask.size - mask.sum())
    if excluded == mask.size:
        raise AllExcluded("every actual value is ~0; MAPE undefined")
    value = float(np.mean(np.abs(p[mask] - a[mask]) / np.abs(a[mask])))
    return value, excluded


def rmse(pred: Sequence[float], actual: Sequence[float]) -> float:
    """Root of the mean squared difference."""
    p, a = _paired(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass(frozen=True)
class FoldSpec:
    test_year: int
    train_years: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.test_year in self.train_years:
            raise ValueError(f"test year {self.test_year} also appears in train years")


@dataclass(frozen=True)
class FoldResult:
    test_year: int
    mae: float
    mape: float
    rmse: float
    n_samples: int
    n_mape_excluded: int


@dataclass(frozen=True)
class CvReport:
    """All folds for one (pollutant, model kind, window) cell."""

    pollutant: PollutantKind
    kind: str
    w: int
    folds: tuple[FoldResult, ...]

    def aggregate(self, metric: str) -> float:
        return float(np.mean([getattr(f, metric) for f in self.folds]))

    @property
    def mae(self) -> float:
        return self.aggregate("mae")

    @property
    def mape(self) -> float:
        return self.aggregate("mape")

    @property
    def rmse(self) -> float:
        return self.aggregate("rmse")


def year_folds(years: Iterable[int]) -> list[FoldSpec]:
    """One spec per distinct year, each tested against the rest."""
    distinct = sorted(set(years))
    if len(distinct) < 2:
        raise InsufficientYears(
            f"cross-validation needs >= 2 distinct years, found {distinct}")
    return [FoldSpec(test_year=y, train_years=tuple(x for x in distinct if x != y))
            for y in distinct]


def loyo_cv(
    dataset: StationDataset,
    pollutant: PollutantKind,
    kind: str,
    w: int,
    *,
    sgd: SgdConfig | None = None,
    gbt: GbtConfig | None = None,
    samples: Sequence[WindowedSample] | None = None,
) -> CvReport:
    """Leave-one-year-out evaluation of one model kind on one pollutant.

    Scaling is refitted on each fold's training rows only. Precomputed
    ``samples`` may be passed to share window building across model kinds.
    """
    if samples is None:
        samples = build_windows(interpolate_dataset(dataset), pollutant, WindowConfig(w))
    if not samples:
        raise EmptyOutput(f"no usable samples for {pollutant} at w={w}")
    folds = year_folds(s.target_date.year for s in samples)
    names = samples[0].feature_names
    results: list[FoldResult] = []
    for spec in folds:
        train = [s for s in samples if s.target_date.year != spec.test_year]
        test = [s for s in samples if s.target_date.year == spec.test_year]
        X_train, y_train = sample_matrix(train)
        X_test, y_test = sample_matrix(test)
        model = train_model(kind, X_train, y_train, pollutant=pollutant, w=w,
                            feature_names=names, sgd=sgd, gbt=gbt)
        preds = np.asarray(model.predict(X_test), dtype=float)
        mape_value, excluded = mape(preds, y_test)
        results.append(FoldResult(
            test_year=spec.test_year,
            mae=mae(preds, y_test),
            mape=mape_value,
            rmse=rmse(preds, y_test),
            n_samples=len(test),
            n_mape_excluded=excluded,
        ))
    return CvReport(pollutant=pollutant, kind=kind, w=w, folds=tuple(results))


def _sorted_reports(reports: Iterable[CvReport]) -> list[CvReport]:
    pol_order = {p: i for i, p in enumerate(PollutantKind)}
    kind_order = {k: i for i, k in enumerate(ModelKind.ALL)}
    return sorted(reports, key=lambda r: (pol_order[r.pollutant], kind_order[r.kind], r.w))


def write_results_csv(reports: Iterable[CvReport], path: str | Path) -> None:
    """Per-fold rows plus one aggregate row (fold_year=ALL) per cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pollutant", "model", "w", "fold_year", "mae", "mape", "rmse",
                         "n_samples", "n_mape_excluded"])
        for report in _sorted_reports(reports):
            for fold in report.folds:
                writer.writerow([report.pollutant.value, report.kind, report.w,
                                 fold.test_year, repr(fold.mae), repr(fold.mape),
                                 repr(fold.rmse), fold.n_samples, fold.n_mape_excluded])
            writer.writerow([report.pollutant.value, report.kind, report.w, "ALL",
                             repr(report.mae), repr(report.mape), repr(report.rmse),
                             sum(f.n_samples for f in report.folds),
                             sum(f.n_mape_excluded for f in report.folds)])


def render_results_table(
    reports: Iterable[CvReport],
    *,
    pollutants: Sequence[PollutantKind] | None = None,
    kinds: Sequence[str] | None = None,
    windows: Sequence[int] | None = None,
) -> str:
    """Aligned text table over the full (pollutant, model, w) grid.

    The best model per (pollutant, w, metric) is marked ``**bold**``.
    Raises MissingCell when the requested grid is not fully covered.
    """
    by_cell: dict[tuple[PollutantKind, str, int], CvReport] = {}
    for r in reports:
        by_cell[(r.pollutant, r.kind, r.w)] = r
    if pollutants is None:
        present = {r.pollutant for r in by_cell.values()}
        pollutants = [p for p in PollutantKind if p in present]
    if kinds is None:
        present_kinds = {r.kind for r in by_cell.values()}
        kinds = [k for k in ModelKind.ALL if k in present_kinds]
    if windows is None:
        windows = sorted({r.w for r in by_cell.values()})
    absent = [(p.value, k, w) for p in pollutants for k in kinds for w in windows
              if (p, k, w) not in by_cell]
    if absent:
        raise MissingCell(f"no results for: {absent}")

    metrics = ("mae", "mape", "rmse")
    header = ["pollutant", "model"]
    for w in windows:
        header.extend(f"w={w} {m.upper()}" for m in metrics)
    rows: list[list[str]] = []
    for p in pollutants:
        best: dict[tuple[int, str], str] = {}
        for w in windows:
            for m in metrics:
                winner = min(kinds, key=lambda k: by_cell[(p, k, w)].aggregate(m))
                best[(w, m)] = winner
        for k in kinds:
            row = [p.value, _KIND_LABEL.get(k, k)]
            for w in windows:
                for m in metrics:
                    cell = f"{by_cell[(p, k, w)].aggregate(m):.4g}"
                    if best[(w, m)] == k:
                        cell = f"**{cell}**"
                    row.append(cell)
            rows.append(row)

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"
