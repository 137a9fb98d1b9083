"""Command-line pipeline: validate, report, train, evaluate, predict.

One JSON config drives everything; flags only pick the subcommand, the
config file, the output directory, verbosity, and the seed. Paths in the
config resolve relative to the config file and can be overridden with
``AQCAST_PATH_<NAME>`` environment variables. All outputs are
deterministic given identical inputs and seed, so reruns are byte-stable.

Exit codes: 0 success, 1 data error, 2 configuration error. Set
``AQCAST_ERROR_JSON=1`` (or ``"error_json": true`` in the config) to get
errors as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

from .core import SATELLITE_BANDS, WEATHER_VARS, DailySeries, PollutantKind, validate_dataset
from .errors import AqcastError, AllMissing, ConfigError, DimensionMismatch, EmptyOutput, GapError
from .evaluate import CvReport, loyo_cv, render_results_table, write_results_csv
from .features import (
    FeatureAssembler,
    WindowConfig,
    build_windows,
    compose_vector,
    day_block,
    feature_names,
    interpolate_dataset,
    interpolate_gaps,
    sample_matrix,
    topo_block,
)
from .ingest import (
    LocalProjection,
    extract_satellite,
    load_dataset,
    load_satellite_rasters,
    missingness_report,
    read_pollution,
    read_satellite_csv,
    read_stations,
    read_weather,
    write_missingness_csv,
)
from .models import (
    ForecastModel,
    GbtConfig,
    ModelKind,
    SgdConfig,
    load_model,
    save_model,
    train_model,
)
from .raster import load_classmap, load_grid, radius_mean, topo_profile

log = logging.getLogger("aqcast.cli")

_PATH_KEYS = ("stations", "pollution", "weather", "satellite", "satellite_rasters",
              "dem", "landcover", "classmap")


@dataclass(frozen=True)
class GridSpec:
    """Uniform prediction grid in raster CRS meters; full cells only.

    Cells are ordered row-major from the south-west corner:
    cell_id = iy * ncols + ix with x growing east, y growing north.
    """

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    cellsize: float = 500.0

    def __post_init__(self) -> None:
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ConfigError("grid box must have positive area")
        if self.cellsize <= 0:
            raise ConfigError("grid cellsize must be > 0")

    @property
    def ncols(self) -> int:
        return int(math.floor((self.xmax - self.xmin) / self.cellsize + 1e-9))

    @property
    def nrows(self) -> int:
        return int(math.floor((self.ymax - self.ymin) / self.cellsize + 1e-9))

    def centers(self) -> list[tuple[int, float, float]]:
        out = []
        for iy in range(self.nrows):
            y = self.ymin + (iy + 0.5) * self.cellsize
            for ix in range(self.ncols):
                x = self.xmin + (ix + 0.5) * self.cellsize
                out.append((iy * self.ncols + ix, x, y))
        return out


@dataclass(frozen=True)
class GridTask:
    spec: GridSpec
    pollutant: PollutantKind
    kind: str
    w: int
    target_date: date


@dataclass(frozen=True)
class RunConfig:
    paths: dict[str, Path]
    projection: LocalProjection | None
    pollutants: tuple[PollutantKind, ...]
    models: tuple[str, ...]
    windows: tuple[int, ...]
    gbt: GbtConfig
    sgd: SgdConfig
    seed: int
    workers: int
    out_dir: Path
    predict_date: date | None
    grid: GridTask | None
    error_json: bool


def _parse_config_date(raw: object, field: str) -> date:
    try:
        return date.fromisoformat(str(raw))
    except ValueError:
        raise ConfigError(f"{field}: invalid ISO date {raw!r}") from None


def load_config(config_path: str | Path, *, seed: int | None = None,
                out_dir: str | Path | None = None) -> RunConfig:
    """Read and validate the run configuration."""
    config_path = Path(config_path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    base = config_path.parent
    paths: dict[str, Path] = {}
    raw_paths = raw.get("paths", {})
    if not isinstance(raw_paths, dict):
        raise ConfigError("'paths' must be an object")
    for key in _PATH_KEYS:
        override = os.environ.get(f"AQCAST_PATH_{key.upper()}")
        value = override if override is not None else raw_paths.get(key)
        if value is not None:
            p = Path(value)
            paths[key] = p if p.is_absolute() else base / p
    for key in ("stations", "pollution", "weather"):
        if key not in paths:
            raise ConfigError(f"config is missing required path {key!r}")
    if "satellite" not in paths and "satellite_rasters" not in paths:
        raise ConfigError("config needs a 'satellite' CSV or a 'satellite_rasters' directory")
    missing = [str(p) for k, p in sorted(paths.items()) if not p.exists()]
    if missing:
        raise ConfigError(f"referenced inputs do not exist: {', '.join(missing)}")

    proj = None
    if "projection" in raw:
        block = raw["projection"]
        try:
            proj = LocalProjection(ref_lon=float(block["ref_lon"]),
                                   ref_lat=float(block["ref_lat"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("'projection' needs numeric ref_lon and ref_lat") from None

    valid_names = ", ".join(p.value for p in PollutantKind)
    pollutants: list[PollutantKind] = []
    for name in raw.get("pollutants", [p.value for p in PollutantKind]):
        try:
            pollutants.append(PollutantKind(name))
        except ValueError:
            raise ConfigError(f"unknown pollutant {name!r} (valid: {valid_names})") from None

    kinds: list[str] = []
    for kind in raw.get("models", list(ModelKind.ALL)):
        if kind not in ModelKind.ALL:
            raise ConfigError(f"unknown model {kind!r} (valid: {', '.join(ModelKind.ALL)})")
        kinds.append(kind)

    windows = tuple(int(w) for w in raw.get("windows", [1, 7, 14]))
    if not windows or any(w < 1 for w in windows):
        raise ConfigError(f"windows must all be >= 1, got {list(windows)}")

    the_seed = int(seed if seed is not None else raw.get("seed", 0))
    sgd_raw = dict(raw.get("sgd", {}))
    sgd_raw.setdefault("seed", the_seed)
    gbt_raw = dict(raw.get("gbt", {}))
    try:
        sgd_cfg = SgdConfig(**sgd_raw)
        gbt_cfg = GbtConfig(**gbt_raw)
    except TypeError as exc:
        raise ConfigError(f"bad learner config: {exc}") from None

    out = Path(out_dir) if out_dir is not None else base / raw.get("out_dir", "out")

    predict_date = None
    if "predict" in raw and isinstance(raw["predict"], dict) and "date" in raw["predict"]:
        predict_date = _parse_config_date(raw["predict"]["date"], "predict.date")

    grid_task = None
    if "grid" in raw:
        g = raw["grid"]
        try:
            spec = GridSpec(xmin=float(g["xmin"]), ymin=float(g["ymin"]),
                            xmax=float(g["xmax"]), ymax=float(g["ymax"]),
                            cellsize=float(g.get("cellsize", 500.0)))
            kind = g["model"]
            if kind not in ModelKind.ALL:
                raise ConfigError(f"grid.model {kind!r} unknown")
            try:
                grid_pollutant = PollutantKind(g["pollutant"])
            except ValueError:
                raise ConfigError(
                    f"grid.pollutant {g['pollutant']!r} unknown (valid: {valid_names})") from None
            grid_task = GridTask(spec=spec, pollutant=grid_pollutant, kind=kind,
                                 w=int(g["w"]),
                                 target_date=_parse_config_date(g["date"], "grid.date"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad grid block: {exc}") from None

    return RunConfig(
        paths=paths, projection=proj, pollutants=tuple(pollutants), models=tuple(kinds),
        windows=windows, gbt=gbt_cfg, sgd=sgd_cfg, seed=the_seed,
        workers=max(1, int(raw.get("workers", 1))), out_dir=out,
        predict_date=predict_date, grid=grid_task,
        error_json=bool(raw.get("error_json", False)),
    )


def _load_dataset(cfg: RunConfig, *, with_topo: bool = True):
    return load_dataset(
        cfg.paths["stations"], cfg.paths["pollution"], cfg.paths["weather"],
        satellite_path=cfg.paths.get("satellite"),
        satellite_rasters_dir=cfg.paths.get("satellite_rasters"),
        dem_path=cfg.paths.get("dem"), landcover_path=cfg.paths.get("landcover"),
        classmap_path=cfg.paths.get("classmap"),
        projection=cfg.projection, with_topo=with_topo)


def _model_path(cfg: RunConfig, pollutant: PollutantKind, kind: str, w: int) -> Path:
    return cfg.out_dir / "models" / f"{pollutant.value}_{kind}_w{w}.json"


def cmd_validate(cfg: RunConfig) -> int:
    stations = read_stations(cfg.paths["stations"])
    pollution = read_pollution(cfg.paths["pollution"], None)
    if "satellite" in cfg.paths:
        satellite = read_satellite_csv(cfg.paths["satellite"], None)
    else:
        proj = cfg.projection or LocalProjection.centered_on(stations)
        xy = {s.id: proj.to_xy(s.lon, s.lat) for s in stations}
        satellite = extract_satellite(
            load_satellite_rasters(cfg.paths["satellite_rasters"]), stations, xy)
    weather = read_weather(cfg.paths["weather"])
    report = validate_dataset(stations, pollution, satellite, weather)
    print(report.render())
    return 0


def cmd_report(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg, with_topo=False)
    report = missingness_report(dataset)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "missingness.csv"
    write_missingness_csv(report, out)
    print(f"missingness report written to {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    dataset = interpolate_dataset(_load_dataset(cfg))
    model_dir = cfg.out_dir / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    for pollutant in cfg.pollutants:
        for w in cfg.windows:
            samples = build_windows(dataset, pollutant, WindowConfig(w))
            if not samples:
                raise EmptyOutput(f"no training samples for {pollutant} at w={w}")
            X, y = sample_matrix(samples)
            names = samples[0].feature_names
            for kind in cfg.models:
                model = train_model(kind, X, y, pollutant=pollutant, w=w,
                                    feature_names=names, sgd=cfg.sgd, gbt=cfg.gbt)
                path = _model_path(cfg, pollutant, kind, w)
                save_model(model, path)
                log.info("trained %s", path)
    print(f"models written under {model_dir}")
    return 0


def _evaluate_cell(args) -> list[CvReport]:
    dataset, pollutant, w, kinds, sgd, gbt = args
    samples = build_windows(dataset, pollutant, WindowConfig(w))
    return [loyo_cv(dataset, pollutant, kind, w, sgd=sgd, gbt=gbt, samples=samples)
            for kind in kinds]


def cmd_evaluate(cfg: RunConfig) -> int:
    dataset = interpolate_dataset(_load_dataset(cfg))
    cells = [(dataset, pollutant, w, cfg.models, cfg.sgd, cfg.gbt)
             for pollutant in cfg.pollutants for w in cfg.windows]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            grouped = list(pool.map(_evaluate_cell, cells))
    else:
        grouped = [_evaluate_cell(cell) for cell in cells]
    reports = [report for group in grouped for report in group]
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(reports, cfg.out_dir / "results.csv")
    table = render_results_table(reports, pollutants=cfg.pollutants,
                                 kinds=cfg.models, windows=cfg.windows)
    (cfg.out_dir / "results_table.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"results written to {cfg.out_dir / 'results.csv'}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    dataset = interpolate_dataset(_load_dataset(cfg))
    t = cfg.predict_date or dataset.end
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "predictions.csv"
    rows: list[list[str]] = []
    for w in cfg.windows:
        assembler = FeatureAssembler(dataset, WindowConfig(w))
        for pollutant in cfg.pollutants:
            for kind in cfg.models:
                model = _load_model_checked(cfg, pollutant, kind, w, assembler.names)
                for st in dataset.stations:
                    if pollutant not in st.measured:
                        continue
                    vec = assembler.vector(st.id, t)
                    pred = model.predict(vec)
                    rows.append([st.id, t.isoformat(), pollutant.value, kind, str(w),
                                 repr(float(pred))])
    rows.sort()
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("station_id,date,pollutant,model,w,prediction\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    print(f"predictions written to {out}")
    return 0


def _load_model_checked(cfg: RunConfig, pollutant: PollutantKind, kind: str, w: int,
                        names: tuple[str, ...]) -> ForecastModel:
    path = _model_path(cfg, pollutant, kind, w)
    if not path.exists():
        raise GapError(f"model file {path} not found; run 'train' first")
    model = load_model(path)
    if model.feature_names != names:
        raise DimensionMismatch(
            f"{path}: model expects {len(model.feature_names)} features, "
            f"pipeline produces {len(names)}; feature orders differ")
    return model


def cmd_predict_grid(cfg: RunConfig) -> int:
    if cfg.grid is None:
        raise ConfigError("config has no 'grid' block; predict-grid needs one")
    task = cfg.grid
    t, w = task.target_date, task.w
    model = _load_model_checked(cfg, task.pollutant, task.kind, w, feature_names(w))

    for key in ("dem", "landcover", "classmap", "satellite_rasters"):
        if key not in cfg.paths:
            raise ConfigError(f"predict-grid needs path {key!r} in the config")
    dem = load_grid(cfg.paths["dem"])
    landcover = load_grid(cfg.paths["landcover"])
    cover = load_classmap(cfg.paths["classmap"])
    weather = read_weather(cfg.paths["weather"])

    window_days = [t - timedelta(days=k) for k in range(w, 0, -1)]
    for d in window_days + [t]:
        for var in WEATHER_VARS:
            series = weather[var]
            if not series.start <= d <= series.end:
                raise GapError(f"weather does not cover {d} (needed for the {w}-day window)")
    weather_raw = {
        d: [weather[var].at(d).value for var in WEATHER_VARS] for d in window_days + [t]}

    rasters = load_satellite_rasters(cfg.paths["satellite_rasters"], dates=window_days)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.out_dir / "grid_predictions.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("cell_id,x,y,prediction\n")
        for cell_id, x, y in task.spec.centers():
            prediction = _predict_cell(model, dem, landcover, cover, rasters,
                                       weather_raw, window_days, t, w, x, y)
            fh.write(f"{cell_id},{x!r},{y!r},{prediction}\n")
    print(f"grid predictions written to {out}")
    return 0


def _predict_cell(model, dem, landcover, cover, rasters, weather_raw, window_days,
                  t: date, w: int, x: float, y: float) -> str:
    """One cell's prediction, or '' when its inputs have unfillable holes."""
    try:
        topo_values = topo_block(topo_profile(dem, landcover, cover, x, y),
                                 context=f" at cell ({x}, {y})")
    except GapError:
        return ""
    band_values: dict[str, list[float]] = {}
    for band in SATELLITE_BANDS:
        raw: list[float | None] = []
        for d in window_days:
            grid = rasters.get(d, {}).get(band)
            raw.append(None if grid is None else radius_mean(grid, x, y, 500.0))
        try:
            series = interpolate_gaps(DailySeries.from_floats(window_days[0], raw))
        except AllMissing:
            return ""
        band_values[band] = [m.value for m in series.values]
    blocks = [day_block([band_values[b][k] for b in SATELLITE_BANDS],
                        weather_raw[d], topo_values)
              for k, d in enumerate(window_days)]
    vec = compose_vector(blocks, t, weather_raw[t])
    return repr(float(model.predict(vec)))


def _emit_error(exc: AqcastError, as_json: bool) -> None:
    if as_json:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


_COMMANDS = {
    "validate": cmd_validate,
    "report": cmd_report,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "predict-grid": cmd_predict_grid,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="aqcast",
        description="Next-day urban air pollutant forecasting pipeline.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    error_json = os.environ.get("AQCAST_ERROR_JSON", "") not in ("", "0")
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        error_json = error_json or cfg.error_json
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        _emit_error(exc, error_json)
        return 2
    except AqcastError as exc:
        _emit_error(exc, error_json)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
