"""aqcast: next-day urban air pollutant forecasting.

Combines per-station pollutant readings with daily satellite bands,
city-level weather, and static terrain descriptors to train per-pollutant
regressors, evaluate them with year-wise cross-validation, and extrapolate
predictions over a uniform city grid.
"""

from .core import (
    SATELLITE_BANDS,
    WEATHER_VARS,
    DailySeries,
    Measurement,
    PollutantKind,
    Quality,
    Station,
    day_of_year,
    validate_dataset,
    weekday,
)
from .evaluate import CvReport, loyo_cv, mae, mape, rmse
from .features import (
    Normalizer,
    WindowConfig,
    WindowedSample,
    build_windows,
    encode_cyclic,
    encode_wind,
    interpolate_dataset,
    interpolate_gaps,
)
from .ingest import LocalProjection, StationDataset, load_dataset, missingness_report
from .models import (
    ForecastModel,
    GbtConfig,
    ModelKind,
    SgdConfig,
    fit_gbt,
    fit_ols,
    fit_sgd,
    load_model,
    predict,
    save_model,
    train_model,
)
from .raster import (
    LandCoverMap,
    RasterGrid,
    TopoProfile,
    class_fractions,
    dem_profile,
    load_grid,
    radius_mean,
)

__version__ = "0.1.0"
