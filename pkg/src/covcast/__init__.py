"""Covariate-aware probabilistic time-series forecasting toolkit."""

from .config import (
    QUANTILE_LEVELS,
    AugmentationConfig,
    EvalConfig,
    ModelConfig,
    SynthGenConfig,
    TrainConfig,
)
from .dataio import (
    Covariate,
    ForecastRecord,
    QuantileForecast,
    TimeSeriesSample,
    load_config,
    load_corpus,
    load_forecasts,
    save_corpus,
    save_forecasts,
)

__version__ = "0.1.0"

__all__ = [
    "QUANTILE_LEVELS",
    "AugmentationConfig",
    "Covariate",
    "EvalConfig",
    "ForecastRecord",
    "ModelConfig",
    "QuantileForecast",
    "SynthGenConfig",
    "TimeSeriesSample",
    "TrainConfig",
    "load_config",
    "load_corpus",
    "load_forecasts",
    "save_corpus",
    "save_forecasts",
    "__version__",
]
