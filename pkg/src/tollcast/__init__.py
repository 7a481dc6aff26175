"""Toll and travel-time-difference forecasting on a dynamically tolled corridor.

Pipeline: synthesize or ingest toll/speed/volume feeds, fuse them onto a
6-minute grid with per-horizon targets, train persistence / random forest /
MLP / LSTM regressors per horizon, and evaluate against the persistence
baseline with MAE, MAPE, and R-squared.
"""

from .core import (
    HORIZONS,
    Money,
    RouteSpec,
    StudyConfig,
    TimeGrid,
    TollingWindow,
    default_config,
    load_config,
)
from .errors import (
    ConfigError,
    DataFormatError,
    EmptyTableError,
    GridRangeError,
    NumericError,
    SchemaMismatchError,
    TollcastError,
)

__version__ = "0.1.0"

__all__ = [
    "HORIZONS",
    "Money",
    "RouteSpec",
    "StudyConfig",
    "TimeGrid",
    "TollingWindow",
    "default_config",
    "load_config",
    "ConfigError",
    "DataFormatError",
    "EmptyTableError",
    "GridRangeError",
    "NumericError",
    "SchemaMismatchError",
    "TollcastError",
    "__version__",
]
