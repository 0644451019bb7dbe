"""Spatial-temporal synchronous graph transformer for regional case-count forecasting.

The package is plain numpy: :mod:`stsgt.autograd` supplies reverse-mode
differentiation, the other modules build on it.
"""

from .autograd import Tensor, no_grad
from .data import SplitSpec, TimeSeries, build_dataset, ingest_county_cumulative, ingest_state_cumulative
from .evaluation import ArBaseline, MetricsReport, Persistence, evaluate, mae, rmse, rmsle
from .graph import SpatialGraph, build_spatial_adjacency, build_sync_adjacency
from .model import StsgtConfig, StsgtModel
from .training import Adam, EarlyStopping, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ArBaseline",
    "EarlyStopping",
    "MetricsReport",
    "Persistence",
    "SpatialGraph",
    "SplitSpec",
    "StsgtConfig",
    "StsgtModel",
    "Tensor",
    "TimeSeries",
    "TrainConfig",
    "build_dataset",
    "build_spatial_adjacency",
    "build_sync_adjacency",
    "evaluate",
    "ingest_county_cumulative",
    "ingest_state_cumulative",
    "mae",
    "no_grad",
    "rmse",
    "rmsle",
    "train",
]
