"""The four predictors with a uniform train/predict/save/load contract."""

from ..core import AdamParams, ForestParams, LstmParams, MlpParams
from .artifact import FORMAT_VERSION, ModelArtifact, load_model, save_model
from .forest import ForestRegressor, Tree, fit_tree
from .harness import (
    ALGORITHMS,
    build_windows,
    estimator_from_artifact,
    model_seed,
    predict_rows,
    rows_for_days,
    train_model,
    window_ready,
)
from .lstm import LstmRegressor
from .mlp import MlpRegressor
from .persistence import PersistenceRegressor

__all__ = [
    "ALGORITHMS",
    "AdamParams",
    "FORMAT_VERSION",
    "ForestParams",
    "ForestRegressor",
    "LstmParams",
    "LstmRegressor",
    "MlpParams",
    "MlpRegressor",
    "ModelArtifact",
    "PersistenceRegressor",
    "Tree",
    "build_windows",
    "estimator_from_artifact",
    "fit_tree",
    "load_model",
    "model_seed",
    "predict_rows",
    "rows_for_days",
    "save_model",
    "train_model",
    "window_ready",
]
