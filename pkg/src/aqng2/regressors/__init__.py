"""Learned g2 regressors: the PCCNN and the feature-based baselines."""

from .adam import AdamState, TrainConfig, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import WindowDataset, build_dataset, read_dataset, write_dataset
from .features import SummaryFeatures, summary_features
from .forest import RandomForestRegressor, fit_random_forest, predict_forest
from .network import PccnnModel, backward, forward, init_parameters
from .pccnn import PCCNNRegressor, predict_batch, train
from .svr import LinearSVR, fit_svr, predict_svr

__all__ = [
    "AdamState",
    "LinearSVR",
    "PCCNNRegressor",
    "PccnnModel",
    "RandomForestRegressor",
    "SummaryFeatures",
    "TrainConfig",
    "WindowDataset",
    "adam_step",
    "backward",
    "build_dataset",
    "fit_random_forest",
    "fit_svr",
    "forward",
    "init_parameters",
    "load_checkpoint",
    "predict_batch",
    "predict_forest",
    "predict_svr",
    "read_dataset",
    "save_checkpoint",
    "summary_features",
    "train",
    "write_dataset",
]
