"""Densely connected fully connected networks for nonlinear regression, from scratch."""

__version__ = "0.1.0"

from .data import Dataset, SplitSpec, generate, load_csv, split, target_eq2, write_csv
from .model import Model, ModelSpec, build, count_params
from .tensor import Rng
from .train import MinMaxScaler, TrainConfig, TrainReport, fit, metrics, mse

__all__ = [
    "Dataset", "SplitSpec", "generate", "load_csv", "split", "target_eq2", "write_csv",
    "Model", "ModelSpec", "build", "count_params", "Rng",
    "MinMaxScaler", "TrainConfig", "TrainReport", "fit", "metrics", "mse",
]
