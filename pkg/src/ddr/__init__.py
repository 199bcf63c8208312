"""Dimension reduction by learned polynomial flows followed by an orthogonal projection."""

from .data import DatasetMatrix, gen_sdata, load_csv, save_csv
from .dictionary import DictionarySpec
from .dynamics import TimeGrid, solve_adjoint, solve_forward, solve_reverse
from .estimator import DynamicalDimensionReduction
from .exceptions import (CheckpointError, CSVParseError, InvalidInputError, NumericalBlowupError,
                         StateError, TrainingBlowupError)
from .gradients import grad
from .model_io import decode, encode, load, save, stability_sweep
from .objective import evaluate
from .subspace import pca_embed, solve_q
from .training import ModelParams, TrainConfig, epsilon_star, init_params, lcurve, train

__all__ = [
    "CSVParseError", "CheckpointError", "DatasetMatrix", "DictionarySpec", "DynamicalDimensionReduction",
    "InvalidInputError", "ModelParams", "NumericalBlowupError", "StateError", "TimeGrid", "TrainConfig",
    "TrainingBlowupError", "decode", "encode", "epsilon_star", "evaluate", "gen_sdata", "grad",
    "init_params", "lcurve", "load", "load_csv", "pca_embed", "save", "save_csv", "solve_adjoint",
    "solve_forward", "solve_q", "solve_reverse", "stability_sweep", "train",
]

__version__ = "0.1.0"
