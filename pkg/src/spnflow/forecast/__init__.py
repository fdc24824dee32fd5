from .models import MODELS, MLP, ConfigError, Model, NLinear, PatchMini, build_model
from .optim import AdamState, TrainingDiverged, adam_step
from .train import EarlyStopping, History, TrainConfig, evaluate, loss_and_grads, predict, train
from .windows import InsufficientDataError, SampleSet, Standardizer, WindowSpec, make_windows, standardize

__all__ = [
    "MODELS", "MLP", "ConfigError", "Model", "NLinear", "PatchMini", "build_model",
    "AdamState", "TrainingDiverged", "adam_step",
    "EarlyStopping", "History", "TrainConfig", "evaluate", "loss_and_grads", "predict", "train",
    "InsufficientDataError", "SampleSet", "Standardizer", "WindowSpec", "make_windows", "standardize",
]
