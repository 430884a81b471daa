"""Minimal neural engine: layers, two-branch CNN, dense stack, Adam training."""

from .layers import AvgPool1d, Conv1d, Dense, Flatten, Layer, ReLU, he_uniform
from .network import (CnnArchitecture, CnnNetwork, DenseNetwork, LayerSpec,
                      Sequential, conv, dense, flatten, network_from_dict,
                      network_to_dict, pool, relu,
                      DEFAULT_HEAD, DEFAULT_STATIC_BRANCH, DEFAULT_WEATHER_BRANCH)
from .training import (Adam, TrainConfig, TrainResult, TrainingDiverged,
                       finite_difference_check, min_abs_preactivation,
                       nudge_from_kinks, train_network)

__all__ = [
    "AvgPool1d", "Conv1d", "Dense", "Flatten", "Layer", "ReLU", "he_uniform",
    "CnnArchitecture", "CnnNetwork", "DenseNetwork", "LayerSpec", "Sequential",
    "conv", "dense", "flatten", "pool", "relu",
    "network_from_dict", "network_to_dict",
    "DEFAULT_HEAD", "DEFAULT_STATIC_BRANCH", "DEFAULT_WEATHER_BRANCH",
    "Adam", "TrainConfig", "TrainResult", "TrainingDiverged",
    "finite_difference_check", "min_abs_preactivation", "nudge_from_kinks",
    "train_network",
]
