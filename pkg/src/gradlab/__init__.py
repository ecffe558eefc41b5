"""Small NumPy ConvNet framework with hand-written backprop, classic
gradient-descent optimizers, regularizers and finite-difference checks."""

from .net import (Activation, Conv, Dense, Flatten, MeanPool, Network, SoftmaxOutput,
                  network_backward, network_forward, parse_layers)
from .optim import HyperParams, OptimizerState, init_state, step
from .regularize import EarlyStopMonitor, RegularizerConfig
from .tensor import Rng
from .trainer import BatchPolicy, Dataset, FitConfig, fit

__version__ = "0.1.0"

__all__ = [
    "Activation", "BatchPolicy", "Conv", "Dataset", "Dense", "EarlyStopMonitor", "FitConfig",
    "Flatten", "HyperParams", "MeanPool", "Network", "OptimizerState", "RegularizerConfig",
    "Rng", "SoftmaxOutput", "fit", "init_state", "network_backward", "network_forward",
    "parse_layers", "step",
]
