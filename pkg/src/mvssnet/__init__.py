"""Multi-view, multi-scale supervised image manipulation detection on a
small numpy autodiff engine."""

from .autodiff import DimensionError, DomainError, Parameter, Tensor, UsageError, grad_check, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import evaluate, run_inference
from .losses import ConfigError, LossWeights, Targets, combined_loss
from .metrics import MetricReport, metrics
from .network import ModelConfig, MvssModel, Prediction, predict
from .synthdata import GenConfig, Sample, generate, read_dataset, write_dataset
from .training import TrainConfig, TrainReport, train

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "GenConfig",
    "LossWeights",
    "MetricReport",
    "ModelConfig",
    "MvssModel",
    "Parameter",
    "Prediction",
    "Sample",
    "Targets",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "UsageError",
    "combined_loss",
    "evaluate",
    "generate",
    "grad_check",
    "load_checkpoint",
    "metrics",
    "no_grad",
    "predict",
    "read_dataset",
    "run_inference",
    "save_checkpoint",
    "train",
    "write_dataset",
]
