"""
Losses, optimizer, toy encoder, synthetic data and training loops.
"""

from .losses import (
    DEFAULT_LAMBDA,
    LossConfig,
    compactness_term,
    coordinate_map,
    masked_cross_entropy,
    slic_loss,
    total_loss,
)
from .optimizer import AdamState, adam_step
from .encoder import EncoderConfig, EncoderOutput, ToyEncoder, init_params
from .dataset import Sample, coarsen_dataset, split_dataset, synth_dataset
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .trainer import (
    DirectFitResult,
    EpochRecord,
    TrainConfig,
    TrainHistory,
    TrainResult,
    direct_fit,
    evaluate_model,
    fit_assignments,
    fit_encoder,
    predict,
    train_toy,
    training_step_loss,
)

__all__ = [
    # Losses
    "DEFAULT_LAMBDA",
    "LossConfig",
    "compactness_term",
    "coordinate_map",
    "masked_cross_entropy",
    "slic_loss",
    "total_loss",

    # Optimizer
    "AdamState",
    "adam_step",

    # Model
    "EncoderConfig",
    "EncoderOutput",
    "ToyEncoder",
    "init_params",

    # Data
    "Sample",
    "coarsen_dataset",
    "split_dataset",
    "synth_dataset",

    # Checkpoints
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",

    # Loops
    "DirectFitResult",
    "EpochRecord",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "direct_fit",
    "evaluate_model",
    "fit_assignments",
    "fit_encoder",
    "predict",
    "train_toy",
    "training_step_loss",
]
