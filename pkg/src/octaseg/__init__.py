"""Snake-convolution + windowed-attention segmentation for OCTA images."""

from . import autodiff
from .autodiff import Parameter, Tensor, backward, no_grad
from .data import PartitionSpec, SampleRecord, load_dataset, synthetic_vessel_samples
from .losses import SkeletonConfig, cl_dice_loss, dice_loss, soft_skeleton
from .metrics import MetricsReport, dice_score, jaccard_score
from .network import (ArchitectureConfig, LIGHTWEIGHT_CONFIG, SegmentationModel,
                      build_model, count_parameters, init_parameters)
from .pipeline import TrainConfig, evaluate, predict, train

__all__ = [
    "ArchitectureConfig",
    "LIGHTWEIGHT_CONFIG",
    "MetricsReport",
    "Parameter",
    "PartitionSpec",
    "SampleRecord",
    "SegmentationModel",
    "SkeletonConfig",
    "Tensor",
    "TrainConfig",
    "autodiff",
    "backward",
    "build_model",
    "cl_dice_loss",
    "count_parameters",
    "dice_loss",
    "dice_score",
    "evaluate",
    "init_parameters",
    "jaccard_score",
    "load_dataset",
    "no_grad",
    "predict",
    "soft_skeleton",
    "synthetic_vessel_samples",
    "train",
]
