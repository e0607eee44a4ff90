"""Crowd segmentation and counting from scale-normalized histograms of moving gradients."""

from .calib import CalibrationModel, decompose, plan_strips
from .count import CountModel
from .motion import KeyframeBuffer, TemporalConfig, moving_gradient
from .pipeline import GRADIENTS_FIRST, NORMALIZED_FIRST, CameraPipeline, PipelineConfig
from .seg import SegModel

__version__ = "0.1.0"

__all__ = [
    "CalibrationModel", "decompose", "plan_strips", "CountModel", "KeyframeBuffer", "TemporalConfig",
    "moving_gradient", "GRADIENTS_FIRST", "NORMALIZED_FIRST", "CameraPipeline", "PipelineConfig", "SegModel",
]
