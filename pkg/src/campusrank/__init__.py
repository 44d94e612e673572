"""Behavioral features, co-occurrence similarity and multi-task ranking of student performance."""

from .model import MultiTaskRanker, TrainConfig

__version__ = "0.1.0"

__all__ = ["MultiTaskRanker", "TrainConfig", "__version__"]
