"""Multi-task pairwise ranking model."""

from .dataset import (VARIANTS, ModelParams, RankingDataset, Task, TrainConfig, load_checkpoint,
                      precedence_pairs, save_checkpoint)
from .estimator import MultiTaskRanker
from .inference import Prediction, blend_scores, normalized_ranks, predict
from .objective import grad_u, grad_V, grad_W, objective, omega_ms, omega_seq, omega_sn, pair_loss
from .optim import TrainingDivergence, TrainResult, project_nonneg, prox_l1, train, train_variant

__all__ = [
    "VARIANTS",
    "ModelParams",
    "RankingDataset",
    "Task",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
    "precedence_pairs",
    "MultiTaskRanker",
    "Prediction",
    "blend_scores",
    "normalized_ranks",
    "predict",
    "grad_u",
    "grad_V",
    "grad_W",
    "objective",
    "omega_ms",
    "omega_seq",
    "omega_sn",
    "pair_loss",
    "TrainingDivergence",
    "TrainResult",
    "project_nonneg",
    "prox_l1",
    "train",
    "train_variant",
]
