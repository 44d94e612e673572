"""Blended scoring and rank prediction."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import ModelParams, RankingDataset, Task, TrainConfig
from .objective import resolve_terms

__all__ = [
    "Prediction",
    "blend_scores",
    "normalized_ranks",
    "predict",
    "write_predictions_csv",
    "read_predictions_csv",
]

PREDICTION_COLUMNS = ("student_id", "semester_id", "major_id", "score", "predicted_rank")


@dataclass(frozen=True)
class Prediction:
    student_id: str
    semester_id: int
    major_id: str
    score: float
    predicted_rank: float


def blend_scores(f, edges, tau, xi: float) -> np.ndarray:
    """Mix each score with the tie-weighted mean score of its similar group.

    ``out_i = (1 - xi) f_i + xi * sum_j tau_ij f_j / sum_j tau_ij`` over
    ``j in F_i``; students without similar peers keep ``f_i``.
    """
    f = np.asarray(f, dtype=float)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    tau = np.asarray(tau, dtype=float)
    if xi == 0 or len(tau) == 0:
        return f.copy()
    n = len(f)
    weight = np.bincount(edges[:, 0], tau, n)
    pooled = np.bincount(edges[:, 0], tau * f[edges[:, 1]], n)
    has = weight > 0
    out = f.copy()
    out[has] = (1.0 - xi) * f[has] + xi * pooled[has] / weight[has]
    return out


def normalized_ranks(scores, student_ids) -> np.ndarray:
    """Rank by descending score (ties by student id) and scale to ``[0, 1]``, 0 best."""
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    order = np.lexsort((np.asarray(student_ids, dtype=str), -scores))
    ranks = np.empty(n)
    ranks[order] = np.arange(n) / max(n - 1, 1)
    return ranks


def _task_scores(task: Task, params: ModelParams) -> np.ndarray:
    s, m = params.index(task.semester_id, task.major_id)
    if params.factorized:
        w = params.U[s, m] @ params.V[s]
    else:
        w = params.W[s, m]
    if task.X.shape[1] != len(w):
        raise ValueError(f"features have {task.X.shape[1]} columns, model expects {len(w)}")
    if not np.all(np.isfinite(task.X)):
        raise ValueError(f"missing features in semester {task.semester_id}, "
                         f"major {task.major_id}")
    return task.X @ w


def predict(dataset: RankingDataset, params: ModelParams, cfg: TrainConfig,
            variant: str | None = None) -> list[Prediction]:
    """Blended scores and predicted normalized ranks for every task.

    Blending with ``cfg.xi`` applies to variants that use student
    similarity; the others rank by their raw score.
    """
    if params is None or (params.U is None and params.W is None):
        raise ValueError("model parameters are not trained")
    terms = resolve_terms(cfg, variant or params.variant)
    xi = cfg.xi if terms.sim else 0.0
    out = []
    for task in dataset.task_list():
        f = _task_scores(task, params)
        y_hat = blend_scores(f, task.edges, task.tau, xi)
        ranks = normalized_ranks(y_hat, task.student_ids)
        out.extend(Prediction(sid, task.semester_id, task.major_id, float(sc), float(r))
                   for sid, sc, r in zip(task.student_ids, y_hat, ranks))
    return out


def write_predictions_csv(predictions, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in predictions:
            w.writerow([p.student_id, p.semester_id, p.major_id, repr(p.score),
                        repr(p.predicted_rank)])


def read_predictions_csv(path) -> list[Prediction]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_COLUMNS:
            raise ValueError(f"{path}: malformed predictions header {header!r}")
        return [Prediction(r[0], int(r[1]), r[2], float(r[3]), float(r[4])) for r in reader]
