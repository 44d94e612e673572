"""Containers for the multi-task ranking problem."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VARIANTS",
    "TrainConfig",
    "Task",
    "RankingDataset",
    "ModelParams",
    "precedence_pairs",
    "save_checkpoint",
    "load_checkpoint",
]

# Which terms each model variant optimizes.
#   factorized: W^s = U^s V^s with L1 on U and L2 on V
#   shared:     a single W for all semesters
#   seq:        sequential smoothness across semesters
#   sim:        similarity regularizer and blended inference
#   ridge:      lambda_e * sum_s ||W^s||^2
VARIANTS = {
    "BLTR": dict(factorized=False, shared=True, seq=False, sim=False, ridge=True),
    "BLTR+SS": dict(factorized=False, shared=False, seq=False, sim=True, ridge=True),
    "BLTR+MS": dict(factorized=True, shared=False, seq=False, sim=True, ridge=False),
    "BLTR+SEQ": dict(factorized=False, shared=False, seq=True, sim=False, ridge=True),
    "MTLTR-APP": dict(factorized=True, shared=False, seq=True, sim=True, ridge=False),
}


@dataclass
class TrainConfig:
    """Hyperparameters of training and inference.

    Defaults for the regularization weights, ``xi`` and ``k`` follow the
    published experimental setup; ``lambda_e`` and the optimizer settings
    are engineering defaults.
    """

    lambda_s: float = 1.0
    lambda_n: float = 0.01
    lambda_1: float = 0.5
    lambda_2: float = 0.1
    lambda_e: float = 0.1
    xi: float = 0.2
    k: int = 5
    eta_v: float = 0.1
    eta_u: float = 0.1
    max_iter: int = 500
    tol: float = 1e-6
    seed: int | None = 0
    batch_size: int | None = None
    armijo_c: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lambda_s", "lambda_n", "lambda_1", "lambda_2", "lambda_e"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a non-negative number, got {value!r}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if self.eta_v <= 0 or self.eta_u <= 0:
            raise ValueError("step sizes must be positive")
        if self.max_iter < 0 or self.tol < 0:
            raise ValueError("max_iter and tol must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo_c < 1:
            raise ValueError("backtrack and armijo_c must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**values)


def precedence_pairs(y) -> np.ndarray:
    """All ``(i, j)`` with ``i`` outperforming ``j``.

    A student outperforms another when its normalized rank is strictly
    smaller (0 is best).  Ties and NaN labels produce no pairs.

    Returns
    -------
    ndarray of shape (n_pairs, 2)
        Winner index in column 0, loser index in column 1.
    """
    y = np.asarray(y, dtype=float)
    labelled = np.flatnonzero(~np.isnan(y))
    order = labelled[np.argsort(y[labelled], kind="stable")]
    ys = y[order]
    a, b = np.triu_indices(len(order), 1)
    keep = ys[a] < ys[b]
    return np.column_stack([order[a[keep]], order[b[keep]]]).astype(np.int64)


@dataclass
class Task:
    """One (semester, major) ranking task.

    ``edges`` holds directed similar-student pairs ``(i, j)`` for ``j`` in
    ``F_i``, both directions present, with weights ``tau``.
    """

    semester_id: int
    major_id: str
    s: int
    m: int
    student_ids: list[str]
    X: np.ndarray
    y: np.ndarray
    pairs: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pair_scale: float = 1.0

    @property
    def n(self) -> int:
        return len(self.student_ids)

    def neighbors(self, i: int):
        """Indices and weights of ``F_i`` within the task."""
        sel = self.edges[:, 0] == i
        return self.edges[sel, 1], self.tau[sel]


@dataclass
class RankingDataset:
    semesters: list[int]
    majors: list[str]
    n_features: int
    tasks: dict[tuple[int, int], Task]
    feature_names: tuple[str, ...] | None = None

    @property
    def S(self) -> int:
        return len(self.semesters)

    @property
    def M(self) -> int:
        return len(self.majors)

    @property
    def n_pairs(self) -> int:
        return sum(len(t.pairs) for t in self.tasks.values())

    def task_list(self) -> list[Task]:
        return [self.tasks[k] for k in sorted(self.tasks)]

    @classmethod
    def from_arrays(cls, X, y, semesters, majors, student_ids=None, similarity=None,
                    semester_order=None, major_order=None, feature_names=None):
        """Group row-aligned arrays into tasks.

        Parameters
        ----------
        X : ndarray of shape (n_rows, p)
        y : ndarray of shape (n_rows,)
            Normalized ranks, NaN when unknown.
        semesters, majors : array-like of shape (n_rows,)
            Task membership of every row.
        student_ids : array-like of shape (n_rows,), optional
            Needed to attach similarity edges; defaults to row numbers.
        similarity : SimilarityGraph or dict, optional
            Either a graph exposing ``similar_group(student_id)`` or a mapping
            ``student_id -> {other_id: tau}``.
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        semesters = np.asarray(semesters)
        majors = np.asarray(majors).astype(str)
        if student_ids is None:
            student_ids = np.arange(len(X)).astype(str)
        student_ids = np.asarray(student_ids).astype(str)
        sem_order = list(semester_order) if semester_order is not None else sorted(
            {int(s) for s in semesters})
        maj_order = list(major_order) if major_order is not None else sorted(set(majors))
        sem_index = {s: i for i, s in enumerate(sem_order)}
        maj_index = {m: i for i, m in enumerate(maj_order)}
        tasks = {}
        for sem in sem_order:
            for maj in maj_order:
                rows = np.flatnonzero((semesters == sem) & (majors == maj))
                if len(rows) == 0:
                    continue
                ids = student_ids[rows].tolist()
                if len(set(ids)) != len(ids):
                    raise ValueError(f"duplicate students in semester {sem}, major {maj}")
                task = Task(int(sem), str(maj), sem_index[sem], maj_index[maj], ids,
                            X[rows], y[rows], precedence_pairs(y[rows]))
                _attach_edges(task, similarity)
                tasks[(task.s, task.m)] = task
        unknown_sem = set(int(s) for s in semesters) - set(sem_index)
        unknown_maj = set(majors) - set(maj_index)
        if unknown_sem or unknown_maj:
            raise ValueError(f"rows outside the semester/major order: "
                             f"{sorted(unknown_sem)} {sorted(unknown_maj)}")
        return cls(sem_order, maj_order, X.shape[1], tasks,
                   tuple(feature_names) if feature_names is not None else None)

    @classmethod
    def from_feature_matrices(cls, matrices, similarity=None, semester_order=None,
                              major_order=None):
        matrices = list(matrices)
        if not matrices:
            raise ValueError("no feature matrices")
        names = matrices[0].feature_names
        if any(fm.feature_names != names for fm in matrices):
            raise ValueError("feature matrices use different feature columns")
        X = np.vstack([fm.X for fm in matrices])
        y = np.concatenate([fm.y for fm in matrices])
        sem = np.concatenate([[fm.semester_id] * len(fm.student_ids) for fm in matrices])
        maj = np.concatenate([[fm.major_id] * len(fm.student_ids) for fm in matrices])
        ids = np.concatenate([fm.student_ids for fm in matrices])
        return cls.from_arrays(X, y, sem, maj, ids, similarity, semester_order, major_order,
                               names)


def _attach_edges(task: Task, similarity) -> None:
    if similarity is None:
        return
    local = {s: i for i, s in enumerate(task.student_ids)}
    src, dst, w = [], [], []
    for i, sid in enumerate(task.student_ids):
        if hasattr(similarity, "similar_group"):
            group = similarity.similar_group(sid)
        else:
            group = similarity.get(sid, {})
        for other, t in sorted(group.items()):
            j = local.get(other)
            if j is None or j == i or t <= 0:
                continue
            src.append(i)
            dst.append(j)
            w.append(float(t))
    task.edges = np.column_stack([src, dst]).astype(np.int64) if src else np.zeros(
        (0, 2), dtype=np.int64)
    task.tau = np.asarray(w, dtype=float)


@dataclass
class ModelParams:
    """Per-semester weights in factorized (``U``, ``V``) or flat (``W``) form.

    Shapes: ``U`` (S, M, k) non-negative, ``V`` (S, k, p), ``W`` (S, M, p).
    """

    semesters: list[int]
    majors: list[str]
    variant: str
    U: np.ndarray | None = None
    V: np.ndarray | None = None
    W: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    @property
    def factorized(self) -> bool:
        return self.U is not None

    def weights(self) -> np.ndarray:
        if self.factorized:
            return np.einsum("smk,skp->smp", self.U, self.V)
        return self.W

    def copy(self) -> "ModelParams":
        cp = lambda a: None if a is None else a.copy()
        return ModelParams(list(self.semesters), list(self.majors), self.variant,
                           cp(self.U), cp(self.V), cp(self.W), self.feature_names)

    def index(self, semester_id, major_id) -> tuple[int, int]:
        try:
            return self.semesters.index(semester_id), self.majors.index(str(major_id))
        except ValueError:
            raise KeyError(f"no weights for semester {semester_id!r}, "
                           f"major {major_id!r}") from None


def save_checkpoint(path, params: ModelParams, cfg: TrainConfig, trace) -> None:
    """Write ``{config, semesters: [{semester_id, U, V}|{semester_id, W}], variant, trace}``."""
    sems = []
    for s, sid in enumerate(params.semesters):
        entry = {"semester_id": sid}
        if params.factorized:
            entry["U"] = params.U[s].tolist()
            entry["V"] = params.V[s].tolist()
        else:
            entry["W"] = params.W[s].tolist()
        sems.append(entry)
    payload = {
        "config": cfg.to_dict(),
        "semesters": sems,
        "variant": params.variant,
        "majors": params.majors,
        "feature_names": list(params.feature_names) if params.feature_names else None,
        "trace": [float(v) for v in trace],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(params, cfg, trace)`` from a checkpoint written by :func:`save_checkpoint`."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    cfg = TrainConfig.from_dict(payload["config"])
    sems = payload["semesters"]
    ids = [e["semester_id"] for e in sems]
    names = payload.get("feature_names")
    params = ModelParams(ids, [str(m) for m in payload["majors"]], payload["variant"],
                         feature_names=tuple(names) if names else None)
    if "U" in sems[0]:
        params.U = np.array([e["U"] for e in sems], dtype=float)
        params.V = np.array([e["V"] for e in sems], dtype=float)
    else:
        params.W = np.array([e["W"] for e in sems], dtype=float)
    return params, cfg, payload.get("trace", [])
