"""Objective terms and analytic gradients.

The full objective over per-semester weights ``W^s = U^s V^s`` is::

    pair_loss + lambda_s * omega_seq + omega_ms + lambda_n * omega_sn

where ``omega_seq`` and ``omega_sn`` carry their own factor 1/2.  Flat
variants replace ``omega_ms`` with ``lambda_e * sum_s ||W^s||_F^2``.

Semester and major arguments named ``s`` and ``m`` are 0-based positions in
``dataset.semesters`` / ``dataset.majors``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import VARIANTS, ModelParams, RankingDataset, Task, TrainConfig

__all__ = [
    "Terms",
    "resolve_terms",
    "score",
    "task_loss_grad",
    "pair_loss",
    "omega_seq",
    "omega_ms",
    "omega_sn",
    "ridge_penalty",
    "objective",
    "smooth_objective",
    "seq_residual",
    "task_weight_grads",
    "grad_V",
    "grad_u",
    "grad_W",
]


@dataclass(frozen=True)
class Terms:
    """Effective weights of every objective term for one variant."""

    factorized: bool
    shared: bool
    sim: bool
    lambda_s: float
    lambda_n: float
    lambda_1: float
    lambda_2: float
    lambda_e: float


def resolve_terms(cfg: TrainConfig, variant: str) -> Terms:
    try:
        spec = VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}") from None
    return Terms(
        factorized=spec["factorized"],
        shared=spec["shared"],
        sim=spec["sim"],
        lambda_s=cfg.lambda_s if spec["seq"] else 0.0,
        lambda_n=cfg.lambda_n if spec["sim"] else 0.0,
        lambda_1=cfg.lambda_1 if spec["factorized"] else 0.0,
        lambda_2=cfg.lambda_2 if spec["factorized"] else 0.0,
        lambda_e=cfg.lambda_e if spec["ridge"] else 0.0,
    )


def score(x, semester_id, major_id, params: ModelParams) -> float:
    """Ranking score ``u^{s,m} V^s x`` (or ``w^{s,m} x``); higher is better."""
    x = np.asarray(x, dtype=float)
    s, m = params.index(semester_id, major_id)
    if params.factorized:
        w = params.U[s, m] @ params.V[s]
    else:
        w = params.W[s, m]
    if x.shape != w.shape:
        raise ValueError(f"feature vector has shape {x.shape}, model expects {w.shape}")
    return float(w @ x)


def task_loss_grad(task: Task, w: np.ndarray, lambda_n: float = 0.0, grad: bool = True):
    """Pair loss plus weighted similarity penalty of one task.

    Returns ``(loss, g)`` where ``g`` is the gradient with respect to the
    task weight vector ``w`` (None when ``grad`` is False).
    """
    f = task.X @ w
    n = task.n
    win, lose = task.pairs[:, 0], task.pairs[:, 1]
    d = f[win] - f[lose]
    # -log sigmoid(d) = log(1 + exp(-d)), evaluated without overflow
    loss = task.pair_scale * float(np.logaddexp(0.0, -d).sum())
    if grad:
        c = -task.pair_scale * expit(-d)
        a = np.bincount(win, c, n) - np.bincount(lose, c, n)
    if lambda_n > 0 and len(task.tau):
        i, j = task.edges[:, 0], task.edges[:, 1]
        diff = f[i] - f[j]
        loss += lambda_n * 0.5 * float(np.sum(task.tau * diff * diff))
        if grad:
            b = lambda_n * task.tau * diff
            a = a + np.bincount(i, b, n) - np.bincount(j, b, n)
    if not grad:
        return loss, None
    return loss, task.X.T @ a


def _weights(params) -> np.ndarray:
    return params.weights() if isinstance(params, ModelParams) else np.asarray(params)


def pair_loss(dataset: RankingDataset, params) -> float:
    """``-sum log sigmoid(f_i - f_j)`` over all tasks and outperforming pairs."""
    W = _weights(params)
    return sum(task_loss_grad(t, W[t.s, t.m], 0.0, grad=False)[0] for t in dataset.task_list())


def omega_seq(params) -> float:
    """``1/2 sum_s ||W^s - W^{s+1}||_F^2`` over consecutive semesters."""
    W = _weights(params)
    return 0.5 * float(np.sum((W[1:] - W[:-1]) ** 2))


def omega_ms(params: ModelParams, cfg: TrainConfig) -> float:
    """``sum_s lambda_1 ||U^s||_1 + lambda_2 ||V^s||_F^2``."""
    return cfg.lambda_1 * float(np.abs(params.U).sum()) + cfg.lambda_2 * float(
        np.sum(params.V ** 2))


def omega_sn(dataset: RankingDataset, params) -> float:
    """``1/2 sum_{s,m} sum_i sum_{j in F_i} tau_ij (f_i - f_j)^2``."""
    W = _weights(params)
    total = 0.0
    for t in dataset.task_list():
        if not len(t.tau):
            continue
        f = t.X @ W[t.s, t.m]
        diff = f[t.edges[:, 0]] - f[t.edges[:, 1]]
        total += 0.5 * float(np.sum(t.tau * diff * diff))
    return total


def ridge_penalty(params) -> float:
    """``sum_s ||W^s||_F^2``."""
    return float(np.sum(_weights(params) ** 2))


def smooth_objective(dataset, params: ModelParams, cfg: TrainConfig, variant=None) -> float:
    """Objective without the L1 term (the differentiable part)."""
    terms = resolve_terms(cfg, variant or params.variant)
    W = params.weights()
    total = sum(task_loss_grad(t, W[t.s, t.m], terms.lambda_n, grad=False)[0]
                for t in dataset.task_list())
    total += terms.lambda_s * omega_seq(W)
    if terms.factorized:
        total += terms.lambda_2 * float(np.sum(params.V ** 2))
    total += terms.lambda_e * ridge_penalty(W)
    return total


def objective(dataset: RankingDataset, params: ModelParams, cfg: TrainConfig,
              variant=None) -> float:
    """Full training objective of ``variant`` (defaults to ``params.variant``)."""
    terms = resolve_terms(cfg, variant or params.variant)
    total = smooth_objective(dataset, params, cfg, variant)
    if terms.factorized:
        total += terms.lambda_1 * float(np.abs(params.U).sum())
    return total


def seq_residual(W: np.ndarray, s: int) -> np.ndarray:
    """``sum over existing neighbours n of W^s - W^n`` (boundary semesters have one)."""
    R = np.zeros_like(W[s])
    if s > 0:
        R += W[s] - W[s - 1]
    if s + 1 < len(W):
        R += W[s] - W[s + 1]
    return R


def task_weight_grads(dataset: RankingDataset, W: np.ndarray, s: int, lambda_n: float):
    """Gradients of the semester-``s`` task losses with respect to each ``w^{s,m}``."""
    G = np.zeros((dataset.M, dataset.n_features))
    for m in range(dataset.M):
        task = dataset.tasks.get((s, m))
        if task is not None:
            G[m] = task_loss_grad(task, W[s, m], lambda_n)[1]
    return G


def grad_V(dataset: RankingDataset, params: ModelParams, cfg: TrainConfig, s: int,
           variant=None) -> np.ndarray:
    """Gradient of the objective with respect to ``V^s`` (shape k x p)."""
    terms = resolve_terms(cfg, variant or params.variant)
    W = params.weights()
    U = params.U[s]
    G = task_weight_grads(dataset, W, s, terms.lambda_n)
    if terms.lambda_s:
        G = G + terms.lambda_s * seq_residual(W, s)
    return U.T @ G + 2.0 * terms.lambda_2 * params.V[s]


def grad_u(dataset: RankingDataset, params: ModelParams, cfg: TrainConfig, s: int, m: int,
           variant=None) -> np.ndarray:
    """Gradient of the differentiable objective with respect to ``u^{s,m}`` (length k)."""
    terms = resolve_terms(cfg, variant or params.variant)
    W = params.weights()
    task = dataset.tasks.get((s, m))
    g = np.zeros(dataset.n_features)
    if task is not None:
        g = task_loss_grad(task, W[s, m], terms.lambda_n)[1]
    if terms.lambda_s:
        g = g + terms.lambda_s * seq_residual(W, s)[m]
    return params.V[s] @ g


def grad_W(dataset: RankingDataset, params: ModelParams, cfg: TrainConfig, s: int | None = None,
           variant=None) -> np.ndarray:
    """Gradient with respect to flat weights ``W^s`` (M x p).

    For the semester-shared variant pass ``s=None`` to get the gradient of
    the single shared matrix.
    """
    terms = resolve_terms(cfg, variant or params.variant)
    W = params.W
    if terms.shared:
        G = sum(task_weight_grads(dataset, W, t, terms.lambda_n) for t in range(dataset.S))
        return G + 2.0 * terms.lambda_e * dataset.S * W[0]
    G = task_weight_grads(dataset, W, s, terms.lambda_n)
    if terms.lambda_s:
        G = G + terms.lambda_s * seq_residual(W, s)
    return G + 2.0 * terms.lambda_e * W[s]
