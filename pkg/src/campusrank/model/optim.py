"""Block-coordinate proximal gradient training.

Factorized variants alternate, per semester, an Armijo gradient step on
``V^s`` with proximal steps on each ``u^{s,m}`` (soft-threshold then clamp
at zero).  Flat variants take Armijo steps on ``W^s`` or on the single
shared ``W``.  Every block step decreases the full objective, so the trace
is monotone in exact arithmetic.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .dataset import ModelParams, RankingDataset, TrainConfig
from .objective import Terms, objective, resolve_terms, task_loss_grad

__all__ = [
    "prox_l1",
    "project_nonneg",
    "TrainingDivergence",
    "TrainResult",
    "init_params",
    "train",
    "train_variant",
]

logger = logging.getLogger(__name__)

MAX_BACKTRACK = 60


def prox_l1(x, thresh):
    """Soft-thresholding, the proximal map of ``thresh * |z|``."""
    if thresh < 0:
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def project_nonneg(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


class TrainingDivergence(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass
class TrainResult:
    params: ModelParams
    trace: list[float]
    converged: bool
    n_iter: int
    steps: dict = field(default_factory=dict, repr=False)


def init_params(dataset: RankingDataset, cfg: TrainConfig, variant: str,
                rng: np.random.Generator) -> ModelParams:
    """``U ~ Uniform[0, 0.1]``, ``V ~ N(0, 0.01^2)``; flat ``W ~ N(0, 0.01^2)``."""
    terms = resolve_terms(cfg, variant)
    S, M, p, k = dataset.S, dataset.M, dataset.n_features, int(cfg.k)
    params = ModelParams(list(dataset.semesters), list(dataset.majors), variant,
                         feature_names=dataset.feature_names)
    if terms.factorized:
        params.U = rng.uniform(0.0, 0.1, size=(S, M, k))
        params.V = rng.normal(0.0, 0.01, size=(S, k, p))
    elif terms.shared:
        params.W = np.repeat(rng.normal(0.0, 0.01, size=(1, M, p)), S, axis=0)
    else:
        params.W = rng.normal(0.0, 0.01, size=(S, M, p))
    return params


class _Solver:
    def __init__(self, dataset: RankingDataset, cfg: TrainConfig, terms: Terms,
                 params: ModelParams):
        self.data = dataset
        self.cfg = cfg
        self.terms = terms
        self.params = params
        self.steps: dict = {}
        self.W = params.weights().copy()

    # -- block-local objectives -------------------------------------------------

    def _tasks_of(self, s):
        return [(m, self.data.tasks[(s, m)]) for m in range(self.data.M)
                if (s, m) in self.data.tasks]

    def _seq_term(self, s, Ws):
        total = 0.0
        for n in (s - 1, s + 1):
            if 0 <= n < self.data.S:
                total += 0.5 * float(np.sum((Ws - self.W[n]) ** 2))
        return self.terms.lambda_s * total

    def _semester_loss(self, s, Ws, grad=False):
        """Terms of the objective that depend on ``W^s`` (excluding penalties on U, V)."""
        loss = 0.0
        G = np.zeros_like(Ws) if grad else None
        for m, task in self._tasks_of(s):
            l, g = task_loss_grad(task, Ws[m], self.terms.lambda_n, grad)
            loss += l
            if grad:
                G[m] = g
        if self.terms.lambda_s:
            loss += self._seq_term(s, Ws)
            if grad:
                for n in (s - 1, s + 1):
                    if 0 <= n < self.data.S:
                        G += self.terms.lambda_s * (Ws - self.W[n])
        return loss, G

    def _row_loss(self, s, m, w, grad=False):
        task = self.data.tasks.get((s, m))
        if task is None:
            loss, g = 0.0, (np.zeros_like(w) if grad else None)
        else:
            loss, g = task_loss_grad(task, w, self.terms.lambda_n, grad)
        if self.terms.lambda_s:
            for n in (s - 1, s + 1):
                if 0 <= n < self.data.S:
                    diff = w - self.W[n, m]
                    loss += 0.5 * self.terms.lambda_s * float(diff @ diff)
                    if grad:
                        g = g + self.terms.lambda_s * diff
        return loss, g

    # -- line searches ----------------------------------------------------------

    def _armijo(self, key, fun, x, fx, g, eta0):
        gg = float(np.sum(g * g))
        if gg == 0.0:
            return x, fx
        t = self.steps.get(key, eta0 * self.cfg.backtrack) / self.cfg.backtrack
        for _ in range(MAX_BACKTRACK):
            x_new = x - t * g
            f_new = fun(x_new)
            if f_new <= fx - self.cfg.armijo_c * t * gg:
                self.steps[key] = t
                return x_new, f_new
            t *= self.cfg.backtrack
        self.steps[key] = t
        return x, fx

    def _prox_step(self, key, fun, x, fx, g, l1, eta0):
        """Proximal gradient step with the standard sufficient-decrease backtracking."""
        t = self.steps.get(key, eta0 * self.cfg.backtrack) / self.cfg.backtrack
        for _ in range(MAX_BACKTRACK):
            z = project_nonneg(prox_l1(x - t * g, l1 * t))
            dz = z - x
            fz = fun(z)
            if fz <= fx + float(g @ dz) + float(dz @ dz) / (2.0 * t):
                self.steps[key] = t
                # composite objective check keeps the step a descent step despite rounding
                if fz + l1 * z.sum() <= fx + l1 * x.sum():
                    return z
                return x
            t *= self.cfg.backtrack
        self.steps[key] = t
        return x

    # -- block updates ----------------------------------------------------------

    def update_V(self, s):
        P = self.params
        U, lam2 = P.U[s], self.terms.lambda_2

        def fun(V, grad=False):
            loss, G = self._semester_loss(s, U @ V, grad)
            loss += lam2 * float(np.sum(V * V))
            if grad:
                return loss, U.T @ G + 2.0 * lam2 * V
            return loss

        f0, g = fun(P.V[s], grad=True)
        P.V[s], _ = self._armijo(("V", s), fun, P.V[s], f0, g, self.cfg.eta_v)
        self.W[s] = U @ P.V[s]

    def update_u(self, s, m):
        P = self.params
        V = P.V[s]
        fun = lambda u: self._row_loss(s, m, u @ V)[0]
        f0, gw = self._row_loss(s, m, P.U[s, m] @ V, grad=True)
        u = self._prox_step(("u", s, m), fun, P.U[s, m], f0, V @ gw, self.terms.lambda_1,
                            self.cfg.eta_u)
        P.U[s, m] = u
        self.W[s, m] = u @ V

    def update_W(self, s):
        lam_e = self.terms.lambda_e

        def fun(Ws, grad=False):
            loss, G = self._semester_loss(s, Ws, grad)
            loss += lam_e * float(np.sum(Ws * Ws))
            if grad:
                return loss, G + 2.0 * lam_e * Ws
            return loss

        f0, g = fun(self.W[s], grad=True)
        self.W[s], _ = self._armijo(("W", s), fun, self.W[s], f0, g, self.cfg.eta_v)
        self.params.W[s] = self.W[s]

    def update_shared_W(self):
        S, lam_e = self.data.S, self.terms.lambda_e

        def fun(W0, grad=False):
            loss, G = 0.0, np.zeros_like(W0) if grad else None
            for s in range(S):
                l, g = self._semester_loss(s, W0, grad)
                loss += l
                if grad:
                    G += g
            loss += lam_e * S * float(np.sum(W0 * W0))
            if grad:
                return loss, G + 2.0 * lam_e * S * W0
            return loss

        f0, g = fun(self.W[0], grad=True)
        W0, _ = self._armijo(("W",), fun, self.W[0], f0, g, self.cfg.eta_v)
        self.W[:] = W0
        self.params.W[:] = W0

    def sweep(self):
        if self.terms.factorized:
            for s in range(self.data.S):
                self.update_V(s)
                for m in range(self.data.M):
                    self.update_u(s, m)
        elif self.terms.shared:
            self.update_shared_W()
        else:
            for s in range(self.data.S):
                self.update_W(s)


def _sample_pairs(dataset: RankingDataset, batch_size: int, rng) -> RankingDataset:
    tasks = {}
    for key, t in dataset.tasks.items():
        n_pairs = len(t.pairs)
        if n_pairs <= batch_size:
            tasks[key] = t
            continue
        pick = rng.integers(0, n_pairs, size=batch_size)
        tasks[key] = dataclasses.replace(t, pairs=t.pairs[pick],
                                         pair_scale=n_pairs / batch_size)
    return dataclasses.replace(dataset, tasks=tasks)


def train(dataset: RankingDataset, cfg: TrainConfig, variant: str = "MTLTR-APP",
          callback=None, params: ModelParams | None = None) -> TrainResult:
    """Fit one model variant.

    Parameters
    ----------
    callback : callable, optional
        Called as ``callback(iteration, params)`` after every outer pass.
    params : ModelParams, optional
        Warm start; random initialization from ``cfg.seed`` otherwise.

    Returns
    -------
    TrainResult
        ``trace[0]`` is the objective at initialization, then one entry per
        outer pass.

    Raises
    ------
    TrainingDivergence
        When the objective becomes non-finite.
    """
    cfg.validate()
    terms = resolve_terms(cfg, variant)
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(dataset, cfg, variant, rng)
    else:
        params = params.copy()
        params.variant = variant
    full = dataset
    trace = [objective(full, params, cfg, variant)]
    if not math.isfinite(trace[0]):
        raise TrainingDivergence("objective is not finite at initialization", trace)
    solver = _Solver(dataset, cfg, terms, params)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if cfg.batch_size is not None:
            solver.data = _sample_pairs(full, cfg.batch_size, rng)
        solver.sweep()
        value = objective(full, params, cfg, variant)
        trace.append(value)
        if not math.isfinite(value):
            raise TrainingDivergence(f"objective diverged at iteration {it}", trace)
        if callback is not None:
            callback(it, params)
        prev = trace[-2]
        if abs(prev - value) <= cfg.tol * max(abs(prev), 1e-12):
            converged = True
            break
    if not converged and cfg.max_iter > 0:
        warnings.warn(f"{variant} did not converge in {cfg.max_iter} iterations",
                      ConvergenceWarning, stacklevel=2)
    logger.debug("%s: %d iterations, objective %.6g", variant, it, trace[-1])
    return TrainResult(params, trace, converged, it, solver.steps)


def train_variant(dataset: RankingDataset, cfg: TrainConfig, variant: str) -> TrainResult:
    """Alias of :func:`train` with a mandatory variant name."""
    return train(dataset, cfg, variant)
