"""scikit-learn estimator interface to the multi-task ranker."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .dataset import VARIANTS, RankingDataset, TrainConfig
from .inference import predict as _predict
from .optim import train

__all__ = ["MultiTaskRanker"]


class MultiTaskRanker(BaseEstimator):
    """Multi-task pairwise ranker over (semester, major) tasks.

    Rows of ``X`` are students in one semester; the keyword arrays
    ``semesters`` and ``majors`` assign each row to its task, the way
    ``groups`` works for scikit-learn splitters.  Labels are normalized
    ranks in ``[0, 1]`` with 0 the best performer.

    Parameters
    ----------
    variant : {"MTLTR-APP", "BLTR", "BLTR+SS", "BLTR+MS", "BLTR+SEQ"}, default="MTLTR-APP"
        Which regularizers to use.
    k : int, default=5
        Number of latent major categories.
    lambda_s, lambda_n, lambda_1, lambda_2 : float
        Weights of semester smoothness, student similarity, L1 on ``U`` and
        L2 on ``V``.
    lambda_e : float, default=0.1
        Ridge weight of the flat variants.
    xi : float, default=0.2
        Weight of the similar-group score in blended inference.
    eta_v, eta_u : float, default=0.1
        Initial step sizes of the backtracking line searches.
    max_iter : int, default=500
    tol : float, default=1e-6
        Relative objective change that stops training.
    batch_size : int or None, default=None
        Pairs sampled per task and pass; None uses every pair.
    seed : int or None, default=0

    Attributes
    ----------
    params_ : ModelParams
    trace_ : list of float
        Objective value at initialization and after each pass.
    converged_ : bool
    n_iter_ : int
    n_features_in_ : int
    """

    def __init__(self, variant="MTLTR-APP", k=5, lambda_s=1.0, lambda_n=0.01, lambda_1=0.5,
                 lambda_2=0.1, lambda_e=0.1, xi=0.2, eta_v=0.1, eta_u=0.1, max_iter=500,
                 tol=1e-6, batch_size=None, seed=0):
        self.variant = variant
        self.k = k
        self.lambda_s = lambda_s
        self.lambda_n = lambda_n
        self.lambda_1 = lambda_1
        self.lambda_2 = lambda_2
        self.lambda_e = lambda_e
        self.xi = xi
        self.eta_v = eta_v
        self.eta_u = eta_u
        self.max_iter = max_iter
        self.tol = tol
        self.batch_size = batch_size
        self.seed = seed

    def config(self) -> TrainConfig:
        params = self.get_params()
        params.pop("variant")
        return TrainConfig(**params)

    def _dataset(self, X, y, semesters, majors, student_ids, similarity, fitted):
        X = check_array(X, dtype=float, ensure_all_finite=not fitted)
        if y is None:
            y = np.full(len(X), np.nan)
        y = np.asarray(y, dtype=float)
        check_consistent_length(X, y, semesters, majors)
        if fitted:
            if X.shape[1] != self.n_features_in_:
                raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
            return RankingDataset.from_arrays(
                X, y, semesters, majors, student_ids, similarity,
                semester_order=self.params_.semesters, major_order=self.params_.majors)
        finite = y[~np.isnan(y)]
        if np.any((finite < 0) | (finite > 1)):
            raise ValueError("normalized ranks must lie in [0, 1]")
        return RankingDataset.from_arrays(X, y, semesters, majors, student_ids, similarity)

    def fit(self, X, y, *, semesters, majors, student_ids=None, similarity=None):
        """Fit on row-aligned features and normalized ranks."""
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        data = self._dataset(X, y, semesters, majors, student_ids, similarity, fitted=False)
        return self.fit_dataset(data)

    def fit_dataset(self, dataset: RankingDataset):
        result = train(dataset, self.config(), self.variant)
        self.params_ = result.params
        self.trace_ = result.trace
        self.converged_ = result.converged
        self.n_iter_ = result.n_iter
        self.n_features_in_ = dataset.n_features
        return self

    def _predictions(self, X, semesters, majors, student_ids, similarity):
        check_is_fitted(self, "params_")
        if student_ids is None:
            student_ids = np.arange(len(X)).astype(str)
        student_ids = np.asarray(student_ids).astype(str)
        data = self._dataset(X, None, semesters, majors, student_ids, similarity, fitted=True)
        preds = _predict(data, self.params_, self.config(), self.variant)
        index = {(p.semester_id, p.major_id, p.student_id): p for p in preds}
        sem = np.asarray(semesters)
        maj = np.asarray(majors).astype(str)
        return [index[(int(s), m, i)] for s, m, i in zip(sem, maj, student_ids)]

    def decision_function(self, X, *, semesters, majors, student_ids=None, similarity=None):
        """Blended scores, higher meaning a better predicted performer."""
        rows = self._predictions(X, semesters, majors, student_ids, similarity)
        return np.array([p.score for p in rows])

    def predict(self, X, *, semesters, majors, student_ids=None, similarity=None):
        """Predicted normalized ranks within each (semester, major) group, 0 best."""
        rows = self._predictions(X, semesters, majors, student_ids, similarity)
        return np.array([p.predicted_rank for p in rows])

    def score(self, X, y, *, semesters, majors, student_ids=None, similarity=None):
        """Mean over semesters of the per-major mean Spearman correlation."""
        from ..evaluation import grouped_spearman

        pred = self.predict(X, semesters=semesters, majors=majors, student_ids=student_ids,
                            similarity=similarity)
        report = grouped_spearman(pred, y, semesters, majors)
        return float(np.nanmean([r.mean for r in report.values()]))
