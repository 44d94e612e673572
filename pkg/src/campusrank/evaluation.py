"""Ranking metrics and report assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.stats.contingency import association, crosstab

from .features import BED_BINS, FEATURE_NAMES, N_SCALED, WAKE_BINS

__all__ = [
    "spearman",
    "SemesterScore",
    "grouped_spearman",
    "semester_report",
    "rank_quintiles",
    "cramers_v",
    "FeatureCorrelation",
    "feature_correlations",
    "VariantRow",
    "variant_comparison",
    "EvalReport",
    "write_scatter_csv",
    "write_tie_strength_csv",
]


def spearman(a, b) -> float:
    """Spearman rank correlation.

    Uses ``1 - 6 sum d^2 / (n (n^2 - 1))`` when neither argument has ties and
    the Pearson correlation of midranks otherwise.  Returns NaN when either
    argument is constant.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("spearman needs two 1-d sequences of equal length")
    n = len(a)
    if n < 2:
        raise ValueError("spearman needs at least 2 observations")
    ra = stats.rankdata(a)
    rb = stats.rankdata(b)
    ties = len(np.unique(a)) < n or len(np.unique(b)) < n
    if not ties:
        d = ra - rb
        return float(1.0 - 6.0 * (d @ d) / (n * (n * n - 1.0)))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt((ra @ ra) * (rb @ rb))
    if denom == 0:
        return math.nan
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


@dataclass
class SemesterScore:
    semester_id: int
    per_major: dict[str, float]

    @property
    def mean(self) -> float:
        """Unweighted mean over majors with a defined correlation."""
        vals = [v for v in self.per_major.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan


def grouped_spearman(pred, truth, semesters, majors) -> dict[int, SemesterScore]:
    """Per (semester, major) Spearman between row-aligned predicted and true ranks.

    Rows with a NaN true rank are ignored; groups with fewer than two
    labelled rows are skipped.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    semesters = np.asarray(semesters).astype(int)
    majors = np.asarray(majors).astype(str)
    out: dict[int, SemesterScore] = {}
    for sem in sorted(set(semesters.tolist())):
        per_major = {}
        for maj in sorted(set(majors[semesters == sem].tolist())):
            rows = (semesters == sem) & (majors == maj) & ~np.isnan(truth)
            if rows.sum() >= 2:
                per_major[maj] = spearman(pred[rows], truth[rows])
        out[sem] = SemesterScore(sem, per_major)
    return out


def semester_report(predictions, truth) -> dict[int, SemesterScore]:
    """Score predictions against ground-truth ranks.

    Parameters
    ----------
    predictions : list of Prediction
    truth : dict
        ``(student_id, semester_id) -> normalized_rank``.

    Raises
    ------
    ValueError
        When a (semester, major) group has predictions but no true ranks.
    """
    groups: dict[tuple[int, str], list] = {}
    for p in predictions:
        groups.setdefault((p.semester_id, p.major_id), []).append(p)
    pred, true, sem, maj = [], [], [], []
    for (s, m), rows in sorted(groups.items()):
        labelled = [(p.predicted_rank, truth[(p.student_id, s)]) for p in rows
                    if (p.student_id, s) in truth]
        if not labelled:
            raise ValueError(f"major {m} in semester {s} has no ground-truth ranks")
        for a, b in labelled:
            pred.append(a)
            true.append(b)
            sem.append(s)
            maj.append(m)
    return grouped_spearman(pred, true, sem, maj)


def rank_quintiles(y, groups: int = 5) -> np.ndarray:
    """Equal-count performance groups ``0..groups-1``; 0 holds the best ranks."""
    y = np.asarray(y, dtype=float)
    order = stats.rankdata(y, method="ordinal") - 1
    return (order * groups // len(y)).astype(int)


def cramers_v(categories, groups) -> float:
    """Cramér's V of two categorical variables, without continuity correction.

    Categories absent from the data are dropped; NaN when either variable
    takes a single value.
    """
    categories = np.asarray(categories)
    groups = np.asarray(groups)
    if len(categories) != len(groups):
        raise ValueError("categories and groups differ in length")
    table = crosstab(categories, groups).count
    if min(table.shape) < 2:
        return math.nan
    return float(association(table, method="cramer", correction=False))


@dataclass
class FeatureCorrelation:
    feature: str
    statistic: str
    value: float | None

    def to_dict(self) -> dict:
        return {"feature": self.feature, "statistic": self.statistic, "value": self.value}


def _one_hot_category(block, labels):
    """Category label per row, or None for all-zero rows."""
    hot = block.sum(axis=1) > 0
    return hot, np.asarray(labels)[np.argmax(block, axis=1)]


def feature_correlations(X, y, feature_names=FEATURE_NAMES) -> list[FeatureCorrelation]:
    """Correlation of every feature family with normalized rank.

    Count and entropy columns use Spearman; wake and bed one-hot blocks are
    decoded into categorical variables and scored with Cramér's V against
    rank quintiles.  Undefined values (constant columns) are reported as
    None.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = ~np.isnan(y)
    X, y = X[keep], y[keep]
    names = list(feature_names)
    out = []
    for j, name in enumerate(names[:N_SCALED]):
        col = X[:, j]
        rho = math.nan if np.ptp(col) == 0 or len(col) < 2 else spearman(col, y)
        out.append(FeatureCorrelation(name, "spearman", None if math.isnan(rho) else rho))
    groups = rank_quintiles(y) if len(y) else np.zeros(0, dtype=int)
    blocks = (("wake_time", WAKE_BINS, N_SCALED), ("bed_time", BED_BINS, N_SCALED + len(WAKE_BINS)))
    for name, bins, start in blocks:
        if X.shape[1] < start + len(bins):
            continue
        hot, cat = _one_hot_category(X[:, start:start + len(bins)], bins)
        v = cramers_v(cat[hot], groups[hot]) if hot.sum() >= 2 else math.nan
        out.append(FeatureCorrelation(name, "cramers_v", None if math.isnan(v) else v))
    return out


@dataclass
class VariantRow:
    variant: str
    per_semester: dict[int, float]
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        vals = [v for v in self.per_semester.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    def to_dict(self) -> dict:
        return {"variant": self.variant,
                "per_semester": {str(k): _num(v) for k, v in self.per_semester.items()},
                "mean": _num(self.mean), "errors": {str(k): v for k, v in self.errors.items()}}


def variant_comparison(train_data, test_data, cfg, variants) -> list[VariantRow]:
    """Train each variant on ``train_data`` and score it on ``test_data``.

    Failures are recorded per row rather than raised, so one diverging
    variant does not hide the others.
    """
    from .model.inference import predict
    from .model.optim import TrainingDivergence, train

    rows = []
    for variant in variants:
        try:
            result = train(train_data, cfg, variant)
            preds = predict(test_data, result.params, cfg, variant)
        except (TrainingDivergence, ValueError) as exc:
            rows.append(VariantRow(variant, {s: math.nan for s in test_data.semesters},
                                   {s: str(exc) for s in test_data.semesters}))
            continue
        truth = {(t.student_ids[i], t.semester_id): t.y[i]
                 for t in test_data.task_list() for i in range(t.n) if not np.isnan(t.y[i])}
        report = semester_report(preds, truth)
        rows.append(VariantRow(variant, {s: report[s].mean for s in sorted(report)}))
    return rows


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def _fmt(v, width=8):
    return f"{'-':>{width}}" if v is None or math.isnan(v) else f"{v:>{width}.3f}"


@dataclass
class EvalReport:
    """Everything the ``evaluate``, ``report`` and ``bench`` commands print."""

    semesters: dict[int, SemesterScore] = field(default_factory=dict)
    variants: list[VariantRow] = field(default_factory=list)
    correlations: list[FeatureCorrelation] = field(default_factory=list)
    ttest: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "semesters": [{"semester_id": s.semester_id, "mean": _num(s.mean),
                           "per_major": {m: _num(v) for m, v in s.per_major.items()}}
                          for s in self.semesters.values()],
            "variants": [r.to_dict() for r in self.variants],
            "feature_correlations": [c.to_dict() for c in self.correlations],
            "similarity_ttest": self.ttest,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_text(self) -> str:
        lines = []
        if self.semesters:
            lines.append("Spearman per semester (mean over majors)")
            majors = sorted({m for s in self.semesters.values() for m in s.per_major})
            lines.append(f"{'semester':>10}{'mean':>8}" + "".join(f"{m:>8}" for m in majors))
            for s in self.semesters.values():
                lines.append(f"{s.semester_id:>10}{_fmt(s.mean)}"
                             + "".join(_fmt(s.per_major.get(m, math.nan)) for m in majors))
            lines.append("")
        if self.variants:
            sems = sorted({k for r in self.variants for k in r.per_semester})
            lines.append("Variant comparison (mean Spearman per semester)")
            lines.append(f"{'variant':<12}" + "".join(f"{'s' + str(s):>8}" for s in sems)
                         + f"{'mean':>8}")
            for r in self.variants:
                lines.append(f"{r.variant:<12}"
                             + "".join(_fmt(r.per_semester.get(s, math.nan)) for s in sems)
                             + _fmt(r.mean))
            lines.append("")
        if self.correlations:
            lines.append("Feature correlation with normalized rank")
            for c in self.correlations:
                lines.append(f"{c.feature:<28}{c.statistic:<11}{_fmt(c.value)}")
            lines.append("")
        if self.ttest:
            lines.append("Similarity t-test per semester")
            for k, v in self.ttest.items():
                if isinstance(v, dict):
                    v = "  ".join(f"{a}={b:.4g}" if isinstance(b, float) else f"{a}={b}"
                                  for a, b in v.items())
                lines.append(f"{k:<6}{v}")
            lines.append("")
        return "\n".join(lines)


def write_scatter_csv(X, y, path, feature_names=FEATURE_NAMES) -> None:
    """Feature value against normalized rank, one row per student and feature."""
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "value", "normalized_rank"])
        for j, name in enumerate(feature_names):
            for v, r in zip(X[:, j], y):
                w.writerow([name, repr(float(v)), repr(float(r))])


def write_tie_strength_csv(curve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "mean_rank_gap", "pairs"])
        for level, gap, n in curve.rows():
            w.writerow([repr(level), repr(gap), n])
