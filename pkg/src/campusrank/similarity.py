"""Co-occurrence similarity between students.

Two students co-occur when they produce records at the same location within
a short window.  Chance co-occurrences are removed with a per-location
frequency threshold calibrated against a timestamp-shuffling null model;
surviving counts are row-normalized per location and summed into the tie
strength ``tau``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .events import EventLog, LocationType

__all__ = [
    "DEFAULT_LOCATIONS",
    "CooccurrenceCounts",
    "ThresholdResult",
    "SimilarityGraph",
    "TTestResult",
    "TieStrengthCurve",
    "count_cooccurrences",
    "count_pairs",
    "shuffle_within_students",
    "frequency_histogram",
    "threshold_from_histograms",
    "null_model_threshold",
    "combine_similarity",
    "performance_similarity",
    "pooled_ttest",
    "similarity_ttest",
    "tie_strength_curve",
    "write_thresholds_json",
]

DEFAULT_LOCATIONS = (LocationType.CAFETERIA, LocationType.SUPERMARKET, LocationType.LIBRARY_GATE)
WINDOW_SECONDS = 60


@dataclass
class CooccurrenceCounts:
    location_type: LocationType
    student_ids: list[str]
    counts: sp.csr_matrix

    def get(self, a: str, b: str) -> int:
        i, j = self.student_ids.index(a), self.student_ids.index(b)
        return int(self.counts[i, j])

    def thresholded(self, threshold: float) -> sp.csr_matrix:
        c = self.counts.tocoo()
        keep = c.data >= threshold
        n = len(self.student_ids)
        return sp.csr_matrix((c.data[keep], (c.row[keep], c.col[keep])), shape=(n, n))


def count_pairs(students, seconds, locations, n_students, window_seconds=WINDOW_SECONDS):
    """Symmetric sparse matrix of event-pair co-occurrence counts.

    Every pair of events by different students at the same location at most
    ``window_seconds`` apart adds one to the pair's count.
    """
    students = np.asarray(students, dtype=np.int64)
    seconds = np.asarray(seconds, dtype=np.int64)
    locations = np.asarray(locations, dtype=np.int64)
    order = np.lexsort((seconds, locations))
    s, t, loc = students[order], seconds[order], locations[order]
    lo_parts, hi_parts = [], []
    k = 1
    while k < len(s):
        ok = (loc[k:] == loc[:-k]) & (t[k:] - t[:-k] <= window_seconds)
        # sorted by (location, time): once no pair k apart qualifies, none further apart will
        if not ok.any():
            break
        a, b = s[:-k][ok], s[k:][ok]
        diff = a != b
        lo_parts.append(np.minimum(a[diff], b[diff]))
        hi_parts.append(np.maximum(a[diff], b[diff]))
        k += 1
    if lo_parts:
        lo = np.concatenate(lo_parts)
        hi = np.concatenate(hi_parts)
    else:
        lo = hi = np.zeros(0, dtype=np.int64)
    keys, freq = np.unique(lo * n_students + hi, return_counts=True)
    rows, cols = keys // n_students, keys % n_students
    upper = sp.coo_matrix((freq, (rows, cols)), shape=(n_students, n_students))
    return (upper + upper.T).tocsr()


def count_cooccurrences(log: EventLog, location_type, window_seconds: int = WINDOW_SECONDS,
                        semester_id: int | None = None) -> CooccurrenceCounts:
    lt = LocationType(location_type)
    students, seconds, locs, ids = log.location_columns(lt, semester_id)
    return CooccurrenceCounts(lt, ids, count_pairs(students, seconds, locs, len(ids),
                                                   window_seconds))


def shuffle_within_students(students, seconds, rng) -> np.ndarray:
    """Permute timestamps among each student's own records."""
    students = np.asarray(students)
    seconds = np.asarray(seconds)
    grouped = np.argsort(students, kind="stable")
    shuffled = np.lexsort((rng.random(len(students)), students))
    out = np.empty_like(seconds)
    out[grouped] = seconds[shuffled]
    return out


def frequency_histogram(counts: sp.csr_matrix) -> np.ndarray:
    """Number of unordered pairs at each co-occurrence frequency (index = frequency)."""
    upper = sp.triu(counts, k=1)
    freq = upper.data.astype(np.int64)
    freq = freq[freq > 0]
    return np.bincount(freq, minlength=1)


def threshold_from_histograms(real: np.ndarray, null_mean: np.ndarray,
                              null_std: np.ndarray) -> float:
    """Smallest frequency above which the real histogram beats mean + 2 std.

    Frequencies where neither the real nor the null histogram has mass are
    skipped.  Returns ``inf`` when even the highest frequency fails.
    """
    size = max(len(real), len(null_mean))
    real, null_mean, null_std = (np.pad(a, (0, size - len(a))) for a in (real, null_mean, null_std))
    theta = math.inf
    for f in range(size - 1, 0, -1):
        if real[f] == 0 and null_mean[f] == 0:
            continue
        if real[f] > null_mean[f] + 2.0 * null_std[f]:
            theta = f
        else:
            break
    return theta


@dataclass
class ThresholdResult:
    location_type: LocationType
    threshold: float
    real_curve: np.ndarray
    null_mean_curve: np.ndarray
    null_std_curve: np.ndarray

    def to_dict(self) -> dict:
        return {
            "threshold": None if math.isinf(self.threshold) else int(self.threshold),
            "real_curve": self.real_curve.tolist(),
            "null_mean_curve": self.null_mean_curve.tolist(),
            "null_std_curve": self.null_std_curve.tolist(),
        }


def null_model_threshold(log: EventLog, location_type, repetitions: int = 20, seed=None,
                         window_seconds: int = WINDOW_SECONDS, semester_id: int | None = None,
                         n_jobs: int = 1, scope: str = "student") -> ThresholdResult:
    """Calibrate the co-occurrence threshold of one location type.

    Each repetition permutes every student's timestamps, then recounts
    co-occurrences at ``location_type``.  With ``scope="student"`` the
    permutation runs across all of a student's records; with
    ``scope="location"`` only across the student's records of
    ``location_type``.  Per-student event counts and location multisets are
    preserved either way.  Repetition ``r`` draws from the ``r``-th child of
    ``SeedSequence(seed)`` so the result does not depend on ``n_jobs``.
    """
    lt = LocationType(location_type)
    if scope not in ("student", "location"):
        raise ValueError(f"unknown shuffle scope {scope!r}")
    students, seconds, locs, types, ids = log.student_columns(semester_id)
    mask = types == lt.value
    if scope == "location":
        students, seconds, locs = students[mask], seconds[mask], locs[mask]
        mask = np.ones(len(students), dtype=bool)
    n = len(ids)
    real_counts = count_pairs(students[mask], seconds[mask], locs[mask], n, window_seconds)
    real = frequency_histogram(real_counts)
    if len(np.unique(students[mask])) < 2:
        empty = np.zeros(1)
        return ThresholdResult(lt, math.inf, real.astype(float), empty, empty)

    def one(child):
        rng = np.random.default_rng(child)
        shuffled = shuffle_within_students(students, seconds, rng)
        return frequency_histogram(
            count_pairs(students[mask], shuffled[mask], locs[mask], n, window_seconds))

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(repetitions)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            hists = list(pool.map(one, children))
    else:
        hists = [one(c) for c in children]
    size = max(len(real), *(len(h) for h in hists))
    stack = np.vstack([np.pad(h, (0, size - len(h))) for h in hists]).astype(float)
    mean, std = stack.mean(axis=0), stack.std(axis=0)
    theta = threshold_from_histograms(real, mean, std)
    return ThresholdResult(lt, theta, np.pad(real, (0, size - len(real))).astype(float), mean, std)


@dataclass
class SimilarityGraph:
    """Symmetric tie strengths between students.

    ``majors`` (aligned with ``student_ids``) restricts similar groups to
    same-major students.
    """

    student_ids: list[str]
    tau: sp.csr_matrix
    majors: list[str] | None = None
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = sp.csr_matrix(self.tau, dtype=float)
        self._index = {s: i for i, s in enumerate(self.student_ids)}

    @classmethod
    def from_edges(cls, edges, student_ids=None, majors=None):
        """Build from ``(student_i, student_j, tau)`` triples (each pair once or twice)."""
        edges = list(edges)
        if student_ids is None:
            student_ids = sorted({e[0] for e in edges} | {e[1] for e in edges})
        index = {s: i for i, s in enumerate(student_ids)}
        n = len(student_ids)
        lookup = dict(zip(student_ids, majors)) if isinstance(majors, list) else majors
        # the later of duplicate directed entries wins; symmetrize explicitly
        weights = {}
        for a, b, t in edges:
            if a == b or a not in index or b not in index:
                continue
            weights[tuple(sorted((index[a], index[b])))] = float(t)
        rows = np.array([k[0] for k in weights] + [k[1] for k in weights], dtype=np.int64)
        cols = np.array([k[1] for k in weights] + [k[0] for k in weights], dtype=np.int64)
        vals = np.array(list(weights.values()) * 2, dtype=float)
        tau = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        major_list = None if lookup is None else [lookup[s] for s in student_ids]
        return cls(list(student_ids), tau, major_list)

    def __contains__(self, student_id):
        return student_id in self._index

    def weight(self, a: str, b: str) -> float:
        if a not in self._index or b not in self._index:
            return 0.0
        return float(self.tau[self._index[a], self._index[b]])

    def similar_group(self, student_id: str) -> dict[str, float]:
        """``F_i``: same-major students with positive tie strength, with their weights."""
        if student_id not in self._index:
            return {}
        i = self._index[student_id]
        row = self.tau.getrow(i)
        out = {}
        for j, t in zip(row.indices, row.data):
            if t <= 0 or j == i:
                continue
            if self.majors is not None and self.majors[j] != self.majors[i]:
                continue
            out[self.student_ids[j]] = float(t)
        return dict(sorted(out.items()))

    def edges(self, same_major: bool = False):
        """Undirected positive edges ``(student_i, student_j, tau)`` with ``i < j`` by index."""
        upper = sp.triu(self.tau, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        for r, c, t in zip(upper.row[order], upper.col[order], upper.data[order]):
            if t <= 0:
                continue
            if same_major and self.majors is not None and self.majors[r] != self.majors[c]:
                continue
            yield self.student_ids[r], self.student_ids[c], float(t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["student_i", "student_j", "tau"])
            for a, b, t in self.edges():
                w.writerow([a, b, repr(t)])

    @classmethod
    def read_csv(cls, path, majors=None):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["student_i", "student_j", "tau"]:
                raise ValueError(f"{path}: malformed similarity header {header!r}")
            edges = [(a, b, float(t)) for a, b, t in reader]
        ids = None
        if majors is not None:
            ids = sorted(set(majors) | {e[0] for e in edges} | {e[1] for e in edges})
            majors = {s: majors.get(s) for s in ids}
        return cls.from_edges(edges, ids, majors)


def combine_similarity(counts, thresholds, majors=None) -> SimilarityGraph:
    """Combine thresholded per-location counts into tie strengths.

    ``tau_ij = sum_l c_ij / max_j' c_ij'`` over locations ``l`` after dropping
    counts below each location's threshold, then averaged with its
    transpose.  Rows without surviving counts contribute zero.

    Parameters
    ----------
    counts : list of CooccurrenceCounts
        All over the same student order.
    thresholds : dict
        Location type -> threshold; missing or infinite drops the location.
    majors : dict, optional
        Student id -> major id, used for similar groups.
    """
    counts = list(counts)
    if not counts:
        raise ValueError("no co-occurrence counts given")
    ids = counts[0].student_ids
    n = len(ids)
    thresholds = {LocationType(k): v for k, v in thresholds.items()}
    total = sp.csr_matrix((n, n))
    for c in counts:
        if c.student_ids != ids:
            raise ValueError("co-occurrence counts use different student orders")
        theta = thresholds.get(c.location_type, math.inf)
        kept = c.thresholded(theta).astype(float)
        if kept.nnz == 0:
            continue
        row_max = kept.max(axis=1).toarray().ravel()
        scale = np.divide(1.0, row_max, out=np.zeros(n), where=row_max > 0)
        total = total + sp.diags(scale) @ kept
    tau = ((total + total.T) * 0.5).tocsr()
    tau.eliminate_zeros()
    major_list = None if majors is None else [majors[s] for s in ids]
    return SimilarityGraph(list(ids), tau, major_list,
                           {k.value: v for k, v in thresholds.items()})


def performance_similarity(student: str, group, ranks) -> float:
    """Mean absolute normalized-rank gap between ``student`` and ``group``.

    Smaller means more alike.
    """
    group = list(group)
    if not group:
        raise ValueError("empty group")
    yi = ranks[student]
    return float(np.mean([abs(yi - ranks[j]) for j in group]))


@dataclass
class TTestResult:
    t_statistic: float
    dof: int
    p_value: float
    reject: bool
    n: int
    alpha: float

    def to_dict(self) -> dict:
        return {"t_statistic": self.t_statistic, "dof": self.dof, "p_value": self.p_value,
                "reject": self.reject, "n": self.n, "alpha": self.alpha}


def pooled_ttest(similar, nonsimilar, alpha=0.001) -> TTestResult:
    """One-sided pooled two-sample t-test of ``mean(nonsimilar) > mean(similar)``."""
    a = np.asarray(similar, dtype=float)
    b = np.asarray(nonsimilar, dtype=float)
    if np.array_equal(a, b):
        return TTestResult(0.0, len(a) + len(b) - 2, 0.5, False, len(a), alpha)
    res = stats.ttest_ind(a, b, equal_var=True, alternative="less")
    p = float(res.pvalue)
    return TTestResult(float(res.statistic), len(a) + len(b) - 2, p, p < alpha, len(a), alpha)


def similarity_ttest(graph: SimilarityGraph, ranks, nonsimilar_sample: int = 20, seed=None,
                     alpha: float = 0.001) -> TTestResult:
    """Test whether similar students have closer ranks than non-similar ones.

    For every student with a non-empty similar group, ``Q_F`` is the mean
    rank gap to the group and ``Q_NF`` the mean gap to ``nonsimilar_sample``
    students drawn with replacement from the same-major, non-similar pool.

    Parameters
    ----------
    ranks : dict
        Student id -> normalized rank for one semester.
    """
    if graph.majors is None:
        raise ValueError("graph has no major assignment")
    rng = np.random.default_rng(seed)
    by_major: dict[str, list[str]] = {}
    for s, m in zip(graph.student_ids, graph.majors):
        if s in ranks:
            by_major.setdefault(m, []).append(s)
    q_f, q_nf = [], []
    for s, m in zip(graph.student_ids, graph.majors):
        if s not in ranks:
            continue
        similar = [j for j in graph.similar_group(s) if j in ranks]
        if not similar:
            continue
        excluded = set(similar) | {s}
        pool = [j for j in by_major[m] if j not in excluded]
        if not pool:
            continue
        sample = rng.choice(len(pool), size=nonsimilar_sample, replace=True)
        q_f.append(performance_similarity(s, similar, ranks))
        q_nf.append(performance_similarity(s, [pool[k] for k in sample], ranks))
    if len(q_f) < 2:
        raise ValueError("fewer than 2 students with similar and non-similar groups")
    return pooled_ttest(q_f, q_nf, alpha)


@dataclass
class TieStrengthCurve:
    levels: np.ndarray
    mean_gap: np.ndarray
    counts: np.ndarray
    n_levels: int
    reduced: bool

    def slope(self):
        """Least-squares line of mean gap on level (``scipy.stats.linregress``)."""
        return stats.linregress(self.levels, self.mean_gap)

    def rows(self):
        return list(zip(self.levels.tolist(), self.mean_gap.tolist(), self.counts.tolist()))


def tie_strength_curve(graph: SimilarityGraph, ranks, levels: int = 20) -> TieStrengthCurve:
    """Mean rank gap of similar pairs per tie-strength quantile level.

    Pair strengths are ranked and cut into ``levels`` equal-count levels
    normalized to ``1/levels .. 1``.  With fewer pairs than levels the level
    count drops to the number of pairs and ``reduced`` is set.
    """
    pairs = [(a, b, t) for a, b, t in graph.edges(same_major=True) if a in ranks and b in ranks]
    if not pairs:
        raise ValueError("graph has no usable pairs")
    n_levels, reduced = levels, False
    if len(pairs) < levels:
        n_levels, reduced = len(pairs), True
    tau = np.array([p[2] for p in pairs])
    gap = np.array([abs(ranks[a] - ranks[b]) for a, b, _ in pairs])
    pct = stats.rankdata(tau) / len(tau)
    level = np.clip(np.ceil(pct * n_levels - 1e-9), 1, n_levels).astype(int)
    present = np.unique(level)
    mean_gap = np.array([gap[level == lv].mean() for lv in present])
    counts = np.array([(level == lv).sum() for lv in present])
    return TieStrengthCurve(present / n_levels, mean_gap, counts, n_levels, reduced)


def write_thresholds_json(results, path) -> None:
    payload = {r.location_type.value: r.to_dict() for r in results}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
