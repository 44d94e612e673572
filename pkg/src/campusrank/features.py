"""Behavioral feature extraction.

Each student-semester is summarised by 23 raw features in three families:

* diligence: nine visit counts at study locations,
* orderliness: breakfast frequency and the temporal entropy of showering
  and shopping,
* sleep: one-hot modal wake-up and bed hours.

Counts and entropies are z-scored across the whole grade of a semester,
one-hot columns are passed through untouched.
"""

from __future__ import annotations

import datetime as dt
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import entropy as _shannon
from sklearn.compose import ColumnTransformer
from sklearn.impute import SimpleImputer
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .events import EventLog, IngestError, LocationType, Semester, SemesterCalendar, StudentRegistry

__all__ = [
    "DILIGENCE_FEATURES",
    "ORDERLINESS_FEATURES",
    "WAKE_BINS",
    "BED_BINS",
    "SLEEP_FEATURES",
    "FEATURE_NAMES",
    "N_SCALED",
    "FeatureMatrix",
    "temporal_entropy",
    "diligence_features",
    "orderliness_features",
    "sleep_pattern",
    "student_features",
    "make_standardizer",
    "assemble_features",
    "write_feature_csv",
    "read_feature_csv",
]

DILIGENCE_FEATURES = (
    "lib_entries",
    "lib_entries_weekend",
    "lib_entries_before_exam",
    "books_borrowed",
    "water_fetches",
    "water_fetches_weekend",
    "water_fetches_before_exam",
    "print_jobs",
    "print_jobs_before_exam",
)
ORDERLINESS_FEATURES = ("breakfast_freq", "shower_entropy", "shopping_entropy")
WAKE_BINS = (6, 7, 8, 9, 10)
BED_BINS = (21, 22, 23, 0, 1, 2)
SLEEP_FEATURES = tuple(f"wake_{h}" for h in WAKE_BINS) + tuple(f"bed_{h}" for h in BED_BINS)
FEATURE_NAMES = DILIGENCE_FEATURES + ORDERLINESS_FEATURES + SLEEP_FEATURES
N_SCALED = len(DILIGENCE_FEATURES) + len(ORDERLINESS_FEATURES)

MIN_SLEEP_DAYS = 5
BREAKFAST_START = dt.time(6, 0)
BREAKFAST_END = dt.time(9, 0)


def _circular_kernel(bandwidth: float) -> np.ndarray:
    hours = np.arange(24)
    diff = np.abs(hours[:, None] - hours[None, :])
    dist = np.minimum(diff, 24 - diff)
    return np.exp(-0.5 * (dist / bandwidth) ** 2)


def temporal_entropy(timestamps, bandwidth: float = 1.0) -> float:
    """Shannon entropy (nats) of the hour-of-day distribution of events.

    The 24-bin hour histogram is smoothed with a circular Gaussian kernel
    of ``bandwidth`` hours and renormalized.  ``bandwidth=0`` uses the raw
    histogram.  Returns NaN for an empty input.
    """
    if bandwidth < 0:
        raise ValueError("bandwidth must be non-negative")
    hist = np.bincount([t.hour for t in timestamps], minlength=24).astype(float)
    if hist.sum() == 0:
        return float("nan")
    if bandwidth > 0:
        hist = _circular_kernel(bandwidth) @ hist
    return float(_shannon(hist))


def diligence_features(events, semester: Semester) -> np.ndarray:
    """Nine study-location counts, in :data:`DILIGENCE_FEATURES` order."""
    lib = lib_wk = lib_ex = books = water = water_wk = water_ex = prints = prints_ex = 0
    for e in events:
        day = e.timestamp.date()
        weekend = day.weekday() >= 5
        before_exam = semester.is_before_exam(day)
        lt = e.location_type
        if lt is LocationType.LIBRARY_GATE:
            lib += 1
            lib_wk += weekend
            lib_ex += before_exam
        elif lt is LocationType.LIBRARY_BORROW:
            books += 1
        elif lt is LocationType.WATER_DISPENSER:
            water += 1
            water_wk += weekend
            water_ex += before_exam
        elif lt is LocationType.PRINTER:
            prints += 1
            prints_ex += before_exam
    return np.array([lib, lib_wk, lib_ex, books, water, water_wk, water_ex, prints, prints_ex],
                    dtype=float)


def orderliness_features(events, bandwidth: float = 1.0) -> np.ndarray:
    """``(breakfast_freq, shower_entropy, shopping_entropy)``.

    Breakfast counts cafeteria swipes in ``[06:00, 09:00)``.  Entropies are
    NaN for students without shower or supermarket records.
    """
    breakfast = 0
    showers, shopping = [], []
    for e in events:
        lt = e.location_type
        if lt is LocationType.CAFETERIA:
            breakfast += BREAKFAST_START <= e.timestamp.time() < BREAKFAST_END
        elif lt is LocationType.SHOWER:
            showers.append(e.timestamp)
        elif lt is LocationType.SUPERMARKET:
            shopping.append(e.timestamp)
    return np.array([breakfast, temporal_entropy(showers, bandwidth),
                     temporal_entropy(shopping, bandwidth)])


def _wake_bin(hour: int) -> int:
    # position on the 04:00-anchored clock: 04:00 -> 4, ..., 03:00 -> 27
    return min(max((hour - 4) % 24 + 4, WAKE_BINS[0]), WAKE_BINS[-1])


def _bed_slot(hour: int) -> int:
    # index into BED_BINS; evening hours before 21 clip to 21, 03:00 to 02
    anchored = (hour - 4) % 24 + 4
    return min(max(anchored, 21), 26) - 21


def sleep_pattern(events, min_days: int = MIN_SLEEP_DAYS):
    """One-hot modal wake-up and bed hours.

    Days run from 04:00 to 03:59:59.  The first and last event hours of
    each active day are clipped into :data:`WAKE_BINS` and
    :data:`BED_BINS`; the most frequent bin wins, with ties going to the
    earlier wake bin and the later bed bin.  Fewer than ``min_days``
    active days gives all-zero vectors.

    Returns
    -------
    wake : ndarray of shape (5,)
    bed : ndarray of shape (6,)
    """
    wake = np.zeros(len(WAKE_BINS))
    bed = np.zeros(len(BED_BINS))
    first: dict[dt.date, dt.datetime] = {}
    last: dict[dt.date, dt.datetime] = {}
    for e in events:
        day = e.anchored_day
        t = e.timestamp
        if day not in first or t < first[day]:
            first[day] = t
        if day not in last or t > last[day]:
            last[day] = t
    if len(first) < min_days:
        return wake, bed
    wake_counts = Counter(_wake_bin(t.hour) for t in first.values())
    bed_counts = Counter(_bed_slot(t.hour) for t in last.values())
    # max() keeps the first maximal item: iterate wake bins early-to-late and
    # bed slots late-to-early
    w = max(WAKE_BINS, key=lambda b: wake_counts.get(b, 0))
    b = max(reversed(range(len(BED_BINS))), key=lambda s: bed_counts.get(s, 0))
    wake[WAKE_BINS.index(w)] = 1.0
    bed[b] = 1.0
    return wake, bed


def student_features(events, semester: Semester, bandwidth: float = 1.0,
                     min_sleep_days: int = MIN_SLEEP_DAYS) -> np.ndarray:
    """Raw 23-dimensional feature vector of one student in one semester."""
    wake, bed = sleep_pattern(events, min_sleep_days)
    return np.concatenate([diligence_features(events, semester),
                           orderliness_features(events, bandwidth), wake, bed])


def make_standardizer(n_scaled: int = N_SCALED) -> ColumnTransformer:
    """Mean-impute and z-score the leading ``n_scaled`` columns.

    Remaining (one-hot) columns pass through.  Constant columns map to
    zero since :class:`~sklearn.preprocessing.StandardScaler` leaves their
    scale at one.
    """
    scaled = make_pipeline(SimpleImputer(strategy="mean", keep_empty_features=True),
                           StandardScaler())
    return ColumnTransformer([("scaled", scaled, list(range(n_scaled)))],
                             remainder="passthrough", verbose_feature_names_out=False)


@dataclass
class FeatureMatrix:
    """Standardized features and normalized-rank labels of one major-semester."""

    semester_id: int
    major_id: str
    student_ids: list[str]
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape != (len(self.student_ids), len(self.feature_names)):
            raise ValueError(f"X has shape {self.X.shape}, expected "
                             f"({len(self.student_ids)}, {len(self.feature_names)})")
        if self.y.shape != (len(self.student_ids),):
            raise ValueError("y must have one label per student")
        if len(set(self.student_ids)) != len(self.student_ids):
            raise ValueError("duplicate student rows")


def assemble_features(log: EventLog, registry: StudentRegistry, calendar: SemesterCalendar,
                      semester_id: int, ranks=None, grade_id=None, bandwidth: float = 1.0,
                      min_sleep_days: int = MIN_SLEEP_DAYS) -> list[FeatureMatrix]:
    """Build standardized feature matrices of one semester, split by major.

    Parameters
    ----------
    ranks : dict, optional
        ``(student_id, semester_id) -> normalized_rank``.  Students without a
        rank get ``y = nan``.
    grade_id : str, optional
        Restrict the cohort to one grade.  Standardization statistics are
        computed over the whole cohort, not per major.
    """
    semester = calendar[semester_id]
    cohort = registry.students(grade_id)
    ranks = ranks or {}
    unknown = sorted(s for (s, sem) in ranks if sem == semester_id and s not in registry)
    if unknown:
        raise IngestError(f"students with ranks but absent from roster: {unknown[:5]}")
    if not cohort:
        return []
    raw = np.vstack([
        student_features(log.events_for(s, semester_id), semester, bandwidth, min_sleep_days)
        for s in cohort
    ])
    X = make_standardizer().fit_transform(raw)
    y = np.array([ranks.get((s, semester_id), np.nan) for s in cohort])
    majors = np.array([registry.major_of(s) for s in cohort])
    out = []
    for m in sorted(set(majors)):
        rows = np.flatnonzero(majors == m)
        out.append(FeatureMatrix(semester_id, m, [cohort[i] for i in rows], X[rows], y[rows]))
    return out


def write_feature_csv(matrices, path) -> None:
    """Write matrices as ``student_id,major_id,semester_id,<features>,normalized_rank``."""
    frames = []
    for fm in matrices:
        df = pd.DataFrame(fm.X, columns=list(fm.feature_names))
        df.insert(0, "semester_id", fm.semester_id)
        df.insert(0, "major_id", fm.major_id)
        df.insert(0, "student_id", fm.student_ids)
        df["normalized_rank"] = fm.y
        frames.append(df)
    if frames:
        table = pd.concat(frames, ignore_index=True)
    else:
        table = pd.DataFrame(columns=["student_id", "major_id", "semester_id",
                                      *FEATURE_NAMES, "normalized_rank"])
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_feature_csv(path) -> list[FeatureMatrix]:
    df = pd.read_csv(path, dtype={"student_id": str, "major_id": str})
    lead = ["student_id", "major_id", "semester_id"]
    if list(df.columns[:3]) != lead or df.columns[-1] != "normalized_rank":
        raise IngestError(f"{path}: malformed feature header")
    names = tuple(df.columns[3:-1])
    if df.duplicated(["student_id", "semester_id"]).any():
        raise IngestError(f"{path}: duplicate student rows")
    out = []
    for (sem, major), g in df.groupby(["semester_id", "major_id"], sort=True):
        out.append(FeatureMatrix(int(sem), str(major), g["student_id"].tolist(),
                                 g[list(names)].to_numpy(float),
                                 g["normalized_rank"].to_numpy(float), names))
    return out
