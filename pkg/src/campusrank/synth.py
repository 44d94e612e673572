"""Synthetic data with planted ground truth.

Three generators live here:

* :func:`gen_planted` draws a two-grade ranking benchmark from low-rank,
  drifting weights with clustered students.
* :func:`gen_event_log` writes raw smart-card events whose features follow
  planted per-student intents.
* :func:`gen_colocation_log` plants always-together student pairs against
  random background visits, for threshold calibration.

All generators are pure functions of their spec.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np
from scipy.special import expit
from scipy.stats import entropy as _shannon

from .events import (BehaviorEvent, EventLog, LocationType, Semester, SemesterCalendar,
                     StudentRegistry)
from .evaluation import spearman
from .features import BED_BINS, FEATURE_NAMES, WAKE_BINS, FeatureMatrix, _circular_kernel
from .model.dataset import RankingDataset
from .model.inference import blend_scores, normalized_ranks
from .similarity import SimilarityGraph

__all__ = [
    "SynthSpec",
    "PlantedGrade",
    "PlantedData",
    "gen_planted",
    "EventSpec",
    "StudentIntent",
    "EventBundle",
    "plant_intents",
    "gen_event_log",
    "gen_colocation_log",
    "ColocationBundle",
    "hour_distribution_entropy",
]


# -- planted ranking benchmark ----------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the planted ranking benchmark.

    Attributes
    ----------
    major_sizes : tuple of int
        Students per major in each grade.
    rank : int
        Number of latent categories ``k*``.
    drift : float
        Std of the per-semester Gaussian increment of the category weights
        ``V*``, in weight units.
    label_noise : float
        Std of the noise added to the latent score before ranking.
    cluster_size : int
        Students per behavior cluster within a major.
    cluster_share : float
        Fraction of feature variance shared inside a cluster.
    feature_noise : float
        Std of the measurement noise between latent and observed features.
    weight_norm : float
        Average norm of a major's weight vector in the first semester.
    """

    n_majors: int = 6
    n_semesters: int = 5
    major_sizes: tuple[int, ...] = (50, 80, 110, 140, 170, 200)
    rank: int = 3
    n_features: int = 23
    drift: float = 0.1
    label_noise: float = 0.5
    cluster_size: int = 5
    cluster_share: float = 0.5
    feature_noise: float = 0.3
    weight_norm: float = 2.0
    xi: float = 0.2
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "major_sizes", tuple(int(n) for n in self.major_sizes))
        self.validate()

    def validate(self) -> None:
        if self.n_majors < 1 or self.n_semesters < 1 or self.n_features < 1:
            raise ValueError("n_majors, n_semesters and n_features must be positive")
        if len(self.major_sizes) != self.n_majors:
            raise ValueError(f"{len(self.major_sizes)} major sizes for {self.n_majors} majors")
        if min(self.major_sizes) < 2:
            raise ValueError("every major needs at least 2 students")
        if not 1 <= self.rank <= min(self.n_majors, self.n_features):
            raise ValueError(f"rank {self.rank} infeasible: must lie in "
                             f"[1, {min(self.n_majors, self.n_features)}]")
        if self.drift < 0 or self.label_noise < 0 or self.feature_noise < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0 <= self.cluster_share <= 1 or self.cluster_size < 1:
            raise ValueError("cluster_share must lie in [0, 1] and cluster_size be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["major_sizes"] = list(self.major_sizes)
        return d

    @classmethod
    def from_dict(cls, values: dict) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown synth keys: {unknown}")
        return cls(**values)


@dataclass
class PlantedGrade:
    grade_id: str
    student_ids: list[str]
    majors: dict[str, str]
    clusters: dict[str, int]
    matrices: list[FeatureMatrix]
    ranks: dict[tuple[str, int], float]
    edges: list[tuple[str, str, float]]

    def similarity(self) -> SimilarityGraph:
        return SimilarityGraph.from_edges(self.edges, self.student_ids, self.majors)

    def dataset(self, semester_order=None, major_order=None) -> RankingDataset:
        return RankingDataset.from_feature_matrices(self.matrices, self.similarity(),
                                                    semester_order, major_order)


@dataclass
class PlantedData:
    spec: SynthSpec
    semesters: list[int]
    majors: list[str]
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    train: PlantedGrade
    test: PlantedGrade
    oracle: dict = field(default_factory=dict)

    def truth(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "semesters": self.semesters,
            "majors": self.majors,
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "W": self.W.tolist(),
            "clusters": {g.grade_id: g.clusters for g in (self.train, self.test)},
            "oracle": self.oracle,
        }

    def write_truth(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.truth(), fh, indent=1)
            fh.write("\n")


def _planted_weights(spec: SynthSpec, rng):
    M, S, k, p = spec.n_majors, spec.n_semesters, spec.rank, spec.n_features
    U = np.zeros((M, k))
    for m in range(M):
        nnz = rng.integers(1, min(2, k) + 1)
        cols = rng.choice(k, size=nnz, replace=False)
        U[m, cols] = rng.uniform(0.5, 1.5, size=nnz)
    V1 = rng.normal(size=(k, p))
    scale = spec.weight_norm / np.linalg.norm(U @ V1, axis=1).mean()
    V = np.empty((S, k, p))
    V[0] = V1 * scale
    for s in range(1, S):
        V[s] = V[s - 1] + spec.drift * rng.normal(size=(k, p))
    W = np.einsum("mk,skp->smp", U, V)
    return U, V, W


def _grade(spec: SynthSpec, grade_id: str, W, semesters, majors, names, rng) -> PlantedGrade:
    a = spec.cluster_share
    ids, major_of, cluster_of, edges = [], {}, {}, []
    members = []
    next_cluster = 0
    for m, (major, size) in enumerate(zip(majors, spec.major_sizes)):
        sids = [f"{grade_id}-{major}-{i:04d}" for i in range(size)]
        order = rng.permutation(size)
        local = order // spec.cluster_size
        for sid, c in zip(sids, local):
            major_of[sid] = major
            cluster_of[sid] = int(next_cluster + c)
        n_clusters = int(local.max()) + 1
        for c in range(n_clusters):
            group = [sids[i] for i in np.flatnonzero(local == c)]
            for x in range(len(group)):
                for y in range(x + 1, len(group)):
                    edges.append((group[x], group[y], float(rng.uniform(0.5, 1.0))))
        members.append((major, sids, local, n_clusters))
        next_cluster += n_clusters
        ids.extend(sids)
    matrices, ranks = [], {}
    p = spec.n_features
    for s, sem in enumerate(semesters):
        for m, (major, sids, local, n_clusters) in enumerate(members):
            n = len(sids)
            shared = rng.normal(size=(n_clusters, p))[local]
            latent = math.sqrt(a) * shared + math.sqrt(1 - a) * rng.normal(size=(n, p))
            X = latent + spec.feature_noise * rng.normal(size=(n, p))
            score = latent @ W[s, m] + spec.label_noise * rng.normal(size=n)
            y = normalized_ranks(score, sids)
            matrices.append(FeatureMatrix(sem, major, sids, X, y, names))
            ranks.update({(sid, sem): float(r) for sid, r in zip(sids, y)})
    return PlantedGrade(grade_id, ids, major_of, cluster_of, matrices, ranks, edges)


def oracle_rho(data: PlantedData, grade: PlantedGrade, xi: float) -> dict[int, float]:
    """Mean Spearman per semester when scoring observed features with ``W*``."""
    ds = grade.dataset(data.semesters, data.majors)
    out = {}
    for sem in data.semesters:
        rhos = []
        for t in ds.task_list():
            if t.semester_id != sem:
                continue
            f = blend_scores(t.X @ data.W[t.s, t.m], t.edges, t.tau, xi)
            rhos.append(spearman(normalized_ranks(f, t.student_ids), t.y))
        out[sem] = float(np.mean(rhos))
    return out


def gen_planted(spec: SynthSpec | None = None) -> PlantedData:
    """Draw the planted benchmark: weights, a training grade and a test grade.

    ``W*^s = U* V*^s`` with non-negative ``U*`` holding at most two nonzeros
    per major, and ``V*`` following a Gaussian random walk over semesters.
    Both grades share ``W*`` and draw students independently.  Observed
    features are a noisy view of latent features that are partly shared
    inside each cluster; labels rank the latent score plus noise.
    """
    spec = spec or SynthSpec()
    weight_seq, train_seq, test_seq = np.random.SeedSequence(spec.seed).spawn(3)
    U, V, W = _planted_weights(spec, np.random.default_rng(weight_seq))
    width = len(str(spec.n_majors))
    majors = [f"m{m + 1:0{width}d}" for m in range(spec.n_majors)]
    semesters = list(range(1, spec.n_semesters + 1))
    names = FEATURE_NAMES if spec.n_features == len(FEATURE_NAMES) else tuple(
        f"x{j}" for j in range(spec.n_features))
    train = _grade(spec, "A", W, semesters, majors, names, np.random.default_rng(train_seq))
    test = _grade(spec, "B", W, semesters, majors, names, np.random.default_rng(test_seq))
    data = PlantedData(spec, semesters, majors, U, V, W, train, test)
    blended = oracle_rho(data, test, spec.xi)
    raw = oracle_rho(data, test, 0.0)
    data.oracle = {
        "xi": spec.xi,
        "per_semester": {str(k): v for k, v in blended.items()},
        "mean": float(np.mean(list(blended.values()))),
        "unblended_per_semester": {str(k): v for k, v in raw.items()},
        "unblended_mean": float(np.mean(list(raw.values()))),
    }
    return data


# -- event logs from planted intents ---------------------------------------------------


@dataclass(frozen=True)
class EventSpec:
    """Parameters of the raw event-log generator.

    Attributes
    ----------
    major_sizes : tuple of int
        Students per major of the single generated grade.
    semester_days : int
        Calendar days per semester; the exam period fills the last
        ``exam_days`` of it.
    active_prob : float
        Probability that a student is on campus on a given day.
    printer_zero_fraction : float
        Share of students who never print.
    rank_noise : float
        Std of the per-semester noise between the latent trait and the
        performance score.
    """

    major_sizes: tuple[int, ...] = (40, 40, 40)
    n_semesters: int = 1
    semester_days: int = 100
    exam_days: int = 14
    gap_days: int = 40
    start: str = "2023-09-04"
    active_prob: float = 0.92
    printer_zero_fraction: float = 0.2
    rank_noise: float = 0.5
    grade_id: str = "g1"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "major_sizes", tuple(int(n) for n in self.major_sizes))
        if min(self.major_sizes) < 1 or self.n_semesters < 1:
            raise ValueError("major sizes and n_semesters must be positive")
        if not 0 < self.exam_days < self.semester_days:
            raise ValueError("exam period must fit inside the semester")

    def calendar(self) -> SemesterCalendar:
        start = dt.date.fromisoformat(self.start)
        sems = []
        for s in range(self.n_semesters):
            first = start + dt.timedelta(days=s * (self.semester_days + self.gap_days))
            last = first + dt.timedelta(days=self.semester_days - 1)
            exam = last - dt.timedelta(days=self.exam_days - 1)
            sems.append(Semester(s + 1, first, last, exam))
        return SemesterCalendar(sems)


@dataclass
class StudentIntent:
    """Planted behavior of one student; rates are per active day."""

    student_id: str
    major_id: str
    trait: float
    lib_rate: float
    borrow_rate: float
    water_rate: float
    print_rate: float
    weekend_factor: float
    exam_factor: float
    breakfast_prob: float
    shower_rate: float
    shower_pmf: np.ndarray
    shopping_rate: float
    shopping_pmf: np.ndarray
    wake_mode: int
    bed_mode: int
    dorm: int

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["shower_pmf"] = self.shower_pmf.tolist()
        d["shopping_pmf"] = self.shopping_pmf.tolist()
        return d


@dataclass
class EventBundle:
    events: list[BehaviorEvent]
    registry: StudentRegistry
    calendar: SemesterCalendar
    ranks: dict[tuple[str, int], float]
    intents: list[StudentIntent]
    spec: EventSpec

    def log(self) -> EventLog:
        return EventLog(self.events, self.registry, self.calendar)

    def expected_features(self, semester_id: int, bandwidth: float = 1.0) -> dict:
        """Planted feature intents: expected counts and entropies per student."""
        return {it.student_id: _expected(it, self.calendar[semester_id], self.spec.active_prob,
                                         bandwidth)
                for it in self.intents}


def _hour_pmf(peak: int, spread: float) -> np.ndarray:
    """Mixture of a point mass at ``peak`` and the uniform distribution."""
    pmf = np.full(24, spread / 24)
    pmf[peak % 24] += 1.0 - spread
    return pmf


def hour_distribution_entropy(pmf, bandwidth: float = 1.0) -> float:
    """Entropy of a 24-bin hour distribution after the feature smoothing."""
    pmf = np.asarray(pmf, dtype=float)
    if bandwidth > 0:
        pmf = _circular_kernel(bandwidth) @ pmf
    return float(_shannon(pmf))


# offsets around the modal wake and bed hours on individual days
_HOUR_JITTER = np.array([-1, 0, 1])
_JITTER_P = np.array([0.1, 0.8, 0.1])


def plant_intents(spec: EventSpec, rng) -> list[StudentIntent]:
    """Draw per-student intents linked to a latent diligence trait."""
    out = []
    width = len(str(len(spec.major_sizes)))
    k = 0
    for m, size in enumerate(spec.major_sizes):
        major = f"m{m + 1:0{width}d}"
        for i in range(size):
            c = rng.normal()
            e = rng.normal(size=12)
            prints = 0.0 if rng.random() < spec.printer_zero_fraction else math.exp(
                math.log(0.5) + 0.3 * c + 0.4 * e[3])
            wake_idx = int(np.clip(np.rint(2.0 - c + 0.7 * e[8]), 0, len(WAKE_BINS) - 1))
            bed_idx = int(np.clip(np.rint(2.5 - 0.8 * c + 0.8 * e[9]), 0, len(BED_BINS) - 1))
            out.append(StudentIntent(
                student_id=f"{spec.grade_id}-{major}-{i:04d}",
                major_id=major,
                trait=float(c),
                lib_rate=math.exp(0.6 * c + 0.4 * e[0]),
                borrow_rate=math.exp(math.log(0.25) + 0.5 * c + 0.4 * e[1]),
                water_rate=math.exp(math.log(1.5) + 0.4 * c + 0.4 * e[2]),
                print_rate=prints,
                weekend_factor=float(rng.uniform(0.4, 1.4)),
                exam_factor=float(rng.uniform(1.0, 2.5)),
                breakfast_prob=float(expit(0.3 + c + 0.5 * e[4])),
                shower_rate=0.6,
                shower_pmf=_hour_pmf(int(rng.integers(19, 23)), float(expit(-1.2 * c + e[5]))),
                shopping_rate=0.5,
                shopping_pmf=_hour_pmf(int(rng.integers(12, 20)), float(expit(-c + e[6]))),
                wake_mode=WAKE_BINS[wake_idx],
                bed_mode=BED_BINS[bed_idx],
                dorm=k % 4,
            ))
            k += 1
    return out


def _semester_days(sem: Semester):
    days = np.arange(np.datetime64(sem.start_date), np.datetime64(sem.end_date) + 1)
    weekend = np.isin((days.astype("datetime64[D]").view("int64") + 3) % 7, (5, 6))
    exam_lo = np.datetime64(sem.exam_start_date) - 20
    before_exam = (days >= exam_lo) & (days < np.datetime64(sem.exam_start_date))
    return days, weekend, before_exam


def _expected(it: StudentIntent, sem: Semester, active: float, bandwidth: float) -> dict:
    days, weekend, before = _semester_days(sem)
    wk = np.where(weekend, it.weekend_factor, 1.0)
    ex = np.where(before, it.exam_factor, 1.0)
    base = active * wk * ex

    def expected(rate, mask=None):
        vals = rate * base
        return float(vals.sum() if mask is None else vals[mask].sum())

    early = float(sum(p for d, p in zip(_HOUR_JITTER, _JITTER_P) if it.wake_mode + d < 9))
    return {
        "lib_entries": expected(it.lib_rate),
        "lib_entries_weekend": expected(it.lib_rate, weekend),
        "lib_entries_before_exam": expected(it.lib_rate, before),
        "books_borrowed": expected(it.borrow_rate),
        "water_fetches": expected(it.water_rate),
        "water_fetches_weekend": expected(it.water_rate, weekend),
        "water_fetches_before_exam": expected(it.water_rate, before),
        "print_jobs": expected(it.print_rate),
        "print_jobs_before_exam": expected(it.print_rate, before),
        "breakfast_freq": active * len(days) * it.breakfast_prob * early,
        "shower_entropy": hour_distribution_entropy(it.shower_pmf, bandwidth),
        "shopping_entropy": hour_distribution_entropy(it.shopping_pmf, bandwidth),
        "wake_mode": it.wake_mode,
        "bed_mode": it.bed_mode,
    }


_LOCATIONS = {
    LocationType.LIBRARY_GATE: ["lib-gate-1", "lib-gate-2"],
    LocationType.LIBRARY_BORROW: ["lib-desk"],
    LocationType.WATER_DISPENSER: [f"water-{i}" for i in range(1, 7)],
    LocationType.PRINTER: ["printer-1", "printer-2"],
    LocationType.CAFETERIA: ["cafe-1", "cafe-2", "cafe-3"],
    LocationType.SUPERMARKET: ["market-1"],
}


class _Emitter:
    def __init__(self, sid, rng):
        self.sid = sid
        self.rng = rng
        self.rows: list[tuple[np.datetime64, str, LocationType, Decimal]] = []

    def add(self, times, lt, locations=None, paid=False):
        """Record events at ``times`` (datetime64 seconds) of location type ``lt``."""
        n = len(times)
        if n == 0:
            return
        names = locations if locations is not None else _LOCATIONS[lt]
        picks = self.rng.integers(0, len(names), size=n)
        cents = self.rng.integers(300, 3000, size=n) if paid else np.zeros(n, dtype=int)
        for t, j, c in zip(times, picks, cents):
            self.rows.append((t, names[j], lt, Decimal(int(c)).scaleb(-2) if paid else Decimal(0)))


def _seconds(days, lo_hour, hi_hour, rng):
    span = int((hi_hour - lo_hour) * 3600)
    offs = rng.integers(0, span, size=len(days)) + int(lo_hour * 3600)
    return days.astype("datetime64[s]") + offs.astype("timedelta64[s]")


def _student_events(it: StudentIntent, sem: Semester, spec: EventSpec, rng) -> list:
    days, weekend, before = _semester_days(sem)
    on = rng.random(len(days)) < spec.active_prob
    days, weekend, before = days[on], weekend[on], before[on]
    n = len(days)
    em = _Emitter(it.student_id, rng)
    factor = np.where(weekend, it.weekend_factor, 1.0) * np.where(before, it.exam_factor, 1.0)
    dorm = [f"dorm-{it.dorm}"]

    wake_h = it.wake_mode + rng.choice(_HOUR_JITTER, size=n, p=_JITTER_P)
    wake = days.astype("datetime64[s]") + (wake_h * 3600 + rng.integers(0, 3600, size=n)
                                           ).astype("timedelta64[s]")
    em.add(wake, LocationType.DORMITORY_GATE, dorm)
    bed_ext = it.bed_mode + 24 * (it.bed_mode < 12)
    bed_h = bed_ext + rng.choice(_HOUR_JITTER, size=n, p=_JITTER_P)
    em.add(days.astype("datetime64[s]") + (bed_h * 3600 + rng.integers(0, 3600, size=n)
                                           ).astype("timedelta64[s]"),
           LocationType.DORMITORY_GATE, dorm)

    for lt, rate in ((LocationType.LIBRARY_GATE, it.lib_rate),
                     (LocationType.LIBRARY_BORROW, it.borrow_rate),
                     (LocationType.WATER_DISPENSER, it.water_rate),
                     (LocationType.PRINTER, it.print_rate)):
        counts = rng.poisson(rate * factor)
        em.add(_seconds(np.repeat(days, counts), 11, 21, rng), lt)

    # breakfast between waking and 09:00
    nine = days.astype("datetime64[s]") + np.timedelta64(9 * 3600, "s")
    room = (nine - wake).astype(np.int64) - 60
    eat = (rng.random(n) < it.breakfast_prob) & (room > 0)
    offs = (rng.random(n) * np.maximum(room, 1)).astype(np.int64) + 60
    em.add((wake + offs.astype("timedelta64[s]"))[eat], LocationType.CAFETERIA, paid=True)
    em.add(_seconds(days[rng.random(n) < 0.8], 11.5, 13, rng), LocationType.CAFETERIA, paid=True)
    em.add(_seconds(days[rng.random(n) < 0.7], 17, 19, rng), LocationType.CAFETERIA, paid=True)

    for lt, rate, pmf, locs in ((LocationType.SHOWER, it.shower_rate, it.shower_pmf,
                                 [f"shower-{it.dorm}"]),
                                (LocationType.SUPERMARKET, it.shopping_rate, it.shopping_pmf,
                                 None)):
        counts = rng.poisson(rate, size=n)
        when = np.repeat(days, counts)
        hours = rng.choice(24, size=len(when), p=pmf)
        # hours before the 04:00 day boundary belong to the following calendar date
        hours = hours + 24 * (hours < 4)
        offsets = (hours * 3600 + rng.integers(0, 3600, size=len(when))).astype("timedelta64[s]")
        em.add(when.astype("datetime64[s]") + offsets, lt, locs,
               paid=lt is LocationType.SUPERMARKET)

    return [BehaviorEvent(it.student_id, t.astype(dt.datetime), loc, lt, amount)
            for t, loc, lt, amount in em.rows]


def gen_event_log(spec: EventSpec | None = None, intents=None) -> EventBundle:
    """Generate raw events for one grade from planted intents.

    Per-student streams come from ``SeedSequence(spec.seed)`` children, so a
    student's events do not depend on the other students.  Ranks per
    semester order the latent trait plus ``rank_noise`` noise within each
    major.
    """
    spec = spec or EventSpec()
    root = np.random.SeedSequence(spec.seed)
    intent_seq, rank_seq, student_seq = root.spawn(3)
    if intents is None:
        intents = plant_intents(spec, np.random.default_rng(intent_seq))
    calendar = spec.calendar()
    registry = StudentRegistry({it.student_id: it.major_id for it in intents},
                               {it.student_id: spec.grade_id for it in intents})
    events = []
    for it, seq in zip(intents, student_seq.spawn(len(intents))):
        rng = np.random.default_rng(seq)
        for sem in calendar:
            events.extend(_student_events(it, sem, spec, rng))
    events.sort(key=lambda e: (e.timestamp, e.student_id, e.location_id))
    rank_rng = np.random.default_rng(rank_seq)
    ranks = {}
    by_major: dict[str, list[StudentIntent]] = {}
    for it in intents:
        by_major.setdefault(it.major_id, []).append(it)
    for sem in calendar:
        for major in sorted(by_major):
            group = by_major[major]
            score = np.array([it.trait for it in group]) + spec.rank_noise * rank_rng.normal(
                size=len(group))
            ids = [it.student_id for it in group]
            ranks.update({(sid, sem.semester_id): float(r)
                          for sid, r in zip(ids, normalized_ranks(score, ids))})
    return EventBundle(events, registry, calendar, ranks, list(intents), spec)


# -- planted co-location --------------------------------------------------------------


@dataclass
class ColocationBundle:
    events: list[BehaviorEvent]
    registry: StudentRegistry
    calendar: SemesterCalendar
    planted: set[tuple[str, str]]

    def log(self) -> EventLog:
        return EventLog(self.events, self.registry, self.calendar)


def gen_colocation_log(n_students: int = 300, n_pairs: int = 50, days: int = 60,
                       rates=None, seed: int = 0) -> ColocationBundle:
    """Background visits plus ``n_pairs`` always-together student pairs.

    Every student visits cafeterias, supermarkets and library gates at
    Poisson rates per day, at uniform times between 08:00 and 21:00.  The
    second member of a planted pair has no visits of its own; it copies
    every visit of its partner, 0 to 30 seconds later.

    Returns
    -------
    ColocationBundle
        ``planted`` holds pairs as sorted ``(student_a, student_b)`` tuples.
    """
    if 2 * n_pairs > n_students:
        raise ValueError("not enough students for the planted pairs")
    rates = rates or {LocationType.CAFETERIA: 1.5, LocationType.SUPERMARKET: 0.5,
                      LocationType.LIBRARY_GATE: 1.0}
    rng = np.random.default_rng(seed)
    ids = [f"s{i:04d}" for i in range(n_students)]
    perm = rng.permutation(n_students)
    leaders = {int(perm[2 * q]): int(perm[2 * q + 1]) for q in range(n_pairs)}
    followers = set(leaders.values())
    start = dt.date(2024, 3, 4)
    calendar = SemesterCalendar([Semester(1, start, start + dt.timedelta(days=days - 1),
                                          start + dt.timedelta(days=days - 8))])
    day0 = np.datetime64(start).astype("datetime64[s]")
    events = []
    for i in range(n_students):
        if i in followers:
            continue
        visits = []
        for lt, rate in rates.items():
            counts = rng.poisson(rate, size=days)
            when = np.repeat(np.arange(days), counts)
            secs = when * 86400 + 8 * 3600 + rng.integers(0, 13 * 3600, size=len(when))
            names = _LOCATIONS[lt] if lt is not LocationType.SUPERMARKET else [
                "market-1", "market-2"]
            locs = rng.integers(0, len(names), size=len(when))
            visits.extend((int(s), names[l], lt) for s, l in zip(secs, locs))
        copies = [(i, 0)]
        if i in leaders:
            copies.append((leaders[i], None))
        for who, _ in copies:
            lag = rng.integers(0, 31, size=len(visits)) if who != i else np.zeros(len(visits), int)
            for (s, loc, lt), d in zip(visits, lag):
                t = (day0 + np.timedelta64(int(s + d), "s")).astype(dt.datetime)
                events.append(BehaviorEvent(ids[who], t, loc, lt))
    events.sort(key=lambda e: (e.timestamp, e.student_id, e.location_id))
    registry = StudentRegistry({s: "m1" for s in ids}, {s: "g1" for s in ids})
    planted = {tuple(sorted((ids[a], ids[b]))) for a, b in leaders.items()}
    return ColocationBundle(events, registry, calendar, planted)
