"""Ingestion and indexing of smart-card event logs.

Three flat files describe a grade: the event log, the roster mapping each
student to a major and grade, and the semester calendar.  ``ingest_events``
validates all three and returns an immutable :class:`EventLog`.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

__all__ = [
    "LocationType",
    "BehaviorEvent",
    "StudentRegistry",
    "Semester",
    "SemesterCalendar",
    "IngestReport",
    "EventLog",
    "IngestError",
    "ingest_events",
    "read_roster",
    "read_calendar",
    "read_ranks",
    "write_events_csv",
    "EVENT_COLUMNS",
]

EVENT_COLUMNS = ("student_id", "timestamp", "location_id", "location_type", "amount")
ROSTER_COLUMNS = ("student_id", "major_id", "grade_id")
CALENDAR_COLUMNS = ("semester_id", "start_date", "end_date", "exam_start_date")
RANK_COLUMNS = ("student_id", "semester_id", "normalized_rank")

BEFORE_EXAM_DAYS = 20
# Sleep-pattern days start at 04:00 so that post-midnight bedtimes stay with
# the preceding evening.
DAY_ANCHOR_HOUR = 4
MAX_MALFORMED_FRACTION = 0.5


class IngestError(ValueError):
    """Raised when an input file cannot be ingested."""


class LocationType(str, enum.Enum):
    LIBRARY_GATE = "library_gate"
    LIBRARY_BORROW = "library_borrow"
    WATER_DISPENSER = "water_dispenser"
    PRINTER = "printer"
    CAFETERIA = "cafeteria"
    SUPERMARKET = "supermarket"
    SHOWER = "shower"
    DORMITORY_GATE = "dormitory_gate"


@dataclass(frozen=True, slots=True, order=True)
class BehaviorEvent:
    student_id: str
    timestamp: dt.datetime
    location_id: str
    location_type: LocationType
    amount: Decimal = Decimal(0)

    @property
    def sort_key(self):
        return (self.timestamp, self.location_id)

    @property
    def anchored_day(self) -> dt.date:
        """Calendar day of the event with the day boundary moved to 04:00."""
        return (self.timestamp - dt.timedelta(hours=DAY_ANCHOR_HOUR)).date()


@dataclass(frozen=True)
class StudentRegistry:
    majors: dict[str, str]
    grades: dict[str, str]

    def __contains__(self, student_id: str) -> bool:
        return student_id in self.majors

    def __len__(self) -> int:
        return len(self.majors)

    def major_of(self, student_id: str) -> str:
        try:
            return self.majors[student_id]
        except KeyError:
            raise KeyError(f"unknown student {student_id!r}") from None

    def students(self, grade_id: str | None = None) -> list[str]:
        """Student ids in sorted order, optionally restricted to one grade."""
        ids = self.majors if grade_id is None else (
            s for s, g in self.grades.items() if g == grade_id)
        return sorted(ids)

    def major_ids(self) -> list[str]:
        return sorted(set(self.majors.values()))


@dataclass(frozen=True)
class Semester:
    semester_id: int
    start_date: dt.date
    end_date: dt.date
    exam_start_date: dt.date

    def contains(self, day: dt.date) -> bool:
        return self.start_date <= day <= self.end_date

    def is_before_exam(self, day: dt.date) -> bool:
        window_start = self.exam_start_date - dt.timedelta(days=BEFORE_EXAM_DAYS)
        return window_start <= day < self.exam_start_date


class SemesterCalendar:
    """Ordered, disjoint semesters."""

    def __init__(self, semesters):
        semesters = sorted(semesters, key=lambda s: s.start_date)
        for sem in semesters:
            if sem.end_date < sem.start_date:
                raise IngestError(f"semester {sem.semester_id}: end_date before start_date")
            if not sem.start_date <= sem.exam_start_date <= sem.end_date:
                raise IngestError(
                    f"semester {sem.semester_id}: exam_start_date outside the semester")
        for prev, nxt in zip(semesters, semesters[1:]):
            if nxt.start_date <= prev.end_date:
                raise IngestError(
                    f"semesters {prev.semester_id} and {nxt.semester_id} overlap")
        ids = [s.semester_id for s in semesters]
        if ids != sorted(ids) or len(set(ids)) != len(ids):
            raise IngestError("semester ids must be unique and chronologically ordered")
        self.semesters = tuple(semesters)
        self._by_id = {s.semester_id: s for s in semesters}
        self._starts = [s.start_date for s in semesters]

    def __iter__(self):
        return iter(self.semesters)

    def __len__(self):
        return len(self.semesters)

    def __getitem__(self, semester_id: int) -> Semester:
        try:
            return self._by_id[semester_id]
        except KeyError:
            raise KeyError(f"unknown semester {semester_id!r}") from None

    @property
    def ids(self) -> list[int]:
        return [s.semester_id for s in self.semesters]

    def semester_of(self, day: dt.date) -> Semester | None:
        """Return the semester containing ``day`` or None between semesters."""
        pos = int(np.searchsorted(self._starts, day, side="right")) - 1
        if pos >= 0 and self.semesters[pos].contains(day):
            return self.semesters[pos]
        return None


@dataclass
class IngestReport:
    total_rows: int = 0
    accepted: int = 0
    rejected: int = 0
    out_of_semester: int = 0
    exact_duplicates: int = 0
    reasons: Counter = field(default_factory=Counter)
    rejected_lines: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "out_of_semester": self.out_of_semester,
            "exact_duplicates": self.exact_duplicates,
            "reasons": dict(sorted(self.reasons.items())),
            "rejected_lines": [list(r) for r in self.rejected_lines[:1000]],
        }


class EventLog:
    """Immutable, indexed view over accepted events.

    Events are grouped by ``(student_id, semester_id)`` and each group is
    sorted by ``(timestamp, location_id)``.
    """

    def __init__(self, events, registry: StudentRegistry, calendar: SemesterCalendar):
        self.registry = registry
        self.calendar = calendar
        groups: dict[tuple[str, int], list[BehaviorEvent]] = {}
        out = 0
        for ev in events:
            sem = calendar.semester_of(ev.timestamp.date())
            if sem is None:
                out += 1
                continue
            groups.setdefault((ev.student_id, sem.semester_id), []).append(ev)
        self.out_of_semester = out
        self._groups = {k: tuple(sorted(v, key=_event_order)) for k, v in sorted(groups.items())}
        self._columns: dict = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._groups.values())

    def events_for(self, student_id: str, semester_id: int,
                   location_type: LocationType | str | None = None) -> list[BehaviorEvent]:
        """Chronologically ordered events of one student in one semester."""
        if student_id not in self.registry:
            raise KeyError(f"unknown student {student_id!r}")
        self.calendar[semester_id]
        evs = self._groups.get((student_id, semester_id), ())
        if location_type is None:
            return list(evs)
        lt = LocationType(location_type)
        return [e for e in evs if e.location_type is lt]

    def keys(self):
        return self._groups.keys()

    def iter_events(self, semester_id: int | None = None):
        for (_, sem), evs in self._groups.items():
            if semester_id is None or sem == semester_id:
                yield from evs

    def location_columns(self, location_type, semester_id=None):
        """Columnar arrays for events of one location type.

        Returns ``(student_codes, seconds, location_codes, student_ids)``
        where ``student_ids`` maps codes back to ids.  Only used by the
        co-occurrence counter, hence no ``amount`` column.
        """
        lt = LocationType(location_type)
        key = (lt, semester_id)
        if key not in self._columns:
            self._columns[key] = self._build_columns(lambda e: e.location_type is lt, semester_id)
        return self._columns[key]

    def student_columns(self, semester_id=None):
        """Columnar arrays of every event, for timestamp shuffling."""
        key = ("all", semester_id)
        if key not in self._columns:
            cols = self._build_columns(lambda e: True, semester_id, with_type=True)
            self._columns[key] = cols
        return self._columns[key]

    def _build_columns(self, keep, semester_id, with_type=False):
        student_ids = self.registry.students()
        code = {s: i for i, s in enumerate(student_ids)}
        rows = [e for e in self.iter_events(semester_id) if keep(e)]
        students = np.fromiter((code[e.student_id] for e in rows), dtype=np.int64, count=len(rows))
        seconds = np.fromiter((_epoch_seconds(e.timestamp) for e in rows), dtype=np.int64,
                              count=len(rows))
        loc_names = sorted({e.location_id for e in rows})
        loc_code = {l: i for i, l in enumerate(loc_names)}
        locations = np.fromiter((loc_code[e.location_id] for e in rows), dtype=np.int64,
                                count=len(rows))
        if not with_type:
            return students, seconds, locations, student_ids
        types = np.array([e.location_type.value for e in rows], dtype=object)
        return students, seconds, locations, types, student_ids


def _event_order(ev: BehaviorEvent):
    return (ev.timestamp, ev.location_id, ev.location_type.value, ev.amount)


_EPOCH = dt.datetime(1970, 1, 1)


def _epoch_seconds(t: dt.datetime) -> int:
    return int((t - _EPOCH).total_seconds())


def _open_csv(path, expected):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != list(expected):
        fh.close()
        raise IngestError(
            f"{path}: malformed header {header!r}, expected {','.join(expected)}")
    return fh, reader


def read_roster(path) -> StudentRegistry:
    fh, reader = _open_csv(path, ROSTER_COLUMNS)
    majors, grades = {}, {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or not all(c.strip() for c in row):
                raise IngestError(f"{path}:{lineno}: malformed roster row {row!r}")
            sid, major, grade = (c.strip() for c in row)
            if sid in majors:
                raise IngestError(f"{path}:{lineno}: duplicate student {sid!r}")
            majors[sid] = major
            grades[sid] = grade
    return StudentRegistry(majors, grades)


def read_calendar(path) -> SemesterCalendar:
    fh, reader = _open_csv(path, CALENDAR_COLUMNS)
    sems = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid, start, end, exam = (c.strip() for c in row)
                sems.append(Semester(int(sid), dt.date.fromisoformat(start),
                                     dt.date.fromisoformat(end), dt.date.fromisoformat(exam)))
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: malformed calendar row {row!r}") from exc
    if not sems:
        raise IngestError(f"{path}: calendar is empty")
    return SemesterCalendar(sems)


def read_ranks(path) -> dict[tuple[str, int], float]:
    """Read ground-truth normalized ranks keyed by ``(student_id, semester_id)``."""
    fh, reader = _open_csv(path, RANK_COLUMNS)
    ranks = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid, sem, rank = (c.strip() for c in row)
                key, value = (sid, int(sem)), float(rank)
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: malformed rank row {row!r}") from exc
            if not 0.0 <= value <= 1.0:
                raise IngestError(f"{path}:{lineno}: normalized_rank {value} outside [0, 1]")
            if key in ranks:
                raise IngestError(f"{path}:{lineno}: duplicate rank for {key}")
            ranks[key] = value
    return ranks


def _parse_event(row, registry):
    if len(row) != len(EVENT_COLUMNS):
        return None, "wrong field count"
    sid, ts, loc, ltype, amount = (c.strip() for c in row)
    if not sid or not loc:
        return None, "empty identifier"
    if sid not in registry:
        return None, "unknown student"
    try:
        timestamp = dt.datetime.strptime(ts, "%Y-%m-%dT%H:%M:%S")
    except ValueError:
        return None, "bad timestamp"
    try:
        lt = LocationType(ltype)
    except ValueError:
        return None, "unknown location_type"
    try:
        value = Decimal(amount) if amount else Decimal(0)
    except InvalidOperation:
        return None, "bad amount"
    if not value.is_finite() or value < 0:
        return None, "bad amount"
    return BehaviorEvent(sid, timestamp, loc, lt, value), None


def ingest_events(events_path, roster_path, calendar_path):
    """Read and validate the three input files.

    Returns
    -------
    log : EventLog
    registry : StudentRegistry
    calendar : SemesterCalendar
    report : IngestReport
        Row counts with rejection reasons.  Out-of-semester rows count as
        accepted but are excluded from the log.

    Raises
    ------
    IngestError
        On unreadable files, malformed headers, or when more than half of
        the event rows are malformed.
    """
    registry = read_roster(roster_path)
    calendar = read_calendar(calendar_path)
    report = IngestReport()
    events = []
    seen = Counter()
    fh, reader = _open_csv(events_path, EVENT_COLUMNS)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            report.total_rows += 1
            ev, reason = _parse_event(row, registry)
            if ev is None:
                report.rejected += 1
                report.reasons[reason] += 1
                report.rejected_lines.append((lineno, reason))
                continue
            seen[ev] += 1
            events.append(ev)
    report.accepted = len(events)
    report.exact_duplicates = sum(c - 1 for c in seen.values() if c > 1)
    if report.total_rows and report.rejected > MAX_MALFORMED_FRACTION * report.total_rows:
        top = ", ".join(f"{r}: {n}" for r, n in report.reasons.most_common(3))
        raise IngestError(
            f"{events_path}: {report.rejected}/{report.total_rows} rows malformed ({top})")
    log = EventLog(events, registry, calendar)
    report.out_of_semester = log.out_of_semester
    return log, registry, calendar, report


def write_events_csv(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([e.student_id, e.timestamp.strftime("%Y-%m-%dT%H:%M:%S"),
                        e.location_id, e.location_type.value, str(e.amount)])
