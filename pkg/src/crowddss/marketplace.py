"""Domain model of a crowdsourcing marketplace and its validated event log."""
from __future__ import annotations

import bisect
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum, IntEnum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateRegistrationError,
    InvariantViolation,
    NotRegisteredError,
    ReferentialIntegrityError,
    TaskStillOpenError,
    UnknownTechnologyError,
)

ASSEMBLY = "Assembly"
CODE = "Code"
UI_PROTOTYPE = "UIPrototype"
KNOWN_TASK_TYPES = (ASSEMBLY, CODE, UI_PROTOTYPE)
# one feature flag per technology
MAX_VOCABULARY = 107


class Outcome(IntEnum):
    """Registration outcome. Integer values index probability triples."""

    WINNER = 0
    QUITTER = 1
    SUBMITTER = 2


LABEL_NAMES = {Outcome.WINNER: "winner", Outcome.QUITTER: "quitter", Outcome.SUBMITTER: "submitter"}


class EventKind(Enum):
    REGISTRATION = "registration"
    SUBMISSION = "submission"
    REVIEW = "review"


_KIND_RANK = {EventKind.REGISTRATION: 0, EventKind.SUBMISSION: 1, EventKind.REVIEW: 2}


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    task_type: str
    registration_open: dt.date
    submission_deadline: dt.date
    total_prize: Decimal
    required_technologies: frozenset[str] = frozenset()

    @property
    def duration_days(self) -> int:
        return (self.submission_deadline - self.registration_open).days


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    worker_id: str
    task_id: str
    date: dt.date
    score: Decimal | None = None
    rewarded: bool | None = None

    def sort_key(self):
        # total order so ingestion does not depend on input order within a date
        return (
            self.date,
            _KIND_RANK[self.kind],
            self.task_id,
            self.worker_id,
            self.score if self.score is not None else Decimal(-1),
            bool(self.rewarded),
        )


def registration(worker_id, task_id, date):
    return EventRecord(EventKind.REGISTRATION, worker_id, task_id, date)


def submission(worker_id, task_id, date):
    return EventRecord(EventKind.SUBMISSION, worker_id, task_id, date)


def review(worker_id, task_id, date, score, rewarded):
    return EventRecord(EventKind.REVIEW, worker_id, task_id, date, Decimal(str(score)), bool(rewarded))


@dataclass(frozen=True)
class _PairFacts:
    registered: dt.date
    submissions: tuple[dt.date, ...]
    latest_review: EventRecord | None


@dataclass(frozen=True)
class EventLog:
    """Validated, time-ordered marketplace history. Immutable after ingestion."""

    tasks: Mapping[str, TaskRecord]
    events: tuple[EventRecord, ...]
    vocabulary: tuple[str, ...]

    @cached_property
    def horizon(self) -> dt.date | None:
        """Latest date the log knows about; tasks with deadline before it are complete."""
        dates = [t.submission_deadline for t in self.tasks.values()]
        if self.events:
            dates.append(self.events[-1].date)
        return max(dates) if dates else None

    @cached_property
    def pairs(self) -> dict[tuple[str, str], _PairFacts]:
        regs: dict[tuple[str, str], dt.date] = {}
        subs: dict[tuple[str, str], list[dt.date]] = defaultdict(list)
        reviews: dict[tuple[str, str], EventRecord] = {}
        for ev in self.events:
            key = (ev.worker_id, ev.task_id)
            if ev.kind is EventKind.REGISTRATION:
                regs[key] = ev.date
            elif ev.kind is EventKind.SUBMISSION:
                subs[key].append(ev.date)
            else:
                # events are date-sorted, so the last review seen is the latest
                reviews[key] = ev
        return {
            key: _PairFacts(day, tuple(subs.get(key, ())), reviews.get(key))
            for key, day in regs.items()
        }

    @cached_property
    def worker_events(self) -> dict[str, tuple[EventRecord, ...]]:
        out: dict[str, list[EventRecord]] = defaultdict(list)
        for ev in self.events:
            out[ev.worker_id].append(ev)
        return {w: tuple(evs) for w, evs in out.items()}

    @cached_property
    def worker_event_dates(self) -> dict[str, list[dt.date]]:
        return {w: [ev.date for ev in evs] for w, evs in self.worker_events.items()}

    @cached_property
    def task_registrants(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for worker_id, task_id in self.pairs:
            out[task_id].append(worker_id)
        return {t: sorted(ws) for t, ws in out.items()}

    @cached_property
    def vocabulary_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.vocabulary)}

    @property
    def workers(self) -> list[str]:
        return sorted(self.worker_events)

    def is_complete(self, task_id: str) -> bool:
        return self.horizon is not None and self.tasks[task_id].submission_deadline < self.horizon

    def events_before(self, worker_id: str, day: dt.date) -> tuple[EventRecord, ...]:
        evs = self.worker_events.get(worker_id, ())
        hi = bisect.bisect_left(self.worker_event_dates.get(worker_id, []), day)
        return evs[:hi]


def _check_task(task: TaskRecord, vocab: set[str]) -> None:
    if task.submission_deadline <= task.registration_open:
        raise InvariantViolation(
            f"task {task.task_id}: deadline {task.submission_deadline} not after open {task.registration_open}"
        )
    if task.total_prize < 0:
        raise InvariantViolation(f"task {task.task_id}: negative prize {task.total_prize}")
    unknown = sorted(set(task.required_technologies) - vocab)
    if unknown:
        raise UnknownTechnologyError(f"task {task.task_id}: unknown technologies {unknown}")


def ingest_events(
    task_records: Iterable[TaskRecord],
    event_records: Iterable[EventRecord],
    vocabulary: Sequence[str],
) -> EventLog:
    """Validate raw records and return an immutable, canonically ordered log.

    Events are sorted by (date, kind, task, worker, ...), so the result is the
    same for any permutation of the input.  A Submission needs an earlier or
    same-day Registration of the pair; a Review needs an earlier or same-day
    Submission.
    """
    vocabulary = tuple(vocabulary)
    if len(set(vocabulary)) != len(vocabulary):
        raise InvariantViolation("vocabulary contains duplicate names")
    if len(vocabulary) > MAX_VOCABULARY:
        raise InvariantViolation(f"vocabulary has {len(vocabulary)} names; at most {MAX_VOCABULARY} are supported")
    vocab = set(vocabulary)

    tasks: dict[str, TaskRecord] = {}
    for task in task_records:
        if task.task_id in tasks:
            raise InvariantViolation(f"duplicate task id {task.task_id}")
        _check_task(task, vocab)
        tasks[task.task_id] = task
    tasks = dict(sorted(tasks.items()))

    events = sorted(event_records, key=EventRecord.sort_key)
    registered: set[tuple[str, str]] = set()
    submitted: set[tuple[str, str]] = set()
    for ev in events:
        task = tasks.get(ev.task_id)
        if task is None:
            raise ReferentialIntegrityError(f"event references unknown task {ev.task_id}")
        key = (ev.worker_id, ev.task_id)
        if ev.kind is EventKind.REGISTRATION:
            if key in registered:
                raise DuplicateRegistrationError(f"worker {ev.worker_id} registered twice for {ev.task_id}")
            if not task.registration_open <= ev.date <= task.submission_deadline:
                raise InvariantViolation(
                    f"registration of {ev.worker_id} on {ev.task_id} dated {ev.date} "
                    f"outside [{task.registration_open}, {task.submission_deadline}]"
                )
            registered.add(key)
        elif ev.kind is EventKind.SUBMISSION:
            if key not in registered:
                raise InvariantViolation(f"submission by {ev.worker_id} on {ev.task_id} without prior registration")
            submitted.add(key)
        else:
            if key not in submitted:
                raise InvariantViolation(f"review of {ev.worker_id} on {ev.task_id} without prior submission")
            if ev.score is None or ev.rewarded is None:
                raise InvariantViolation(f"review of {ev.worker_id} on {ev.task_id} lacks score or reward flag")
            if not Decimal(0) <= ev.score <= Decimal(100):
                raise InvariantViolation(f"review score {ev.score} outside [0, 100]")
            if ev.score != ev.score.quantize(Decimal("0.01")):
                raise InvariantViolation(f"review score {ev.score} has more than 2 decimals")
    return EventLog(tasks=tasks, events=tuple(events), vocabulary=vocabulary)


def derive_outcome(log: EventLog, worker_id: str, task_id: str) -> Outcome:
    facts = log.pairs.get((worker_id, task_id))
    if facts is None:
        raise NotRegisteredError(f"{worker_id} has no registration on {task_id}")
    if not log.is_complete(task_id):
        raise TaskStillOpenError(f"task {task_id} has not completed within the log horizon")
    return outcome_of(facts)


def outcome_of(facts: _PairFacts) -> Outcome:
    if not facts.submissions:
        return Outcome.QUITTER
    if facts.latest_review is not None and facts.latest_review.rewarded:
        return Outcome.WINNER
    return Outcome.SUBMITTER


def label_counts(log: EventLog) -> dict[Outcome, int]:
    counts = {o: 0 for o in Outcome}
    for (worker_id, task_id), facts in log.pairs.items():
        if log.is_complete(task_id):
            counts[outcome_of(facts)] += 1
    return counts


def final_scores(log: EventLog) -> dict[tuple[str, str], Decimal]:
    """Latest review score for every reviewed (worker, task) pair."""
    return {key: f.latest_review.score for key, f in log.pairs.items() if f.latest_review is not None}


def task_winners(log: EventLog, task_id: str) -> set[str]:
    return {
        w for w in log.task_registrants.get(task_id, ())
        if outcome_of(log.pairs[(w, task_id)]) is Outcome.WINNER
    }


def is_cancelled(log: EventLog, task_id: str) -> bool:
    """A completed task without any rewarded submission counts as cancelled."""
    return log.is_complete(task_id) and not task_winners(log, task_id)
