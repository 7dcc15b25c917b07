"""Per (worker, task, day) feature vectors and the daily training/testing sets.

Layout of the 124-wide vector::

    0          task duration in days
    1          task total prize
    2          worker lifetime submission rate
    3..109     107 required-technology flags, vocabulary order
    110..123   14 worker-history features over the trailing window

Every value is computed from events dated strictly before the sample's
``as_of_day``.  Events on the sample's own task are left out of the worker
history so that a training sample never sees its own outcome.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidConfigError, NotEnoughDataError, UnknownTaskError
from .marketplace import EventKind, EventLog, Outcome, TaskRecord, outcome_of

N_FEATURES = 124
N_STATIC = 110
N_FLAGS = 107
N_DYNAMIC = 14
FLAG_OFFSET = 3
DYNAMIC_OFFSET = 110

DYNAMIC_NAMES = [
    "win_registrations",
    "win_submissions",
    "win_wins",
    "win_quits",
    "win_submission_rate",
    "win_win_rate",
    "win_quit_rate",
    "win_mean_score",
    "win_prize_earned",
    "open_registrations",
    "win_type_registrations",
    "win_type_wins",
    "technology_overlap",
    "days_since_submission",
]

BINARY_COLUMNS = np.arange(FLAG_OFFSET, FLAG_OFFSET + N_FLAGS)
CONTINUOUS_COLUMNS = np.array([0, 1, 2] + list(range(DYNAMIC_OFFSET, N_FEATURES)))


def feature_names(vocabulary: Sequence[str]) -> list[str]:
    flags = [f"tech_{name}" for name in vocabulary]
    flags += [f"tech_unused_{i}" for i in range(len(flags), N_FLAGS)]
    return ["duration_days", "total_prize", "lifetime_submission_rate"] + flags + DYNAMIC_NAMES


@dataclass(frozen=True)
class PipelineConfig:
    window_days: int = 90
    history_cap: int | None = None
    monitor_days: int = 3
    p_threshold: float = 0.33
    experienced_cutoff: int = 10
    experience_window_days: int = 90
    success_score: Decimal = Decimal(75)
    min_monitored_duration: int = 3

    def __post_init__(self):
        if self.window_days < 1:
            raise InvalidConfigError("window_days must be >= 1")
        if self.monitor_days < 1:
            raise InvalidConfigError("monitor_days must be >= 1")
        if not 0 < self.p_threshold < 1:
            raise InvalidConfigError("p_threshold must lie in (0, 1)")
        if self.history_cap is not None and self.history_cap < 1:
            raise InvalidConfigError("history_cap must be >= 1 when set")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    worker_id: str
    task_id: str
    as_of_day: dt.date
    features: np.ndarray
    label: Outcome | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.worker_id, self.task_id)


@dataclass
class DailySnapshot:
    day: dt.date
    train: list[LabeledSample]
    test: list[LabeledSample]
    candidates: list[LabeledSample] | None = None

    def labeled_test(self) -> list[LabeledSample]:
        return [s for s in self.test if s.label is not None]


class Experience(Enum):
    EXPERIENCED = "experienced"
    UNEXPERIENCED = "unexperienced"


def _resolve_task(task, log: EventLog) -> TaskRecord:
    task_id = task if isinstance(task, str) else task.task_id
    record = log.tasks.get(task_id)
    if record is None:
        raise UnknownTaskError(f"unknown task {task_id}")
    return record


def extract_static_features(task, worker_id: str, log: EventLog, day: dt.date) -> np.ndarray:
    task = _resolve_task(task, log)
    out = np.zeros(N_STATIC)
    out[0] = task.duration_days
    out[1] = float(task.total_prize)

    registered = 0
    submitted: set[str] = set()
    for ev in log.events_before(worker_id, day):
        if ev.task_id == task.task_id:
            continue
        if ev.kind is EventKind.REGISTRATION:
            registered += 1
        elif ev.kind is EventKind.SUBMISSION:
            submitted.add(ev.task_id)
    out[2] = min(1.0, len(submitted) / registered) if registered else 0.0

    index = log.vocabulary_index
    for tech in task.required_technologies:
        out[FLAG_OFFSET + index[tech]] = 1.0
    return out


def extract_dynamic_features(worker_id: str, task, log: EventLog, day: dt.date, window_days: int = 90) -> np.ndarray:
    task = _resolve_task(task, log)
    start = day - dt.timedelta(days=window_days)
    dates = log.worker_event_dates.get(worker_id, [])
    lo = bisect.bisect_left(dates, start)
    hi = bisect.bisect_left(dates, day)
    events = log.worker_events.get(worker_id, ())[lo:hi]

    reg_tasks: list[str] = []
    sub_tasks: set[str] = set()
    last_review = {}
    last_submission = None
    for ev in events:
        if ev.task_id == task.task_id:
            continue
        if ev.kind is EventKind.REGISTRATION:
            reg_tasks.append(ev.task_id)
        elif ev.kind is EventKind.SUBMISSION:
            sub_tasks.add(ev.task_id)
            last_submission = ev.date
        else:
            last_review[ev.task_id] = ev

    tasks = log.tasks
    registrations = len(reg_tasks)
    submissions = len(sub_tasks)
    won = [t for t, ev in last_review.items() if ev.rewarded]
    completed = [t for t in reg_tasks if tasks[t].submission_deadline < day]
    quits = sum(1 for t in completed if t not in sub_tasks)

    techs = task.required_technologies
    overlap = 0.0
    if techs:
        seen: set[str] = set()
        for t in reg_tasks:
            seen |= tasks[t].required_technologies
        overlap = len(techs & seen) / len(techs)

    out = np.zeros(N_DYNAMIC)
    out[0] = registrations
    out[1] = submissions
    out[2] = len(won)
    out[3] = quits
    out[4] = min(1.0, submissions / registrations) if registrations else 0.0
    out[5] = min(1.0, len(won) / submissions) if submissions else 0.0
    out[6] = quits / len(completed) if completed else 0.0
    out[7] = float(sum(ev.score for ev in last_review.values()) / len(last_review)) if last_review else 0.0
    out[8] = float(sum(tasks[t].total_prize for t in won))
    out[9] = sum(1 for t in reg_tasks if tasks[t].submission_deadline >= day)
    out[10] = sum(1 for t in reg_tasks if tasks[t].task_type == task.task_type)
    out[11] = sum(1 for t in won if tasks[t].task_type == task.task_type)
    out[12] = overlap
    out[13] = min(window_days, (day - last_submission).days) if last_submission else window_days
    return out


def sample_features(log: EventLog, worker_id: str, task_id: str, as_of: dt.date, window_days: int = 90) -> np.ndarray:
    task = _resolve_task(task_id, log)
    return np.concatenate([
        extract_static_features(task, worker_id, log, as_of),
        extract_dynamic_features(worker_id, task, log, as_of, window_days),
    ])


@dataclass
class FeatureCache:
    """Memo of feature vectors keyed by (worker, task, as-of day)."""

    log: EventLog
    window_days: int = 90
    _store: dict = field(default_factory=dict)

    def get(self, worker_id: str, task_id: str, as_of: dt.date) -> np.ndarray:
        key = (worker_id, task_id, as_of)
        vec = self._store.get(key)
        if vec is None:
            vec = sample_features(self.log, worker_id, task_id, as_of, self.window_days)
            vec.setflags(write=False)
            self._store[key] = vec
        return vec


def _sample_order(s: LabeledSample):
    return (s.task_id, s.worker_id, s.as_of_day)


def build_snapshot(
    log: EventLog,
    day: dt.date,
    config: PipelineConfig = PipelineConfig(),
    include_candidates: bool = False,
    cache: FeatureCache | None = None,
) -> DailySnapshot:
    """Training set of completed tasks and testing set of open tasks for ``day``.

    Training pairs are those on tasks whose deadline is before ``day``; each is
    featurised as of its registration date and labeled from the full log.
    Testing pairs are registrations (dated on or before ``day``) on tasks with
    ``registration_open <= day < deadline``, featurised as of ``day``.  Tasks
    whose deadline equals ``day`` land in neither set.
    """
    if cache is None or cache.log is not log or cache.window_days != config.window_days:
        cache = FeatureCache(log, config.window_days)
    tasks = log.tasks
    train, test = [], []
    cap_start = day - dt.timedelta(days=config.history_cap) if config.history_cap else None
    for (worker_id, task_id), facts in log.pairs.items():
        task = tasks[task_id]
        deadline = task.submission_deadline
        if deadline < day:
            if cap_start is not None and deadline < cap_start:
                continue
            vec = cache.get(worker_id, task_id, facts.registered)
            train.append(LabeledSample(worker_id, task_id, facts.registered, vec, outcome_of(facts)))
        elif deadline > day and task.registration_open <= day and facts.registered <= day:
            label = outcome_of(facts) if log.is_complete(task_id) else None
            vec = cache.get(worker_id, task_id, day)
            test.append(LabeledSample(worker_id, task_id, day, vec, label))
    if not train:
        raise NotEnoughDataError(f"no completed tasks before {day}", day=day)
    train.sort(key=_sample_order)
    test.sort(key=_sample_order)

    candidates = None
    if include_candidates:
        candidates = []
        registered = {s.key for s in test}
        open_tasks = [t for t in tasks.values() if t.registration_open <= day < t.submission_deadline]
        for worker_id in active_workers(log, day, config.window_days):
            for task in open_tasks:
                if (worker_id, task.task_id) not in registered:
                    vec = cache.get(worker_id, task.task_id, day)
                    candidates.append(LabeledSample(worker_id, task.task_id, day, vec, None))
        candidates.sort(key=_sample_order)
    return DailySnapshot(day, train, test, candidates)


def active_workers(log: EventLog, day: dt.date, window_days: int) -> list[str]:
    start = day - dt.timedelta(days=window_days)
    out = []
    for worker_id, dates in log.worker_event_dates.items():
        i = bisect.bisect_left(dates, start)
        if i < len(dates) and dates[i] < day:
            out.append(worker_id)
    return sorted(out)


def is_successful(review_ev, success_score: Decimal) -> bool:
    return review_ev is not None and (bool(review_ev.rewarded) or review_ev.score >= success_score)


def experience_class(worker_id: str, log: EventLog, day: dt.date, config: PipelineConfig = PipelineConfig()) -> Experience:
    """Unexperienced iff at most ``experienced_cutoff`` successful submissions in the trailing window."""
    start = day - dt.timedelta(days=config.experience_window_days)
    submitted_in_window: set[str] = set()
    last_review = {}
    for ev in log.events_before(worker_id, day):
        if ev.kind is EventKind.SUBMISSION and ev.date >= start:
            submitted_in_window.add(ev.task_id)
        elif ev.kind is EventKind.REVIEW:
            last_review[ev.task_id] = ev
    successes = sum(1 for t in submitted_in_window if is_successful(last_review.get(t), config.success_score))
    return Experience.EXPERIENCED if successes > config.experienced_cutoff else Experience.UNEXPERIENCED


def feature_matrix(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``X`` (n x 124) and integer labels ``y`` (-1 where unlabeled)."""
    if not samples:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64)
    X = np.vstack([s.features for s in samples])
    y = np.array([-1 if s.label is None else int(s.label) for s in samples], dtype=np.int64)
    return X, y


def export_feature_matrix(samples: Sequence[LabeledSample], vocabulary: Sequence[str], path) -> None:
    ordered = sorted(samples, key=lambda s: (s.task_id, s.worker_id))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(feature_names(vocabulary) + ["label"])
        for s in ordered:
            label = "" if s.label is None else s.label.name.lower()
            writer.writerow([repr(float(v)) for v in s.features] + [label])
