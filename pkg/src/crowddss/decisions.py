"""Ranked recommendations and cancellation monitoring built on class probabilities."""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import MixedSubjectsError, TaskTooShortError, UnregisteredWorkerError
from .learners.model import ProbabilityTriple
from .marketplace import EventLog, TaskRecord

WINNER_SEGMENT = "winner"
SUBMITTER_SEGMENT = "submitter"


@dataclass(frozen=True)
class ScoredPair:
    worker_id: str
    task_id: str
    probs: ProbabilityTriple
    day: dt.date

    @property
    def p_winner(self) -> float:
        return self.probs.p_winner

    @property
    def p_submitter(self) -> float:
        return self.probs.p_submitter


@dataclass(frozen=True)
class RankedList:
    subject: str
    day: dt.date | None
    entries: tuple[ScoredPair, ...]
    boundary: int               # entries[:boundary] is the winner segment

    def __len__(self):
        return len(self.entries)

    def segment(self, position: int) -> str:
        return WINNER_SEGMENT if position < self.boundary else SUBMITTER_SEGMENT

    @property
    def task_ids(self) -> list[str]:
        return [e.task_id for e in self.entries]

    @property
    def worker_ids(self) -> list[str]:
        return [e.worker_id for e in self.entries]


def _two_segment(scored: list[ScoredPair], threshold: float, winner_key, submitter_key):
    winners = [s for s in scored if s.p_winner >= threshold and s.p_winner >= s.p_submitter]
    winners.sort(key=winner_key)
    taken = {(s.worker_id, s.task_id) for s in winners}
    rest = [
        s for s in scored
        if s.p_submitter >= threshold and s.p_submitter >= s.p_winner and (s.worker_id, s.task_id) not in taken
    ]
    rest.sort(key=submitter_key)
    return tuple(winners + rest), len(winners)


def _common_day(scored: list[ScoredPair]):
    days = {s.day for s in scored}
    if len(days) > 1:
        raise MixedSubjectsError(f"scored pairs span several days: {sorted(days)}")
    return days.pop() if days else None


def rank_tasks_for_worker(
    worker_id: str,
    scored: Iterable[ScoredPair],
    threshold: float = 0.33,
    tasks: Mapping[str, TaskRecord] | None = None,
) -> RankedList:
    """Tasks likely won by the worker, then tasks likely submitted.

    Ties go to the earlier deadline (when ``tasks`` is given), then task id.
    """
    scored = list(scored)
    if any(s.worker_id != worker_id for s in scored):
        raise MixedSubjectsError(f"scored pairs are not all for worker {worker_id}")
    day = _common_day(scored)

    def deadline(s):
        return tasks[s.task_id].submission_deadline if tasks else dt.date.min

    entries, boundary = _two_segment(
        scored, threshold,
        lambda s: (-s.p_winner, deadline(s), s.task_id),
        lambda s: (-s.p_submitter, deadline(s), s.task_id),
    )
    return RankedList(worker_id, day, entries, boundary)


def rank_workers_for_task(
    task_id: str,
    scored: Iterable[ScoredPair],
    threshold: float = 0.33,
    log: EventLog | None = None,
) -> RankedList:
    """Registered workers likely to win the task, then those likely to submit.

    Ties go to the higher submitter probability, then worker id.  With ``log``
    given, every worker must hold a registration dated on or before the day.
    """
    scored = list(scored)
    if any(s.task_id != task_id for s in scored):
        raise MixedSubjectsError(f"scored pairs are not all for task {task_id}")
    day = _common_day(scored)
    if log is not None:
        for s in scored:
            facts = log.pairs.get((s.worker_id, task_id))
            if facts is None or (day is not None and facts.registered > day):
                raise UnregisteredWorkerError(f"{s.worker_id} is not registered for {task_id}")
    entries, boundary = _two_segment(
        scored, threshold,
        lambda s: (-s.p_winner, -s.p_submitter, s.worker_id),
        lambda s: (-s.p_submitter, s.worker_id),
    )
    return RankedList(task_id, day, entries, boundary)


@dataclass(frozen=True)
class CancellationState:
    task_id: str
    count: int = 0                      # consecutive days marked, ending at last_day
    last_day: dt.date | None = None
    predicted_on: dt.date | None = None


def mark_potential_cancellation(
    task: TaskRecord,
    day: dt.date,
    recommendations: RankedList,
    state: CancellationState | None = None,
    monitor_days: int = 3,
    min_duration: int = 3,
) -> CancellationState:
    """Advance a task's run of empty-recommendation days by one processed day.

    The first time the run reaches ``monitor_days`` the day is stored as the
    prediction day; the prediction is never withdrawn.
    """
    if task.duration_days < min_duration:
        raise TaskTooShortError(f"task {task.task_id} lasts {task.duration_days} days; not monitored")
    state = state or CancellationState(task.task_id)
    if state.last_day is not None and day <= state.last_day:
        raise ValueError(f"day {day} already processed for task {task.task_id}")
    if len(recommendations.entries) == 0:
        consecutive = state.last_day is not None and (day - state.last_day).days == 1
        count = state.count + 1 if consecutive else 1
    else:
        count = 0
    predicted_on = state.predicted_on
    if predicted_on is None and count >= monitor_days:
        predicted_on = day
    return dataclasses.replace(state, count=count, last_day=day, predicted_on=predicted_on)


def predict_cancellation(state: CancellationState, day: dt.date, monitor_days: int = 3) -> bool:
    if state.predicted_on is not None and state.predicted_on <= day:
        return True
    return state.last_day == day and state.count >= monitor_days
