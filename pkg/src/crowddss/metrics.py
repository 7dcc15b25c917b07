"""Accuracy, ranking, effort and cancellation metrics."""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    EmptyInputError,
    IncompleteCoverageError,
    LengthMismatchError,
    NoMonitoredTasksError,
    NotEnoughRankedError,
    NoWinnersError,
)
from .features import Experience, PipelineConfig, experience_class
from .marketplace import EventLog, Outcome, outcome_of

log = logging.getLogger(__name__)

CLASSES = (Outcome.WINNER, Outcome.QUITTER, Outcome.SUBMITTER)
CENT = Decimal("0.01")


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f_measure: float


@dataclass(frozen=True)
class ConfusionReport:
    matrix: np.ndarray                  # [actual, predicted]
    per_class: dict[Outcome, ClassScores]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


def confusion_metrics(predictions: Sequence, actuals: Sequence) -> ConfusionReport:
    """Per-class precision, recall and F; any 0/0 ratio is reported as 0."""
    pred = np.asarray([int(p) for p in predictions], dtype=np.int64)
    act = np.asarray([int(a) for a in actuals], dtype=np.int64)
    if len(pred) != len(act):
        raise LengthMismatchError(f"{len(pred)} predictions vs {len(act)} actuals")
    if len(pred) == 0:
        raise EmptyInputError("no samples to score")
    matrix = np.bincount(act * 3 + pred, minlength=9).reshape(3, 3)
    per_class = {}
    for c in CLASSES:
        tp = matrix[c, c]
        p = _ratio(tp, matrix[:, c].sum())
        r = _ratio(tp, matrix[c, :].sum())
        per_class[c] = ClassScores(p, r, f_measure(p, r))
    return ConfusionReport(matrix, per_class)


def auc_ovr(scores, actuals) -> dict[Outcome, float | None]:
    """One-vs-rest AUC from the rank statistic; ``None`` where a class is degenerate.

    ``scores`` is an (n, 3) array (or sequence of probability triples) in
    (winner, quitter, submitter) column order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    act = np.asarray([int(a) for a in actuals], dtype=np.int64)
    if scores.ndim != 2 or len(scores) != len(act):
        raise LengthMismatchError("scores and actuals are not aligned")
    out: dict[Outcome, float | None] = {}
    for c in CLASSES:
        pos = act == c
        n_pos = int(pos.sum())
        n_neg = len(act) - n_pos
        if n_pos == 0 or n_neg == 0:
            out[c] = None
            continue
        ranks = rankdata(scores[:, c])
        out[c] = float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
    return out


def vargha_delaney(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """A12: probability that a draw from ``sample_a`` exceeds one from ``sample_b``, ties halved."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise EmptyInputError("Vargha-Delaney needs two non-empty samples")
    below = np.searchsorted(b, a, side="left")
    at_or_below = np.searchsorted(b, a, side="right")
    wins = below.sum()
    ties = (at_or_below - below).sum()
    return float((wins + 0.5 * ties) / (len(a) * len(b)))


def _ids(ranking) -> list[str]:
    """Counterpart ids of a RankedList, or the sequence itself."""
    entries = getattr(ranking, "entries", None)
    if entries is None:
        return list(ranking)
    return [e.worker_id for e in entries]


def recall_at_k(rankings: Mapping[str, object], actual_winners: Mapping[str, set], k: int) -> float:
    """Fraction of tasks whose top-``k`` recommended workers include an actual winner."""
    hits = evaluated = 0
    for task_id, ranking in rankings.items():
        winners = actual_winners.get(task_id, set())
        if not winners:
            log.warning("task %s has no actual winner; excluded from recall@%d", task_id, k)
            continue
        evaluated += 1
        if set(_ids(ranking)[:k]) & set(winners):
            hits += 1
    if evaluated == 0:
        raise NoWinnersError("no ranked task has an actual winner")
    return hits / evaluated


def mean_score(scores: Sequence[Decimal]) -> Decimal:
    """Mean review score rounded half-up to the cent, the precision of the scores."""
    return (sum(scores, Decimal(0)) / len(scores)).quantize(CENT, rounding=ROUND_HALF_UP)


@dataclass
class ScoreGapResult:
    mean: Decimal
    per_task: dict[str, Decimal]
    excluded_unscored: int = 0
    excluded_short: int = 0


def score_gap(
    rankings: Mapping[str, object],
    reviews: Mapping[tuple[str, str], Decimal],
    winners: Mapping[str, set],
) -> ScoreGapResult:
    """Mean over tasks of (winners' mean score) - (top-2 recommended workers' mean score).

    Tasks with fewer than two ranked workers or without a scored winner are
    skipped; tasks where a top-2 worker has no review score are skipped and
    counted in ``excluded_unscored``.
    """
    per_task: dict[str, Decimal] = {}
    unscored = short = 0
    for task_id, ranking in rankings.items():
        ids = _ids(ranking)
        winner_scores = [reviews[(w, task_id)] for w in sorted(winners.get(task_id, ())) if (w, task_id) in reviews]
        if len(ids) < 2 or not winner_scores:
            short += 1
            continue
        top = [(w, task_id) for w in ids[:2]]
        if any(key not in reviews for key in top):
            unscored += 1
            continue
        per_task[task_id] = mean_score(winner_scores) - mean_score([reviews[key] for key in top])
    if not per_task:
        raise NotEnoughRankedError("no task has two ranked, reviewed workers and a scored winner")
    mean = sum(per_task.values(), Decimal(0)) / len(per_task)
    return ScoreGapResult(mean, per_task, unscored, short)


@dataclass
class EffortSavings:
    total: dict[Experience, int]
    pairs: dict[Experience, int]
    per_pair: dict[tuple[str, str], tuple[Experience, int]] = field(default_factory=dict)

    def mean(self, group: Experience) -> float:
        return self.total[group] / self.pairs[group] if self.pairs[group] else 0.0


def open_test_pairs(log: EventLog, day: dt.date) -> set[tuple[str, str]]:
    tasks = log.tasks
    return {
        key for key, facts in log.pairs.items()
        if facts.registered <= day
        and tasks[key[1]].registration_open <= day < tasks[key[1]].submission_deadline
    }


def effort_savings(
    daily_predictions: Mapping[dt.date, Mapping[tuple[str, str], Outcome]],
    log: EventLog,
    start: dt.date,
    num_days: int,
    config: PipelineConfig = PipelineConfig(),
    exclude_types: set[str] = frozenset(),
) -> EffortSavings:
    """Person-days saved on actual quitters by days they were predicted to quit.

    A day counts for a pair when it lies in the period and in
    [registration date, deadline] and the model predicted Quitter for the pair
    that day.  Pairs are grouped by the worker's experience at registration.
    """
    total = {g: 0 for g in Experience}
    pairs = {g: 0 for g in Experience}
    per_pair = {}
    days = [start + dt.timedelta(days=i) for i in range(num_days)]
    seen: set[tuple[str, str]] = set()
    for day in days:
        expected = open_test_pairs(log, day)
        got = daily_predictions.get(day, {})
        missing = expected - set(got)
        if missing:
            raise IncompleteCoverageError(f"{len(missing)} test pairs lack a prediction on {day}")
        seen |= expected

    for key in sorted(seen, key=lambda k: (k[1], k[0])):
        worker_id, task_id = key
        task = log.tasks[task_id]
        if task.task_type in exclude_types or not log.is_complete(task_id):
            continue
        facts = log.pairs[key]
        if outcome_of(facts) is not Outcome.QUITTER:
            continue
        saved = sum(
            1 for day in days
            if facts.registered <= day <= task.submission_deadline
            and daily_predictions.get(day, {}).get(key) == Outcome.QUITTER
        )
        group = experience_class(worker_id, log, facts.registered, config)
        total[group] += saved
        pairs[group] += 1
        per_pair[key] = (group, saved)
    return EffortSavings(total, pairs, per_pair)


@dataclass
class CancellationResult:
    precision: float
    recall: float
    f_measure: float
    savings: dict[str, float]
    confusion: dict[str, int]


def cancellation_savings(task, prediction_day: dt.date) -> float:
    """Percent of the task duration left when the cancellation was predicted."""
    return (task.submission_deadline - prediction_day).days / task.duration_days * 100.0


def cancellation_metrics(
    predictions: Mapping[str, dt.date | None],
    actual_cancelled: Mapping[str, bool],
    tasks: Mapping[str, object],
) -> CancellationResult:
    """Binary precision/recall/F over monitored tasks plus savings per true positive.

    ``predictions`` maps each monitored task to the day it was predicted
    cancelled, or ``None`` when never flagged.
    """
    monitored = sorted(set(predictions) & set(actual_cancelled))
    if not monitored:
        raise NoMonitoredTasksError("no monitored task has ground truth")
    tp = fp = fn = tn = 0
    savings = {}
    for task_id in monitored:
        flagged = predictions[task_id] is not None
        actual = bool(actual_cancelled[task_id])
        if flagged and actual:
            tp += 1
            savings[task_id] = cancellation_savings(tasks[task_id], predictions[task_id])
        elif flagged:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return CancellationResult(p, r, f_measure(p, r), savings, {"tp": tp, "fp": fp, "fn": fn, "tn": tn})
