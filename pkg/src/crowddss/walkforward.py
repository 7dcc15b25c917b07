"""Daily retrain-and-predict loop and the evaluation report built on top of it.

For each day of the period the harness builds the day's training and testing
sets, fits a fresh model, scores every open registration, ranks registered
workers per task, and advances the cancellation counters.  Rankings and
predictions are scored afterwards against the outcomes of tasks that have
completed within the log.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterator

import numpy as np

from .decisions import (
    CancellationState,
    RankedList,
    ScoredPair,
    mark_potential_cancellation,
    rank_workers_for_task,
)
from .errors import IoFailure, NoMonitoredTasksError, NotEnoughDataError, NotEnoughRankedError
from .features import DailySnapshot, Experience, FeatureCache, PipelineConfig, build_snapshot, feature_matrix
from .learners.model import ProbabilityTriple, TrainedModel, fit, predict_matrix, predicted_labels, training_arrays
from .marketplace import ASSEMBLY, LABEL_NAMES, EventLog, Outcome, final_scores, is_cancelled, task_winners
from .metrics import (
    auc_ovr,
    cancellation_metrics,
    cancellation_savings,
    confusion_metrics,
    effort_savings,
    recall_at_k,
    score_gap,
)

logger = logging.getLogger(__name__)

REPORT_FORMAT = "crowddss-report"
REPORT_VERSION = 1
RECALL_KS = (1, 2, 3, 4, 5)
CLASS_NAMES = [LABEL_NAMES[c] for c in Outcome]


@dataclass
class DayPrediction:
    day: dt.date
    snapshot: DailySnapshot
    model: TrainedModel
    proba: np.ndarray                       # rows follow snapshot.test
    rankings: dict[str, RankedList]         # every open task with duration tracking, possibly empty


def _days(start: dt.date, num_days: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(num_days)]


def open_tasks(log: EventLog, day: dt.date) -> list[str]:
    return [t.task_id for t in log.tasks.values() if t.registration_open <= day < t.submission_deadline]


def daily_predictions(
    log: EventLog,
    start: dt.date,
    num_days: int,
    config: PipelineConfig = PipelineConfig(),
    learner: str = "rf",
    params=None,
    threads: int = 1,
) -> Iterator[DayPrediction]:
    """Yield one fitted model and its rankings per day, in date order."""
    cache = FeatureCache(log, config.window_days)
    for day in _days(start, num_days):
        try:
            snap = build_snapshot(log, day, config, cache=cache)
        except NotEnoughDataError as exc:
            raise NotEnoughDataError(f"walk-forward stopped on {day}: {exc}", day=day) from exc
        model = fit(learner, *training_arrays(snap.train), params, threads=threads)
        X, _ = feature_matrix(snap.test) if snap.test else (np.zeros((0, model.n_features)), None)
        proba = predict_matrix(model, X) if len(X) else np.zeros((0, 3))
        by_task: dict[str, list[ScoredPair]] = {t: [] for t in open_tasks(log, day)}
        for sample, row in zip(snap.test, proba):
            by_task[sample.task_id].append(ScoredPair(sample.worker_id, sample.task_id, ProbabilityTriple(*row), day))
        rankings = {
            task_id: rank_workers_for_task(task_id, pairs, config.p_threshold)
            for task_id, pairs in sorted(by_task.items())
        }
        log_progress(day, snap)
        yield DayPrediction(day, snap, model, proba, rankings)


def log_progress(day, snap):
    logger.info("%s: %d training, %d testing samples", day, len(snap.train), len(snap.test))


@dataclass
class CancellationTracker:
    """Sequential cancellation counters over the tasks open during the period."""

    log: EventLog
    config: PipelineConfig = field(default_factory=PipelineConfig)
    states: dict[str, CancellationState] = field(default_factory=dict)

    def update(self, day: dt.date, rankings: dict[str, RankedList]) -> None:
        for task_id, ranking in rankings.items():
            task = self.log.tasks[task_id]
            # monitoring starts the day after opening, so a prediction costs at least monitor_days
            if task.duration_days < self.config.min_monitored_duration or day <= task.registration_open:
                continue
            self.states[task_id] = mark_potential_cancellation(
                task, day, ranking, self.states.get(task_id),
                self.config.monitor_days, self.config.min_monitored_duration,
            )

    def predictions(self) -> dict[str, dt.date | None]:
        return {t: s.predicted_on for t, s in sorted(self.states.items())}

    def rows(self) -> list[dict]:
        out = []
        for task_id, state in sorted(self.states.items()):
            task = self.log.tasks[task_id]
            complete = self.log.is_complete(task_id)
            savings = None
            if state.predicted_on is not None:
                savings = cancellation_savings(task, state.predicted_on)
            out.append({
                "task_id": task_id,
                "duration_days": task.duration_days,
                "predicted_on": state.predicted_on.isoformat() if state.predicted_on else None,
                "actual_cancelled": is_cancelled(self.log, task_id) if complete else None,
                "savings_pct": savings,
            })
        return out


def _rounded(x, places=6):
    if x is None:
        return None
    return round(float(x), places)


@dataclass
class DayRecord:
    day: dt.date
    n_train: int
    n_test: int
    n_labeled: int
    confusion: list[list[int]] | None
    scores: dict[str, dict[str, float | None]]      # class -> precision/recall/f_measure/auc
    recall_at: dict[int, float | None]
    n_ranked_tasks: int
    random_recall_at_1: float | None
    majority_quitter_f: float | None
    score_gap: Decimal | None
    n_gap_tasks: int

    def to_dict(self) -> dict:
        return {
            "day": self.day.isoformat(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_labeled": self.n_labeled,
            "confusion": self.confusion,
            "scores": {c: {k: _rounded(v) for k, v in s.items()} for c, s in self.scores.items()},
            "recall_at": {str(k): _rounded(v) for k, v in self.recall_at.items()},
            "n_ranked_tasks": self.n_ranked_tasks,
            "random_recall_at_1": _rounded(self.random_recall_at_1),
            "majority_quitter_f": _rounded(self.majority_quitter_f),
            "score_gap": None if self.score_gap is None else str(self.score_gap),
            "n_gap_tasks": self.n_gap_tasks,
        }


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def aggregate_days(days: list[DayRecord]) -> dict:
    """Period-level means over the days on which each quantity is defined."""
    out: dict = {"classes": {}}
    for c in CLASS_NAMES:
        out["classes"][c] = {
            k: _mean(d.scores[c][k] for d in days if d.n_labeled)
            for k in ("precision", "recall", "f_measure", "auc")
        }
    out["recall_at"] = {k: _mean(d.recall_at[k] for d in days) for k in RECALL_KS}
    out["random_recall_at_1"] = _mean(d.random_recall_at_1 for d in days)
    out["majority_quitter_f"] = _mean(d.majority_quitter_f for d in days)
    gaps = [d.score_gap for d in days if d.score_gap is not None]
    out["score_gap"] = (sum(gaps, Decimal(0)) / len(gaps)).quantize(Decimal("0.0001")) if gaps else None
    return out


@dataclass
class EvaluationReport:
    learner: str
    params: dict | None
    start: dt.date
    num_days: int
    days: list[DayRecord]
    aggregates: dict
    score_gaps: list[tuple[dt.date, str, Decimal]]
    rankings: list[dict]
    savings: dict
    savings_per_pair: list[dict]
    cancellation: dict | None
    cancellations: list[dict]

    def to_dict(self) -> dict:
        agg = dict(self.aggregates)
        agg["classes"] = {c: {k: _rounded(v) for k, v in s.items()} for c, s in agg["classes"].items()}
        agg["recall_at"] = {str(k): _rounded(v) for k, v in agg["recall_at"].items()}
        agg["random_recall_at_1"] = _rounded(agg["random_recall_at_1"])
        agg["majority_quitter_f"] = _rounded(agg["majority_quitter_f"])
        agg["score_gap"] = None if agg["score_gap"] is None else str(agg["score_gap"])
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "learner": self.learner,
            "params": self.params,
            "start": self.start.isoformat(),
            "num_days": self.num_days,
            "days": [d.to_dict() for d in self.days],
            "aggregates": agg,
            "savings": self.savings,
            "cancellation": self.cancellation,
        }


def _day_record(pred: DayPrediction, log: EventLog, reviews) -> tuple[DayRecord, list]:
    snap = pred.snapshot
    labeled = [i for i, s in enumerate(snap.test) if s.label is not None]
    scores = {c: {"precision": None, "recall": None, "f_measure": None, "auc": None} for c in CLASS_NAMES}
    confusion = None
    majority_f = None
    if labeled:
        actual = [snap.test[i].label for i in labeled]
        proba = pred.proba[labeled]
        report = confusion_metrics(predicted_labels(proba), actual)
        aucs = auc_ovr(proba, actual)
        confusion = report.matrix.tolist()
        for c in Outcome:
            s = report.per_class[c]
            scores[LABEL_NAMES[c]] = {"precision": s.precision, "recall": s.recall,
                                      "f_measure": s.f_measure, "auc": aucs[c]}
        q = sum(1 for a in actual if a == Outcome.QUITTER) / len(actual)
        majority_f = 2.0 * q / (1.0 + q)

    # ranking metrics only over completed tasks with a winner among the day's registrants
    registrants: dict[str, set[str]] = {}
    for s in snap.test:
        registrants.setdefault(s.task_id, set()).add(s.worker_id)
    ranked, winners, baseline = {}, {}, []
    for task_id, regs in sorted(registrants.items()):
        if not log.is_complete(task_id):
            continue
        won = task_winners(log, task_id) & regs
        if not won:
            continue
        ranked[task_id] = pred.rankings[task_id]
        winners[task_id] = won
        baseline.append(len(won) / len(regs))
    recall = {k: (recall_at_k(ranked, winners, k) if ranked else None) for k in RECALL_KS}

    gap, gap_rows = None, []
    try:
        result = score_gap(ranked, reviews, winners)
        gap = result.mean.quantize(Decimal("0.0001"))
        gap_rows = [(pred.day, t, g) for t, g in sorted(result.per_task.items())]
    except NotEnoughRankedError:
        pass

    record = DayRecord(
        pred.day, len(snap.train), len(snap.test), len(labeled), confusion, scores, recall,
        len(ranked), _mean(baseline), majority_f, gap, len(gap_rows),
    )
    return record, gap_rows


def _ranking_rows(pred: DayPrediction) -> list[dict]:
    rows = []
    for task_id, ranking in pred.rankings.items():
        for rank, e in enumerate(ranking.entries, start=1):
            rows.append({
                "day": pred.day.isoformat(), "task_id": task_id, "rank": rank, "worker_id": e.worker_id,
                "p_winner": e.probs.p_winner, "p_quitter": e.probs.p_quitter,
                "p_submitter": e.probs.p_submitter, "segment": ranking.segment(rank - 1),
            })
    return rows


def walk_forward(
    log: EventLog,
    start: dt.date,
    num_days: int,
    config: PipelineConfig = PipelineConfig(),
    learner: str = "rf",
    params=None,
    threads: int = 1,
) -> EvaluationReport:
    if num_days < 1:
        raise NotEnoughDataError("walk-forward needs at least one day", day=start)
    reviews = final_scores(log)
    tracker = CancellationTracker(log, config)
    days, gap_rows, ranking_rows = [], [], []
    labels_by_day: dict[dt.date, dict[tuple[str, str], Outcome]] = {}
    used_params = None
    for pred in daily_predictions(log, start, num_days, config, learner, params, threads):
        used_params = pred.model.params
        record, gaps = _day_record(pred, log, reviews)
        days.append(record)
        gap_rows.extend(gaps)
        ranking_rows.extend(_ranking_rows(pred))
        labels = predicted_labels(pred.proba)
        labels_by_day[pred.day] = {s.key: Outcome(int(c)) for s, c in zip(pred.snapshot.test, labels)}
        tracker.update(pred.day, pred.rankings)

    savings_doc, pair_rows = {}, []
    for name, excluded in (("all_types", frozenset()), ("excluding_assembly", frozenset({ASSEMBLY}))):
        res = effort_savings(labels_by_day, log, start, num_days, config, excluded)
        savings_doc[name] = {
            g.value: {"total": res.total[g], "pairs": res.pairs[g], "mean": _rounded(res.mean(g))}
            for g in Experience
        }
        if name == "all_types":
            pair_rows = [
                {"worker_id": w, "task_id": t, "experience": g.value, "saved_days": n}
                for (w, t), (g, n) in sorted(res.per_pair.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ]

    cancellation = None
    monitored = {t: d for t, d in tracker.predictions().items() if log.is_complete(t)}
    try:
        actual = {t: is_cancelled(log, t) for t in monitored}
        res = cancellation_metrics(monitored, actual, log.tasks)
        cancellation = {
            "precision": _rounded(res.precision), "recall": _rounded(res.recall),
            "f_measure": _rounded(res.f_measure), "confusion": res.confusion,
            "mean_savings_pct": _rounded(_mean(res.savings.values())),
        }
    except NoMonitoredTasksError:
        logger.warning("no monitored task completed within the log; cancellation metrics omitted")

    return EvaluationReport(
        learner=learner,
        params=dataclasses.asdict(used_params) if used_params is not None else None,
        start=start,
        num_days=num_days,
        days=days,
        aggregates=aggregate_days(days),
        score_gaps=gap_rows,
        rankings=ranking_rows,
        savings=savings_doc,
        savings_per_pair=pair_rows,
        cancellation=cancellation,
        cancellations=tracker.rows(),
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_table(path: Path, fields: list[str], rows) -> Path:
    """CSV with floats in fixed-point (6 places) and blanks for undefined values."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields])
    return path


def day_rows(report: EvaluationReport) -> list[dict]:
    rows = []
    for d in report.days:
        row = {"day": d.day.isoformat(), "n_train": d.n_train, "n_test": d.n_test, "n_labeled": d.n_labeled}
        for c in CLASS_NAMES:
            for k in ("precision", "recall", "f_measure", "auc"):
                row[f"{c}_{k}"] = d.scores[c][k]
        for k in RECALL_KS:
            row[f"recall_at_{k}"] = d.recall_at[k]
        row["random_recall_at_1"] = d.random_recall_at_1
        row["majority_quitter_f"] = d.majority_quitter_f
        row["score_gap"] = d.score_gap
        row["n_gap_tasks"] = d.n_gap_tasks
        rows.append(row)
    return rows


def write_report(report: EvaluationReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json"]
        paths[0].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rows = day_rows(report)
        paths.append(write_table(out / "days.csv", list(rows[0]), rows))
        paths.append(write_table(
            out / "recall_at_k.csv", ["day", "k", "recall"],
            [{"day": d.day.isoformat(), "k": k, "recall": d.recall_at[k]} for d in report.days for k in RECALL_KS],
        ))
        paths.append(write_table(
            out / "score_gap.csv", ["day", "task_id", "gap"],
            [{"day": d.isoformat(), "task_id": t, "gap": g} for d, t, g in report.score_gaps],
        ))
        paths.append(write_table(
            out / "rankings.csv",
            ["day", "task_id", "rank", "worker_id", "p_winner", "p_quitter", "p_submitter", "segment"],
            report.rankings,
        ))
        paths.append(write_table(out / "savings.csv", ["worker_id", "task_id", "experience", "saved_days"],
                                 report.savings_per_pair))
        paths.append(write_table(
            out / "cancellations.csv",
            ["task_id", "duration_days", "predicted_on", "actual_cancelled", "savings_pct"],
            report.cancellations,
        ))
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return paths
