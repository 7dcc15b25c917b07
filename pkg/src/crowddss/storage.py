"""Reading and writing event logs.

Two formats are supported:

* the exchange files (``tasks.csv``, ``events.csv``, ``vocabulary.txt``) that
  the generator writes and the ingester reads;
* a single versioned JSON document produced by ``persist_log``.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import os
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .errors import FormatVersionMismatch, InvariantViolation, IoFailure
from .marketplace import EventKind, EventLog, EventRecord, TaskRecord, ingest_events

LOG_FORMAT = "crowddss-eventlog"
LOG_VERSION = 1

TASKS_FILE = "tasks.csv"
EVENTS_FILE = "events.csv"
VOCABULARY_FILE = "vocabulary.txt"

TASK_FIELDS = ["task_id", "task_type", "registration_open", "submission_deadline", "total_prize",
               "required_technologies"]
EVENT_FIELDS = ["kind", "worker_id", "task_id", "date", "score", "rewarded"]


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise InvariantViolation(f"bad ISO-8601 date {text!r}") from exc


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text)
    except (InvalidOperation, TypeError) as exc:
        raise InvariantViolation(f"bad decimal {text!r}") from exc


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered not in ("true", "false"):
        raise InvariantViolation(f"bad boolean {text!r}")
    return lowered == "true"


def task_to_row(task: TaskRecord) -> dict:
    return {
        "task_id": task.task_id,
        "task_type": task.task_type,
        "registration_open": task.registration_open.isoformat(),
        "submission_deadline": task.submission_deadline.isoformat(),
        "total_prize": str(task.total_prize),
        "required_technologies": ";".join(sorted(task.required_technologies)),
    }


def task_from_row(row: dict) -> TaskRecord:
    techs = row.get("required_technologies") or ""
    return TaskRecord(
        task_id=row["task_id"],
        task_type=row["task_type"],
        registration_open=_date(row["registration_open"]),
        submission_deadline=_date(row["submission_deadline"]),
        total_prize=_decimal(row["total_prize"]),
        required_technologies=frozenset(t for t in techs.split(";") if t),
    )


def event_to_row(ev: EventRecord) -> dict:
    return {
        "kind": ev.kind.value,
        "worker_id": ev.worker_id,
        "task_id": ev.task_id,
        "date": ev.date.isoformat(),
        "score": "" if ev.score is None else f"{ev.score:.2f}",
        "rewarded": "" if ev.rewarded is None else str(ev.rewarded).lower(),
    }


def event_from_row(row: dict) -> EventRecord:
    try:
        kind = EventKind(row["kind"].strip().lower())
    except ValueError as exc:
        raise InvariantViolation(f"unknown event kind {row['kind']!r}") from exc
    score = rewarded = None
    if kind is EventKind.REVIEW:
        score = _decimal(row["score"])
        rewarded = _bool(row["rewarded"])
    return EventRecord(kind, row["worker_id"], row["task_id"], _date(row["date"]), score, rewarded)


def _read_csv(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_csv(path: Path, fields: list[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_vocabulary(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return [line.strip() for line in text.splitlines() if line.strip()]


def read_data_dir(directory) -> EventLog:
    """Ingest the three exchange files found in ``directory``."""
    directory = Path(directory)
    vocabulary = read_vocabulary(directory / VOCABULARY_FILE)
    tasks = [task_from_row(r) for r in _read_csv(directory / TASKS_FILE)]
    events = [event_from_row(r) for r in _read_csv(directory / EVENTS_FILE)]
    return ingest_events(tasks, events, vocabulary)


def write_data_dir(log: EventLog, directory) -> list[Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / VOCABULARY_FILE).write_text(
            "".join(f"{name}\n" for name in log.vocabulary), encoding="utf-8"
        )
    except OSError as exc:
        raise IoFailure(f"cannot write to {directory}: {exc}") from exc
    _write_csv(directory / TASKS_FILE, TASK_FIELDS, (task_to_row(t) for t in log.tasks.values()))
    _write_csv(directory / EVENTS_FILE, EVENT_FIELDS, (event_to_row(e) for e in log.events))
    return [directory / TASKS_FILE, directory / EVENTS_FILE, directory / VOCABULARY_FILE]


def log_to_dict(log: EventLog) -> dict:
    return {
        "format": LOG_FORMAT,
        "version": LOG_VERSION,
        "vocabulary": list(log.vocabulary),
        "tasks": [task_to_row(t) for t in log.tasks.values()],
        "events": [event_to_row(e) for e in log.events],
    }


def log_from_dict(doc: dict) -> EventLog:
    if doc.get("format") != LOG_FORMAT or doc.get("version") != LOG_VERSION:
        raise FormatVersionMismatch(
            f"expected {LOG_FORMAT} v{LOG_VERSION}, found {doc.get('format')} v{doc.get('version')}"
        )
    return ingest_events(
        [task_from_row(r) for r in doc["tasks"]],
        [event_from_row(r) for r in doc["events"]],
        doc["vocabulary"],
    )


def persist_log(log: EventLog, location) -> None:
    path = Path(location)
    text = json.dumps(log_to_dict(log), indent=1, sort_keys=True)
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text + "\n", encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_log(location) -> EventLog:
    try:
        text = Path(location).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {location}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatVersionMismatch(f"{location} is not a persisted event log") from exc
    return log_from_dict(doc)
