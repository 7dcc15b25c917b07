"""Command-line entry point.

Every command that writes files writes them into ``--out`` together with a
``manifest.json`` recording the command line, the effective settings, digests
of the inputs and of every output.  Exit status is 0 on success, 1 when the
inputs fail validation or a run cannot proceed, 2 on usage errors.

Diagnostic verbosity is read from ``CROWDDSS_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .decisions import ScoredPair, rank_tasks_for_worker, rank_workers_for_task
from .errors import CrowdDSSError, IoFailure, ShapeMismatchError, UnknownTaskError
from .features import PipelineConfig, build_snapshot, feature_matrix
from .learners.model import ProbabilityTriple, TrainedModel, fit, load_model, predict_matrix, save_model, training_arrays
from .learners.trees import ForestParams, TreeParams
from .marketplace import LABEL_NAMES, EventLog, label_counts
from .storage import EVENTS_FILE, TASKS_FILE, VOCABULARY_FILE, load_log, persist_log, read_data_dir, write_data_dir
from .synth import GeneratorConfig, generate_marketplace
from .tuning import grid_search
from .walkforward import (
    CancellationTracker,
    daily_predictions,
    walk_forward,
    write_report,
    write_table,
)

MANIFEST = "manifest.json"
logger = logging.getLogger("crowddss")


def iso_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO-8601 date: {text!r}") from None


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {value}")
    return value


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_files(path: Path) -> list[Path]:
    if path.is_dir():
        return [path / name for name in (TASKS_FILE, EVENTS_FILE, VOCABULARY_FILE) if (path / name).exists()]
    return [path] if path.exists() else []


def load_data(path) -> EventLog:
    """A directory of exchange files, or a persisted event-log file."""
    path = Path(path)
    if path.is_dir():
        return read_data_dir(path)
    if path.exists():
        return load_log(path)
    raise IoFailure(f"no such data location: {path}")


def _jsonable(value):
    if isinstance(value, (dt.date, Path)):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_manifest(out: Path, args, argv: list[str], inputs: list[Path], outputs: list[Path]) -> Path:
    settings = {k: v for k, v in vars(args).items() if k not in ("handler", "threads")}
    doc = {
        "command": args.command,
        "argv": list(argv),
        "config": _jsonable(settings),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p.relative_to(out)): sha256_file(p) for p in sorted(outputs)},
    }
    path = out / MANIFEST
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _make_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    return out


def pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(window_days=args.window_days, p_threshold=args.threshold, monitor_days=args.monitor_days)


def learner_params(args):
    if args.learner == "rf":
        return ForestParams(num_trees=args.trees, num_features=args.features, min_leaf=args.min_leaf,
                            max_depth=args.max_depth, seed=args.seed)
    if args.learner == "dt":
        return TreeParams(min_leaf=args.min_leaf, pruning_strength=args.pruning, max_depth=args.max_depth,
                          seed=args.seed)
    return None


def _write_json(path: Path, doc) -> Path:
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


# commands


def cmd_simulate(args, argv):
    config = GeneratorConfig.from_file(args.config) if args.config else GeneratorConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    args.seed = config.seed
    log = generate_marketplace(config)
    out = _make_out(args.out)
    outputs = write_data_dir(log, out)
    outputs.append(_write_json(out / "generator.json", config.to_dict()))
    write_manifest(out, args, argv, [Path(args.config)] if args.config else [], outputs)
    print(f"wrote {len(log.tasks)} tasks and {len(log.events)} events to {out}")


def cmd_ingest(args, argv):
    log = load_data(args.data)
    out = _make_out(args.out)
    persist_log(log, out / "eventlog.json")
    counts = label_counts(log)
    summary = {
        "tasks": len(log.tasks),
        "events": len(log.events),
        "workers": len(log.workers),
        "pairs": len(log.pairs),
        "labels": {LABEL_NAMES[k]: v for k, v in sorted(counts.items())},
        "horizon": log.horizon.isoformat() if log.horizon else None,
    }
    outputs = [out / "eventlog.json", _write_json(out / "summary.json", summary)]
    write_manifest(out, args, argv, _input_files(Path(args.data)), outputs)
    print(json.dumps(summary, sort_keys=True))


def _model_for_day(args, log, snap) -> TrainedModel:
    if getattr(args, "model", None):
        model = load_model(args.model)
    else:
        model = fit(args.learner, *training_arrays(snap.train), learner_params(args), threads=args.threads)
    return model


def cmd_train(args, argv):
    log = load_data(args.data)
    snap = build_snapshot(log, args.day, pipeline_config(args))
    model = _model_for_day(args, log, snap)
    out = _make_out(args.out)
    save_model(model, out / "model.json")
    write_manifest(out, args, argv, _input_files(Path(args.data)), [out / "model.json"])
    print(f"trained {args.learner} on {len(snap.train)} samples as of {args.day}")


def cmd_evaluate(args, argv):
    log = load_data(args.data)
    report = walk_forward(log, args.start, args.days, pipeline_config(args), args.learner,
                          learner_params(args), threads=args.threads)
    out = _make_out(args.out)
    outputs = write_report(report, out)
    write_manifest(out, args, argv, _input_files(Path(args.data)), outputs)
    agg = report.to_dict()["aggregates"]
    print(json.dumps({"recall_at": agg["recall_at"], "score_gap": agg["score_gap"],
                      "classes": agg["classes"]}, sort_keys=True))


def _scored(model, samples, day) -> list[ScoredPair]:
    if not samples:
        return []
    X, _ = feature_matrix(samples)
    if X.shape[1] != model.n_features:
        raise ShapeMismatchError(f"model expects {model.n_features} features, data has {X.shape[1]}")
    proba = predict_matrix(model, X)
    return [ScoredPair(s.worker_id, s.task_id, ProbabilityTriple(*row), day) for s, row in zip(samples, proba)]


RANK_FIELDS = ["rank", "id", "p_winner", "p_quitter", "p_submitter", "segment"]


def _emit_ranking(ranking, counterpart, args, argv, inputs):
    rows = [
        {"rank": i + 1, "id": counterpart(e), "p_winner": e.probs.p_winner, "p_quitter": e.probs.p_quitter,
         "p_submitter": e.probs.p_submitter, "segment": ranking.segment(i)}
        for i, e in enumerate(ranking.entries)
    ]
    for row in rows:
        print("\t".join([str(row["rank"]), row["id"]] + [f"{row[k]:.6f}" for k in RANK_FIELDS[2:5]]
                        + [row["segment"]]))
    if args.out:
        out = _make_out(args.out)
        path = write_table(out / "ranking.csv", RANK_FIELDS, rows)
        write_manifest(out, args, argv, inputs, [path])


def cmd_rank_tasks(args, argv):
    log = load_data(args.data)
    snap = build_snapshot(log, args.day, pipeline_config(args), include_candidates=args.candidates)
    model = _model_for_day(args, log, snap)
    samples = [s for s in snap.test if s.worker_id == args.worker]
    if args.candidates:
        samples += [s for s in snap.candidates if s.worker_id == args.worker]
    ranking = rank_tasks_for_worker(args.worker, _scored(model, samples, args.day), args.threshold, log.tasks)
    inputs = _input_files(Path(args.data)) + ([Path(args.model)] if args.model else [])
    _emit_ranking(ranking, lambda e: e.task_id, args, argv, inputs)


def cmd_rank_workers(args, argv):
    log = load_data(args.data)
    if args.task not in log.tasks:
        raise UnknownTaskError(f"task {args.task} is not in the log")
    snap = build_snapshot(log, args.day, pipeline_config(args))
    model = _model_for_day(args, log, snap)
    samples = [s for s in snap.test if s.task_id == args.task]
    ranking = rank_workers_for_task(args.task, _scored(model, samples, args.day), args.threshold, log)
    inputs = _input_files(Path(args.data)) + ([Path(args.model)] if args.model else [])
    _emit_ranking(ranking, lambda e: e.worker_id, args, argv, inputs)


def cmd_predict_cancel(args, argv):
    log = load_data(args.data)
    config = pipeline_config(args)
    tracker = CancellationTracker(log, config)
    for pred in daily_predictions(log, args.start, args.days, config, args.learner, learner_params(args),
                                  args.threads):
        tracker.update(pred.day, pred.rankings)
    rows = tracker.rows()
    for row in rows:
        if row["predicted_on"]:
            print(f"{row['task_id']}\t{row['predicted_on']}")
    out = _make_out(args.out)
    path = write_table(out / "cancellations.csv",
                       ["task_id", "duration_days", "predicted_on", "actual_cancelled", "savings_pct"], rows)
    write_manifest(out, args, argv, _input_files(Path(args.data)), [path])


def cmd_tune(args, argv):
    log = load_data(args.data)
    config = pipeline_config(args)
    snapshots = [build_snapshot(log, args.start + dt.timedelta(days=i), config) for i in range(args.days)]
    result = grid_search(snapshots, args.learner, seed=args.seed, threads=args.threads)
    out = _make_out(args.out)
    rows = [s.as_row() for s in result.table]
    path = write_table(out / "tuning.csv", list(rows[0]), rows)
    best = _write_json(out / "best.json", {k: (round(v, 6) if isinstance(v, float) else v)
                                            for k, v in result.best.as_row().items()})
    write_manifest(out, args, argv, _input_files(Path(args.data)), [path, best])
    print(json.dumps(json.loads(best.read_text()), sort_keys=True))


def _read_report(run: Path) -> dict:
    try:
        return json.loads((run / "report.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {run / 'report.json'}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"{run / 'report.json'} is not a report") from exc


def cmd_report(args, argv):
    """Plot-ready tables: per-learner class scores, recall@K per day, score gap per day, savings distribution."""
    out = _make_out(args.out)
    algo, recall, gap, savings = [], [], [], []
    inputs = []
    for run in map(Path, args.run):
        doc = _read_report(run)
        inputs.append(run / "report.json")
        name = run.name
        for cls, scores in sorted(doc["aggregates"]["classes"].items()):
            algo.append({"run": name, "learner": doc["learner"], "class": cls, **scores})
        for day in doc["days"]:
            for k, value in sorted(day["recall_at"].items(), key=lambda kv: int(kv[0])):
                recall.append({"run": name, "day": day["day"], "k": k, "recall": value})
            gap.append({"run": name, "day": day["day"], "score_gap": day["score_gap"],
                        "n_tasks": day["n_gap_tasks"]})
        table = run / "cancellations.csv"
        if table.exists():
            with open(table, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    if row["predicted_on"] and row["actual_cancelled"] == "true":
                        savings.append({"run": name, "task_id": row["task_id"],
                                        "duration_days": row["duration_days"], "savings_pct": row["savings_pct"]})
            inputs.append(table)
    outputs = [
        write_table(out / "algorithms.csv", ["run", "learner", "class", "precision", "recall", "f_measure", "auc"], algo),
        write_table(out / "recall_at_k.csv", ["run", "day", "k", "recall"], recall),
        write_table(out / "score_gap.csv", ["run", "day", "score_gap", "n_tasks"], gap),
        write_table(out / "cancellation_savings.csv", ["run", "task_id", "duration_days", "savings_pct"], savings),
    ]
    write_manifest(out, args, argv, inputs, outputs)
    print(f"wrote {len(outputs)} tables to {out}")


# parser


def _add_pipeline(p):
    p.add_argument("--window-days", type=positive_int, default=90, help="history window for worker features")
    p.add_argument("--threshold", type=float, default=0.33, help="probability floor for recommendations")
    p.add_argument("--monitor-days", type=positive_int, default=3,
                   help="consecutive empty-recommendation days before a cancellation is predicted")


def _add_learner(p):
    p.add_argument("--learner", choices=("rf", "dt", "nb"), default="rf")
    p.add_argument("--trees", type=positive_int, default=100, help="forest size (rf)")
    p.add_argument("--features", type=positive_int, default=50, help="features tried per split (rf)")
    p.add_argument("--min-leaf", type=positive_int, default=2)
    p.add_argument("--pruning", type=float, default=0.0, help="cost-complexity pruning strength (dt)")
    p.add_argument("--max-depth", type=positive_int, default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowddss", description="Worker/task decision support for task marketplaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=positive_int, default=os.cpu_count() or 1,
                        help="worker threads for forest training (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic marketplace")
    p.add_argument("--config", help="generator settings (.json, or INI with a [generator] section)")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("ingest", help="validate exchange files and persist the event log")
    p.add_argument("--data", required=True, help="directory with tasks.csv, events.csv, vocabulary.txt")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("train", help="train one model on the training set of a day")
    p.add_argument("--data", required=True)
    p.add_argument("--day", type=iso_date, required=True)
    _add_learner(p)
    _add_pipeline(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="walk-forward evaluation over consecutive days")
    p.add_argument("--data", required=True)
    p.add_argument("--start", type=iso_date, required=True)
    p.add_argument("--days", type=positive_int, default=30)
    _add_learner(p)
    _add_pipeline(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_evaluate)

    for name, handler, subject, help_text in (
        ("rank-tasks", cmd_rank_tasks, "--worker", "rank open tasks for a worker"),
        ("rank-workers", cmd_rank_workers, "--task", "rank registered workers for a task"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--day", type=iso_date, required=True)
        p.add_argument(subject, required=True)
        p.add_argument("--model", help="trained model file; by default a model is trained on the day")
        if name == "rank-tasks":
            p.add_argument("--candidates", action="store_true",
                           help="also score open tasks the worker has not registered for")
        _add_learner(p)
        _add_pipeline(p)
        p.add_argument("--out", help="also write ranking.csv and a manifest here")
        p.set_defaults(handler=handler)

    p = sub.add_parser("predict-cancel", help="flag tasks likely to end without a winner")
    p.add_argument("--data", required=True)
    p.add_argument("--start", type=iso_date, required=True)
    p.add_argument("--days", type=positive_int, default=30)
    _add_learner(p)
    _add_pipeline(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_predict_cancel)

    p = sub.add_parser("tune", help="grid search over learner settings")
    p.add_argument("--data", required=True)
    p.add_argument("--start", type=iso_date, required=True)
    p.add_argument("--days", type=positive_int, default=5)
    p.add_argument("--learner", choices=("rf", "dt", "nb"), default="rf")
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("report", help="plot-ready tables from one or more evaluation runs")
    p.add_argument("--run", action="append", required=True, help="evaluation output directory (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=os.environ.get("CROWDDSS_LOG_LEVEL", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.handler(args, argv)
    except CrowdDSSError as exc:
        print(f"crowddss: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
