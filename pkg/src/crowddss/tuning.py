"""Grid search over learner settings on a run of daily snapshots."""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyGridError, NotEnoughDataError
from .features import DailySnapshot, feature_matrix
from .learners.model import fit, predict_matrix, predicted_labels, training_arrays
from .learners.trees import ForestParams, TreeParams
from .marketplace import Outcome
from .metrics import auc_ovr, confusion_metrics

RF_TREES = (10, 25, 50, 75, 100)
RF_FEATURES = (10, 30, 50, 75)
DT_PRUNING = (0.0, 0.0001, 0.001, 0.01, 0.1, 1.0)
DT_MIN_LEAF = (2, 5, 10)
SCORE_DECIMALS = 9


def rf_grid(seed: int = 0) -> list[ForestParams]:
    return [ForestParams(num_trees=t, num_features=f, seed=seed) for t, f in itertools.product(RF_TREES, RF_FEATURES)]


def dt_grid(seed: int = 0) -> list[TreeParams]:
    return [TreeParams(min_leaf=m, pruning_strength=a, seed=seed) for a, m in itertools.product(DT_PRUNING, DT_MIN_LEAF)]


def default_grid(learner: str, seed: int = 0) -> list:
    if learner == "rf":
        return rf_grid(seed)
    if learner == "dt":
        return dt_grid(seed)
    if learner == "nb":
        return [None]
    raise ValueError(f"unknown learner {learner!r}")


def complexity(params) -> tuple:
    """Smaller is simpler: fewer trees then fewer features; for trees, more pruning then larger leaves."""
    if isinstance(params, ForestParams):
        return (params.num_trees, params.num_features)
    if isinstance(params, TreeParams):
        return (-params.pruning_strength, -params.min_leaf)
    return ()


@dataclass(frozen=True)
class ConfigScore:
    params: object
    winner_f: float
    quitter_f: float
    auc: dict[str, float | None]
    days: int

    def as_row(self) -> dict:
        row = dict(dataclasses.asdict(self.params)) if self.params is not None else {}
        row.update(winner_f=self.winner_f, quitter_f=self.quitter_f, days=self.days)
        for name, value in self.auc.items():
            row[f"auc_{name}"] = value
        return row


@dataclass(frozen=True)
class TuningResult:
    best: ConfigScore
    table: list[ConfigScore]


def select_best(table: Sequence[ConfigScore], key: Callable = complexity) -> ConfigScore:
    """Highest mean winner F, then quitter F (both compared at 9 decimals), then lowest complexity."""
    if not table:
        raise EmptyGridError("no configurations to choose from")
    return min(table, key=lambda s: (-round(s.winner_f, SCORE_DECIMALS), -round(s.quitter_f, SCORE_DECIMALS),
                                     key(s.params)))


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def score_config(learner: str, params, snapshots: Sequence[DailySnapshot], threads: int = 1) -> ConfigScore:
    winner_f, quitter_f = [], []
    aucs: dict[str, list] = {o.name.lower(): [] for o in Outcome}
    used = 0
    for snap in snapshots:
        labeled = snap.labeled_test()
        if not snap.train or not labeled:
            continue
        model = fit(learner, *training_arrays(snap.train), params, threads=threads)
        X, y = feature_matrix(labeled)
        proba = predict_matrix(model, X)
        report = confusion_metrics(predicted_labels(proba), y)
        winner_f.append(report.per_class[Outcome.WINNER].f_measure)
        quitter_f.append(report.per_class[Outcome.QUITTER].f_measure)
        for c, value in auc_ovr(proba, y).items():
            aucs[c.name.lower()].append(value)
        used += 1
    if used == 0:
        raise NotEnoughDataError("no snapshot has both training samples and labeled test samples")
    return ConfigScore(params, float(np.mean(winner_f)), float(np.mean(quitter_f)),
                       {c: _mean(v) for c, v in aucs.items()}, used)


def grid_search(
    snapshots: Sequence[DailySnapshot],
    learner: str,
    grid: Sequence | None = None,
    seed: int = 0,
    threads: int = 1,
) -> TuningResult:
    """Score every configuration on every snapshot and pick the best one."""
    grid = default_grid(learner, seed) if grid is None else list(grid)
    if not grid:
        raise EmptyGridError("the parameter grid is empty")
    if not any(s.train and s.labeled_test() for s in snapshots):
        raise NotEnoughDataError("no snapshot has both training samples and labeled test samples")
    table = [score_config(learner, params, snapshots, threads) for params in grid]
    return TuningResult(select_best(table), table)
