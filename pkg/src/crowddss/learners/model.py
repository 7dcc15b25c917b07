"""Trained models over labeled samples: training entry points, prediction, files."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import EmptyTrainingSetError, FormatVersionMismatch, IoFailure, ShapeMismatchError
from ..features import BINARY_COLUMNS, N_FEATURES, LabeledSample
from ..marketplace import Outcome
from .bayes import NaiveBayes, fit_naive_bayes
from .trees import ForestParams, Tree, TreeParams, fit_forest, fit_tree, forest_proba, majority_class

MODEL_FORMAT = "crowddss-model"
MODEL_VERSION = 1


class ProbabilityTriple(NamedTuple):
    p_winner: float
    p_quitter: float
    p_submitter: float

    def predicted(self) -> Outcome:
        return Outcome(int(majority_class(np.array([self]))[0]))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str                       # "rf", "dt" or "nb"
    params: object                  # ForestParams, TreeParams or None
    fingerprint: str
    n_features: int
    trees: tuple[Tree, ...] = ()
    bayes: NaiveBayes | None = None

    @property
    def seed(self):
        return getattr(self.params, "seed", None)


def canonical_order(samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    return sorted(samples, key=lambda s: (s.task_id, s.worker_id, s.as_of_day))


def training_arrays(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise EmptyTrainingSetError("cannot train on zero samples")
    ordered = canonical_order(samples)
    if any(s.label is None for s in ordered):
        raise ShapeMismatchError("training samples must be labeled")
    X = np.vstack([s.features for s in ordered]).astype(np.float64)
    y = np.array([int(s.label) for s in ordered], dtype=np.int64)
    return X, y


def fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()


def fit(kind: str, X, y, params=None, threads: int = 1) -> TrainedModel:
    """Fit a learner on arrays that are already in canonical order."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    fp = fingerprint(X, y)
    if kind == "rf":
        params = params or ForestParams()
        trees = fit_forest(X, y, params, threads=threads)
        return TrainedModel("rf", params, fp, X.shape[1], trees=tuple(trees))
    if kind == "dt":
        params = params or TreeParams()
        return TrainedModel("dt", params, fp, X.shape[1], trees=(fit_tree(X, y, params),))
    if kind == "nb":
        binary = BINARY_COLUMNS if X.shape[1] == N_FEATURES else None
        return TrainedModel("nb", None, fp, X.shape[1], bayes=fit_naive_bayes(X, y, binary))
    raise ValueError(f"unknown learner {kind!r}")


def train_tree(samples, params: TreeParams = TreeParams()) -> TrainedModel:
    return fit("dt", *training_arrays(samples), params)


def train_forest(samples, params: ForestParams = ForestParams(), threads: int = 1) -> TrainedModel:
    return fit("rf", *training_arrays(samples), params, threads=threads)


def train_naive_bayes(samples) -> TrainedModel:
    return fit("nb", *training_arrays(samples))


def predict_matrix(model: TrainedModel, X) -> np.ndarray:
    """Class probabilities, shape (n, 3), columns (winner, quitter, submitter)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ShapeMismatchError(f"expected {model.n_features} features, got {X.shape[1]}")
    if model.kind == "rf":
        return forest_proba(model.trees, X)
    if model.kind == "dt":
        return model.trees[0].leaf_frequencies(X)
    return model.bayes.predict_proba(X)


def predict_proba(model: TrainedModel, features) -> ProbabilityTriple:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ShapeMismatchError("predict_proba takes a single feature vector")
    return ProbabilityTriple(*map(float, predict_matrix(model, features[None, :])[0]))


def predicted_labels(proba: np.ndarray) -> np.ndarray:
    return majority_class(proba)


def model_to_dict(model: TrainedModel) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "params": dataclasses.asdict(model.params) if model.params is not None else None,
        "fingerprint": model.fingerprint,
        "n_features": model.n_features,
    }
    if model.kind == "nb":
        doc["bayes"] = model.bayes.to_dict()
    else:
        doc["trees"] = [t.to_dict() for t in model.trees]
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise FormatVersionMismatch(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
    kind = doc["kind"]
    params = None
    if kind == "rf":
        params = ForestParams(**doc["params"])
    elif kind == "dt":
        params = TreeParams(**doc["params"])
    if kind == "nb":
        return TrainedModel(kind, None, doc["fingerprint"], doc["n_features"],
                            bayes=NaiveBayes.from_dict(doc["bayes"]))
    trees = tuple(Tree.from_dict(t) for t in doc["trees"])
    return TrainedModel(kind, params, doc["fingerprint"], doc["n_features"], trees=trees)


def save_model(model: TrainedModel, path) -> None:
    try:
        Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatVersionMismatch(f"{path} is not a model file") from exc
    return model_from_dict(doc)
