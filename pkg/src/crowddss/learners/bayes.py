"""Naive Bayes with Gaussian continuous and Bernoulli binary features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import EmptyTrainingSetError, ShapeMismatchError

VAR_FLOOR = 1e-9
N_CLASSES = 3


@dataclass(frozen=True, eq=False)
class NaiveBayes:
    continuous: np.ndarray      # column indices
    binary: np.ndarray          # column indices
    class_count: np.ndarray     # (3,)
    mean: np.ndarray            # (3, n_continuous)
    var: np.ndarray             # (3, n_continuous), floored
    p_one: np.ndarray           # (3, n_binary), add-one smoothed

    @property
    def n_features(self) -> int:
        return len(self.continuous) + len(self.binary)

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = np.tile(np.log(self.class_count / self.class_count.sum()), (len(X), 1))
        xc = X[:, self.continuous]
        xb = X[:, self.binary]
        for c in range(N_CLASSES):
            if self.class_count[c] == 0:
                continue
            var = self.var[c]
            out[:, c] += -0.5 * np.sum(np.log(2.0 * np.pi * var) + (xc - self.mean[c]) ** 2 / var, axis=1)
            p = self.p_one[c]
            out[:, c] += xb @ np.log(p) + (1.0 - xb) @ np.log1p(-p)
        return out

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("continuous", "binary", "class_count", "mean", "var", "p_one")}

    @classmethod
    def from_dict(cls, doc: dict) -> "NaiveBayes":
        n_c, n_b = len(doc["continuous"]), len(doc["binary"])
        return cls(
            np.asarray(doc["continuous"], dtype=np.int64),
            np.asarray(doc["binary"], dtype=np.int64),
            np.asarray(doc["class_count"], dtype=np.float64),
            np.asarray(doc["mean"], dtype=np.float64).reshape(N_CLASSES, n_c),
            np.asarray(doc["var"], dtype=np.float64).reshape(N_CLASSES, n_c),
            np.asarray(doc["p_one"], dtype=np.float64).reshape(N_CLASSES, n_b),
        )


def fit_naive_bayes(X, y, binary_columns=None) -> NaiveBayes:
    """Fit class priors, per-class Gaussians (MLE variance) and smoothed Bernoullis.

    ``binary_columns`` lists the 0/1 columns; every other column is Gaussian.
    A class absent from ``y`` gets prior 0 and never receives probability.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeMismatchError(f"X has shape {X.shape}, y has {len(y)} labels")
    if len(y) == 0:
        raise EmptyTrainingSetError("cannot train on zero samples")
    p = X.shape[1]
    binary = np.array(sorted([] if binary_columns is None else binary_columns), dtype=np.int64)
    continuous = np.array([j for j in range(p) if j not in set(binary.tolist())], dtype=np.int64)

    class_count = np.zeros(N_CLASSES)
    mean = np.zeros((N_CLASSES, len(continuous)))
    var = np.ones((N_CLASSES, len(continuous)))
    p_one = np.full((N_CLASSES, len(binary)), 0.5)
    for c in range(N_CLASSES):
        rows = X[y == c]
        class_count[c] = len(rows)
        if len(rows) == 0:
            continue
        xc = rows[:, continuous]
        mean[c] = xc.mean(axis=0)
        var[c] = np.maximum(xc.var(axis=0), VAR_FLOOR)
        p_one[c] = (rows[:, binary].sum(axis=0) + 1.0) / (len(rows) + 2.0)
    return NaiveBayes(continuous, binary, class_count, mean, var, p_one)
