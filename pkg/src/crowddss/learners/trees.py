"""CART decision trees and random forests."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyTrainingSetError, InvalidParamsError, ShapeMismatchError
from . import _kernel

LEAF = _kernel.LEAF
# leaf-majority tie order: winner, then submitter, then quitter
VOTE_PREFERENCE = (0, 2, 1)


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 2
    pruning_strength: float = 0.0
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise InvalidParamsError("min_leaf must be positive")
        if self.pruning_strength < 0:
            raise InvalidParamsError("pruning_strength must be >= 0")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidParamsError("max_depth must be >= 0")


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 100
    num_features: int = 50
    min_leaf: int = 2
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.num_trees < 1:
            raise InvalidParamsError("num_trees must be positive")
        if self.num_features < 1:
            raise InvalidParamsError("num_features must be positive")
        if self.min_leaf < 1:
            raise InvalidParamsError("min_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidParamsError("max_depth must be >= 0")


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _kernel.apply_tree(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold,
                                  self.left, self.right)

    def leaf_frequencies(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.apply(X)]
        return c / c.sum(axis=1, keepdims=True)

    def leaf_votes(self, X: np.ndarray) -> np.ndarray:
        return majority_class(self.counts)[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["counts"], dtype=np.float64).reshape(-1, 3),
        )

    def same_as(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "left", "right", "counts"))


def majority_class(counts: np.ndarray) -> np.ndarray:
    """Per-row argmax of class counts with ties resolved by ``VOTE_PREFERENCE``."""
    counts = np.atleast_2d(counts)
    best = np.full(len(counts), VOTE_PREFERENCE[0], dtype=np.int64)
    best_count = counts[:, VOTE_PREFERENCE[0]].copy()
    for c in VOTE_PREFERENCE[1:]:
        better = counts[:, c] > best_count
        best[better] = c
        best_count[better] = counts[better, c]
    return best


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    q = counts / total
    return float(1.0 - np.sum(q * q))


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeMismatchError(f"X has shape {X.shape}, y has {len(y)} labels")
    if len(y) == 0:
        raise EmptyTrainingSetError("cannot train on zero samples")
    if y.min() < 0 or y.max() > 2:
        raise ShapeMismatchError("labels must be 0 (winner), 1 (quitter) or 2 (submitter)")
    return np.asfortranarray(X), y


def rank_code(Xf: np.ndarray):
    """Per-column dense ranks plus the padded table of sorted distinct values."""
    n, p = Xf.shape
    ranks = np.empty((n, p), dtype=np.int64, order="F")
    columns = []
    for f in range(p):
        values, inverse = np.unique(Xf[:, f], return_inverse=True)
        ranks[:, f] = inverse.ravel()
        columns.append(values)
    n_uniq = np.array([len(v) for v in columns], dtype=np.int64)
    uniq = np.zeros((p, int(n_uniq.max())))
    for f, values in enumerate(columns):
        uniq[f, : len(values)] = values
    return ranks, uniq, n_uniq


def _grow(Xf, coded, y, idx, max_features, min_leaf, max_depth, seed) -> Tree:
    ranks, uniq, n_uniq = coded
    out = _kernel.grow_tree(Xf, ranks, uniq, n_uniq, y, idx, int(max_features), int(min_leaf),
                            -1 if max_depth is None else int(max_depth), np.uint64(seed))
    return Tree(*out)


def fit_tree(X, y, params: TreeParams = TreeParams()) -> Tree:
    """Grow a CART tree over all features, then apply cost-complexity pruning."""
    Xf, y = _check_xy(X, y)
    idx = np.arange(len(y), dtype=np.int64)
    tree = _grow(Xf, rank_code(Xf), y, idx, Xf.shape[1], params.min_leaf, params.max_depth, params.seed)
    if params.pruning_strength > 0:
        tree = prune(tree, params.pruning_strength)
    return tree


def prune(tree: Tree, alpha: float) -> Tree:
    """Minimal cost-complexity pruning.

    Node risk is its Gini impurity weighted by the fraction of training rows it
    holds.  The weakest links (smallest ``(R(node) - R(subtree)) / (leaves - 1)``)
    are collapsed while that ratio is below ``alpha``.
    """
    feature = tree.feature.copy()
    n_total = tree.counts[0].sum()
    node_risk = np.array([gini(c) * c.sum() / n_total for c in tree.counts])
    n = tree.n_nodes
    while True:
        leaves = np.zeros(n)
        sub_risk = np.zeros(n)
        # children always carry larger indices than their parent
        for node in range(n - 1, -1, -1):
            if feature[node] == LEAF:
                leaves[node] = 1
                sub_risk[node] = node_risk[node]
            else:
                l, r = tree.left[node], tree.right[node]
                leaves[node] = leaves[l] + leaves[r]
                sub_risk[node] = sub_risk[l] + sub_risk[r]
        internal = np.flatnonzero(feature != LEAF)
        if len(internal) == 0:
            break
        g = (node_risk[internal] - sub_risk[internal]) / (leaves[internal] - 1)
        g_min = g.min()
        if g_min >= alpha:
            break
        feature[internal[g == g_min]] = LEAF
    return _compact(tree, feature)


def _compact(tree: Tree, feature: np.ndarray) -> Tree:
    order, stack = [], [0]
    while stack:
        node = stack.pop()
        order.append(node)
        if feature[node] != LEAF:
            stack.append(tree.right[node])
            stack.append(tree.left[node])
    new_id = {old: i for i, old in enumerate(order)}
    m = len(order)
    f = np.full(m, LEAF, dtype=np.int64)
    thr = np.zeros(m)
    left = np.full(m, LEAF, dtype=np.int64)
    right = np.full(m, LEAF, dtype=np.int64)
    for i, old in enumerate(order):
        if feature[old] != LEAF:
            f[i] = feature[old]
            thr[i] = tree.threshold[old]
            left[i] = new_id[tree.left[old]]
            right[i] = new_id[tree.right[old]]
    return Tree(f, thr, left, right, tree.counts[order].copy())


def tree_seeds(seed: int, index: int) -> tuple[np.random.SeedSequence, int]:
    """Bootstrap stream and split-sampling seed for tree ``index`` of a forest."""
    root = seed & 0xFFFFFFFFFFFFFFFF
    boot = np.random.SeedSequence(root, spawn_key=(index, 0))
    split = np.random.SeedSequence(root, spawn_key=(index, 1)).generate_state(1, np.uint64)[0]
    return boot, int(split)


def fit_forest(X, y, params: ForestParams = ForestParams(), threads: int = 1) -> list[Tree]:
    Xf, y = _check_xy(X, y)
    n, p = Xf.shape
    if params.num_features > p:
        raise InvalidParamsError(f"num_features={params.num_features} exceeds {p} available features")
    coded = rank_code(Xf)

    def grow_one(t: int) -> Tree:
        boot, split_seed = tree_seeds(params.seed, t)
        if params.bootstrap:
            idx = np.random.default_rng(boot).integers(0, n, size=n).astype(np.int64)
        else:
            idx = np.arange(n, dtype=np.int64)
        return _grow(Xf, coded, y, idx, params.num_features, params.min_leaf, params.max_depth, split_seed)

    if threads > 1 and params.num_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(grow_one, range(params.num_trees)))
    return [grow_one(t) for t in range(params.num_trees)]


def forest_votes(trees, X) -> np.ndarray:
    """Per-class vote counts, shape (n, 3)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    votes = np.zeros((len(X), 3), dtype=np.int64)
    rows = np.arange(len(X))
    for tree in trees:
        np.add.at(votes, (rows, tree.leaf_votes(X)), 1)
    return votes


def forest_proba(trees, X) -> np.ndarray:
    return forest_votes(trees, X) / len(trees)
