"""CART regression tree, bagged random forest, and gradient-boosted ensemble.

Split search is exhaustive over (feature, midpoint-between-adjacent-
sorted-values) candidates, minimizing total child SSE. Candidates whose
SSE is within ``SPLIT_TIE_REL_TOL * node SSE`` of the best are treated
as tied and resolved by (lower feature index, lower threshold); the
tolerance is part of the split contract so an independent checker can
reproduce choices despite float summation-order differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SPLIT_TIE_REL_TOL = 1e-9
_ZERO_SSE_REL_TOL = 1e-14


@dataclass
class TreeNode:
    """Either a split (feature >= 0) or a leaf (feature == -1, value set)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class EnsembleModel:
    trees: list[TreeNode]
    mode: str  # single | bagged | boosted
    n_features: int
    base_score: float = 0.0
    learning_rate: float = 1.0
    tree_seeds: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"schema": 1, "kind": "ensemble", "mode": self.mode,
                "n_features": self.n_features, "base_score": self.base_score,
                "learning_rate": self.learning_rate,
                "tree_seeds": list(self.tree_seeds),
                "trees": [_tree_to_arrays(t) for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        return cls([_tree_from_arrays(t) for t in d["trees"]], d["mode"],
                   d["n_features"], d["base_score"], d["learning_rate"],
                   tuple(d.get("tree_seeds", ())))


# ---------------------------------------------------------------------------
# Split search
# ---------------------------------------------------------------------------

def _node_sse(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean()) ** 2))


def _candidate_sse(x_sorted: np.ndarray, y_sorted: np.ndarray,
                   min_node_size: int) -> tuple[np.ndarray, np.ndarray]:
    """SSE totals and thresholds for every feasible cut of one sorted column."""
    n = y_sorted.shape[0]
    cum = np.cumsum(y_sorted)
    cumsq = np.cumsum(y_sorted * y_sorted)
    total, total_sq = cum[-1], cumsq[-1]

    sizes = np.arange(1, n)  # left-side sizes for cutting after position i-1
    distinct = x_sorted[:-1] < x_sorted[1:]
    feasible = distinct & (sizes >= min_node_size) & (n - sizes >= min_node_size)
    if not feasible.any():
        return np.empty(0), np.empty(0)
    i = sizes[feasible]
    left_sum, left_sq = cum[i - 1], cumsq[i - 1]
    sse = (left_sq - left_sum ** 2 / i) \
        + (total_sq - left_sq) - (total - left_sum) ** 2 / (n - i)
    lo, hi = x_sorted[i - 1], x_sorted[i]
    mid = lo + (hi - lo) / 2.0
    thr = np.where(mid < hi, mid, lo)  # keep the intended partition if mid rounds up
    return sse, thr


def best_split(X: np.ndarray, y: np.ndarray, min_node_size: int,
               features: np.ndarray | None = None) -> tuple[int, float] | None:
    """Best (feature, threshold) over the given feature subset, or None.

    Ties within the per-node tolerance resolve to the lower feature
    index, then the lower threshold.
    """
    n, d = X.shape
    if features is None:
        features = np.arange(d)
    tie_tol = SPLIT_TIE_REL_TOL * max(_node_sse(y), 1e-300)

    best: tuple[float, int, float] | None = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        sse, thr = _candidate_sse(X[order, f], y[order], min_node_size)
        if sse.shape[0] == 0:
            continue
        within = np.where(sse <= sse.min() + tie_tol)[0]
        j = within[0]  # lowest threshold among this feature's ties
        if best is None or sse[j] < best[0] - tie_tol:
            best = (float(sse[j]), int(f), float(thr[j]))
    if best is None:
        return None
    return best[1], best[2]


def _grow(X: np.ndarray, y: np.ndarray, idx: np.ndarray, depth: int,
          min_node_size: int, max_depth: int | None,
          leaf_value: Callable[[np.ndarray], float],
          n_sub_features: int, rng: np.random.Generator | None) -> TreeNode:
    y_node = y[idx]
    sse = _node_sse(y_node)
    if (max_depth is not None and depth >= max_depth) \
            or sse <= _ZERO_SSE_REL_TOL * max(1.0, float(np.sum(y_node * y_node))) \
            or idx.shape[0] < 2 * min_node_size:
        return TreeNode(value=leaf_value(y_node))

    d = X.shape[1]
    if n_sub_features < d and rng is not None:
        features = np.sort(rng.choice(d, size=n_sub_features, replace=False))
    else:
        features = None
    found = best_split(X[idx], y_node, min_node_size, features)
    if found is None:
        return TreeNode(value=leaf_value(y_node))
    f, thr = found
    go_left = X[idx, f] <= thr
    left = _grow(X, y, idx[go_left], depth + 1, min_node_size, max_depth,
                 leaf_value, n_sub_features, rng)
    right = _grow(X, y, idx[~go_left], depth + 1, min_node_size, max_depth,
                  leaf_value, n_sub_features, rng)
    return TreeNode(feature=f, threshold=thr, left=left, right=right)


def fit_regression_tree(X: np.ndarray, y: np.ndarray, min_node_size: int = 1,
                        max_depth: int | None = None) -> TreeNode:
    """Grow a CART tree: stop at max_depth, zero node SSE, or when no
    split can keep both children at min_node_size rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    return _grow(X, y, np.arange(X.shape[0]), 0, min_node_size, max_depth,
                 lambda ys: float(ys.mean()), X.shape[1], None)


def predict_tree(root: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    _route(root, X, np.arange(X.shape[0]), out)
    return out


def _route(node: TreeNode, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.value
        return
    go_left = X[idx, node.feature] <= node.threshold
    _route(node.left, X, idx[go_left], out)
    _route(node.right, X, idx[~go_left], out)


# ---------------------------------------------------------------------------
# Random forest (bagging)
# ---------------------------------------------------------------------------

def fit_random_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 100,
                      min_node_size: int = 2, max_depth: int | None = None,
                      feature_fraction: float = 1.0 / 3.0, bootstrap: bool = True,
                      seed: int = 0) -> EnsembleModel:
    """Bagged trees with per-split feature subsampling.

    Tree i draws from its own generator seeded by (seed, i), so fitting
    order or parallel scheduling cannot change the result.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, d = X.shape
    m = max(1, int(np.ceil(feature_fraction * d)))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng([seed, i])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(_grow(X, y, np.sort(idx), 0, min_node_size, max_depth,
                           lambda ys: float(ys.mean()), m, rng))
    return EnsembleModel(trees, "bagged", d, tree_seeds=tuple(range(n_trees)))


# ---------------------------------------------------------------------------
# Gradient boosting (squared loss, L2-shrunk leaf weights)
# ---------------------------------------------------------------------------

def fit_gbt(X: np.ndarray, y: np.ndarray, n_trees: int = 100,
            learning_rate: float = 0.1, max_depth: int | None = 3,
            min_node_size: int = 2, leaf_l2: float = 0.0) -> EnsembleModel:
    """Stagewise residual fitting; leaf weight = sum(residuals)/(count + leaf_l2),
    the exact second-order step for squared loss with unit curvature."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must be in (0, 1]")
    if leaf_l2 < 0:
        raise ValueError("leaf_l2 must be >= 0")
    base = float(y.mean())
    pred = np.full(y.shape[0], base)
    trees = []
    all_rows = np.arange(X.shape[0])
    for _ in range(n_trees):
        r = y - pred
        tree = _grow(X, r, all_rows, 0, min_node_size, max_depth,
                     lambda ys: float(ys.sum() / (ys.shape[0] + leaf_l2)),
                     X.shape[1], None)
        pred += learning_rate * predict_tree(tree, X)
        trees.append(tree)
    return EnsembleModel(trees, "boosted", X.shape[1], base_score=base,
                         learning_rate=learning_rate)


def predict_ensemble(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got {X.shape}")
    if model.mode == "single":
        return predict_tree(model.trees[0], X)
    if model.mode == "bagged":
        acc = np.zeros(X.shape[0])
        for t in model.trees:
            acc += predict_tree(t, X)
        return acc / len(model.trees)
    if model.mode == "boosted":
        acc = np.full(X.shape[0], model.base_score)
        for t in model.trees:
            acc += model.learning_rate * predict_tree(t, X)
        return acc
    raise ValueError(f"unknown ensemble mode {model.mode!r}")


# ---------------------------------------------------------------------------
# Serialization (flat arrays, children by index, -1 for none)
# ---------------------------------------------------------------------------

def _tree_to_arrays(root: TreeNode) -> dict:
    feature, threshold, left, right, value = [], [], [], [], []

    def visit(node: TreeNode) -> int:
        i = len(feature)
        feature.append(node.feature)
        threshold.append(node.threshold)
        value.append(node.value)
        left.append(-1)
        right.append(-1)
        if not node.is_leaf:
            left[i] = visit(node.left)
            right[i] = visit(node.right)
        return i

    visit(root)
    return {"feature": feature, "threshold": threshold, "left": left,
            "right": right, "value": value}


def _tree_from_arrays(d: dict) -> TreeNode:
    def build(i: int) -> TreeNode:
        if d["feature"][i] < 0:
            return TreeNode(value=d["value"][i])
        return TreeNode(feature=d["feature"][i], threshold=d["threshold"][i],
                        left=build(d["left"][i]), right=build(d["right"][i]))

    return build(0)
