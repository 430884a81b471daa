"""CART splits against an O(n^2 d) brute-force oracle; forest and GBT contracts."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yieldbench.trees import (SPLIT_TIE_REL_TOL, EnsembleModel, TreeNode,
                              best_split, fit_gbt, fit_random_forest,
                              fit_regression_tree, predict_ensemble,
                              predict_tree)


# ---------------------------------------------------------------------------
# brute-force split oracle (shares the published tie-tolerance contract)
# ---------------------------------------------------------------------------

def oracle_best_split(X, y, min_node_size):
    """Exhaustive candidate scan with direct (non-incremental) SSE sums."""
    n, d = X.shape
    node_sse = float(np.sum((y - y.mean()) ** 2))
    tie = SPLIT_TIE_REL_TOL * max(node_sse, 1e-300)
    best = None  # (sse, feature, threshold)
    for f in range(d):
        xs = np.sort(X[:, f])
        cands = []
        for i in range(1, n):
            lo, hi = xs[i - 1], xs[i]
            if not lo < hi:
                continue
            if i < min_node_size or n - i < min_node_size:
                continue
            mid = lo + (hi - lo) / 2.0
            thr = mid if mid < hi else lo
            left = y[X[:, f] <= thr]
            right = y[X[:, f] > thr]
            sse = float(np.sum((left - left.mean()) ** 2)
                        + np.sum((right - right.mean()) ** 2))
            cands.append((float(thr), sse))
        if not cands:
            continue
        feat_min = min(s for _, s in cands)
        thr, sse = next((t, s) for t, s in cands if s <= feat_min + tie)
        if best is None or sse < best[0] - tie:
            best = (sse, f, thr)
    return None if best is None else (best[1], best[2])


def _random_case(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    d = int(rng.integers(1, 4))
    min_node = int(rng.integers(1, 6))
    if seed % 4 == 3:  # quantized case: exact SSE ties across features
        X = rng.integers(0, 4, size=(n, d)).astype(np.float64)
        y = rng.integers(0, 3, size=n).astype(np.float64)
    else:
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
    return X, y, min_node


@pytest.mark.parametrize("block", range(8))
def test_best_split_matches_oracle(block):
    # 200 seeded cases total, split into blocks for readable failures
    for seed in range(block * 25, (block + 1) * 25):
        X, y, min_node = _random_case(seed)
        got = best_split(X, y, min_node)
        want = oracle_best_split(X, y, min_node)
        assert got == want, f"seed={seed} got={got} want={want}"


def test_best_split_none_when_infeasible():
    X = np.ones((6, 2))  # no distinct adjacent values anywhere
    y = np.arange(6.0)
    assert best_split(X, y, 1) is None
    X2 = np.arange(4.0).reshape(-1, 1)
    assert best_split(X2, np.arange(4.0), 3) is None  # both sides need 3 rows


def test_best_split_threshold_splits_cleanly():
    # threshold must separate the two adjacent values that defined it
    X = np.array([[0.1], [0.1 + 1e-16]])  # midpoint rounds up to hi
    y = np.array([0.0, 1.0])
    found = best_split(X, y, 1)
    assert found is not None
    f, thr = found
    assert np.sum(X[:, f] <= thr) == 1


# ---------------------------------------------------------------------------
# single tree
# ---------------------------------------------------------------------------

def test_tree_interpolates_distinct_points():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    root = fit_regression_tree(X, y, min_node_size=1)
    assert np.array_equal(predict_tree(root, X), y)


def test_tree_constant_target_is_single_leaf():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 2))
    root = fit_regression_tree(X, np.full(20, 3.5), min_node_size=1)
    assert root.is_leaf
    assert root.value == 3.5


def test_tree_max_depth_zero_is_mean_leaf():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(15, 2)), rng.normal(size=15)
    root = fit_regression_tree(X, y, min_node_size=1, max_depth=0)
    assert root.is_leaf
    assert root.value == pytest.approx(y.mean(), abs=0)


def _walk_leaves(node, X, idx, out):
    if node.is_leaf:
        out.append((idx, node.value))
        return
    go_left = X[idx, node.feature] <= node.threshold
    _walk_leaves(node.left, X, idx[go_left], out)
    _walk_leaves(node.right, X, idx[~go_left], out)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tree_partition_property(seed):
    # every training row lands in exactly one leaf; each leaf predicts the
    # mean of its members and holds at least min_node_size of them
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 60))
    min_node = int(rng.integers(1, 5))
    X = rng.normal(size=(n, int(rng.integers(1, 4))))
    y = rng.normal(size=n)
    root = fit_regression_tree(X, y, min_node_size=min_node)

    leaves = []
    _walk_leaves(root, X, np.arange(n), leaves)
    seen = np.concatenate([idx for idx, _ in leaves])
    assert sorted(seen.tolist()) == list(range(n))
    preds = predict_tree(root, X)
    for idx, value in leaves:
        assert idx.shape[0] >= min(min_node, n)
        assert value == pytest.approx(float(y[idx].mean()), rel=1e-12)
        assert np.all(preds[idx] == value)


def test_tree_deterministic():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    a = fit_regression_tree(X, y, min_node_size=2)
    b = fit_regression_tree(X, y, min_node_size=2)
    ea = EnsembleModel([a], "single", 3)
    eb = EnsembleModel([b], "single", 3)
    assert ea.to_dict() == eb.to_dict()


def test_ensemble_round_trip():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    for model in (EnsembleModel([fit_regression_tree(X, y, 2)], "single", 3),
                  fit_random_forest(X, y, n_trees=5, seed=1),
                  fit_gbt(X, y, n_trees=8, learning_rate=0.3)):
        back = EnsembleModel.from_dict(model.to_dict())
        assert predict_ensemble(back, X).tobytes() == \
            predict_ensemble(model, X).tobytes()


def test_predict_dimension_check():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(10, 2)), rng.normal(size=10)
    model = EnsembleModel([fit_regression_tree(X, y, 2)], "single", 2)
    with pytest.raises(ValueError, match="feature columns"):
        predict_ensemble(model, np.ones((3, 5)))


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

def test_forest_deterministic_per_seed():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(40, 4)), rng.normal(size=40)
    a = fit_random_forest(X, y, n_trees=6, seed=9)
    b = fit_random_forest(X, y, n_trees=6, seed=9)
    c = fit_random_forest(X, y, n_trees=6, seed=10)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_forest_without_bagging_equals_cart():
    # bootstrap off and all features considered: every tree is plain CART
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    forest = fit_random_forest(X, y, n_trees=3, min_node_size=2,
                               feature_fraction=1.0, bootstrap=False, seed=0)
    cart = fit_regression_tree(X, y, min_node_size=2)
    single = EnsembleModel([cart], "single", 2)
    for t in forest.trees:
        assert EnsembleModel([t], "single", 2).to_dict() == single.to_dict()


def test_forest_prediction_is_mean_of_trees():
    rng = np.random.default_rng(8)
    X, y = rng.normal(size=(35, 3)), rng.normal(size=35)
    forest = fit_random_forest(X, y, n_trees=7, seed=2)
    Q = rng.normal(size=(10, 3))
    stacked = np.vstack([predict_tree(t, Q) for t in forest.trees])
    assert np.allclose(predict_ensemble(forest, Q), stacked.mean(axis=0),
                       atol=1e-12)


def test_forest_prediction_within_target_range():
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    forest = fit_random_forest(X, y, n_trees=10, seed=3)
    preds = predict_ensemble(forest, rng.normal(size=(25, 3)))
    assert np.all(preds >= y.min() - 1e-12)
    assert np.all(preds <= y.max() + 1e-12)


def test_forest_rejects_zero_trees():
    with pytest.raises(ValueError, match="n_trees"):
        fit_random_forest(np.ones((4, 1)), np.ones(4), n_trees=0)


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------

def test_gbt_staged_recompute():
    rng = np.random.default_rng(10)
    X, y = rng.normal(size=(45, 3)), rng.normal(size=45)
    model = fit_gbt(X, y, n_trees=12, learning_rate=0.2, leaf_l2=0.5)
    Q = rng.normal(size=(8, 3))
    acc = np.full(8, model.base_score)
    for t in model.trees:
        acc += model.learning_rate * predict_tree(t, Q)
    assert np.array_equal(predict_ensemble(model, Q), acc)
    assert model.base_score == pytest.approx(y.mean(), abs=0)


def test_gbt_leaf_shrinkage_formula():
    # one depth-0 tree: leaf value = sum(residuals) / (n + leaf_l2)
    y = np.array([1.0, 2.0, 6.0])
    X = np.arange(3.0).reshape(-1, 1)
    model = fit_gbt(X, y, n_trees=1, learning_rate=1.0, max_depth=0, leaf_l2=2.0)
    r = y - y.mean()
    assert model.trees[0].value == pytest.approx(r.sum() / (3 + 2.0), abs=1e-15)


def test_gbt_train_error_non_increasing():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(60, 3))
    y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=60)
    model = fit_gbt(X, y, n_trees=25, learning_rate=0.3, max_depth=2,
                    min_node_size=3, leaf_l2=1.0)
    pred = np.full(60, model.base_score)
    errs = [float(np.sum((y - pred) ** 2))]
    for t in model.trees:
        pred += model.learning_rate * predict_tree(t, X)
        errs.append(float(np.sum((y - pred) ** 2)))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_gbt_fits_training_data_closely():
    rng = np.random.default_rng(12)
    X = rng.uniform(-2, 2, size=(80, 2))
    y = X[:, 0] ** 2 + X[:, 1]
    model = fit_gbt(X, y, n_trees=200, learning_rate=0.3, max_depth=3,
                    min_node_size=2)
    rmse = float(np.sqrt(np.mean((predict_ensemble(model, X) - y) ** 2)))
    assert rmse < 0.1


def test_gbt_parameter_validation():
    X, y = np.ones((4, 1)), np.ones(4)
    with pytest.raises(ValueError, match="learning_rate"):
        fit_gbt(X, y, learning_rate=0.0)
    with pytest.raises(ValueError, match="learning_rate"):
        fit_gbt(X, y, learning_rate=1.5)
    with pytest.raises(ValueError, match="leaf_l2"):
        fit_gbt(X, y, leaf_l2=-1.0)
