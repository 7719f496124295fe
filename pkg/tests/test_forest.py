import numpy as np
import pytest

from fbgbezier.errors import DataError, DimensionError
from fbgbezier.learn.forest import TIE_RTOL, train_forest, tree_draws


def oracle_tree(X, y, rows, keys, min_leaf, mtry):
    """Exhaustive CART written independently: direct SSE per candidate split.

    Nodes are numbered in pre-order (left subtree first) and node ``k``
    examines the ``mtry`` features with the smallest keys in ``keys[k]``.
    Returns a nested-tuple tree.
    """
    counter = [0]

    def sse(v):
        return float(np.sum((v - v.mean()) ** 2)) if len(v) else 0.0

    def grow(rows):
        node = counter[0]
        counter[0] += 1
        yv = y[rows]
        if len(rows) < 2 * min_leaf or np.all(yv == yv[0]):
            return ("leaf", yv.mean())
        parent = sse(yv)
        tol = TIE_RTOL * parent
        best = (tol, None, None)
        feats = sorted(np.argsort(keys[node])[:mtry])
        for f in feats:
            vals = np.unique(X[rows, f])
            for a, b in zip(vals[:-1], vals[1:]):
                thr = 0.5 * (a + b)
                go_left = X[rows, f] <= thr
                nl = int(go_left.sum())
                if nl < min_leaf or len(rows) - nl < min_leaf:
                    continue
                g = parent - sse(yv[go_left]) - sse(yv[~go_left])
                if g > best[0] + tol:
                    best = (g, f, thr)
        if best[1] is None:
            return ("leaf", yv.mean())
        _, f, thr = best
        mask = X[rows, f] <= thr
        return ("split", f, thr, grow(rows[mask]), grow(rows[~mask]))

    return grow(np.asarray(rows))


def oracle_predict(tree, x):
    while tree[0] == "split":
        tree = tree[3] if x[tree[1]] <= tree[2] else tree[4]
    return tree[1]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("min_leaf,mtry", [(1, 5), (2, 2), (3, 3)])
def test_matches_exhaustive_oracle(seed, min_leaf, mtry):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(20, 5))
    Y = np.column_stack([np.sin(X[:, 0]) + X[:, 1] ** 2, X[:, 2] * X[:, 3]])
    model = train_forest(X, Y, n_trees=7, min_leaf=min_leaf, mtry=mtry, seed=seed)
    Xt = rng.normal(size=(50, 5))
    pred = model.predict(Xt)
    for o in range(2):
        trees = []
        for t in range(7):
            sample, keys = tree_draws(seed, o, t, 20, 5, min_leaf)
            trees.append(oracle_tree(X, Y[:, o], sample, keys, min_leaf, mtry))
        ref = np.array([np.mean([oracle_predict(tr, x) for tr in trees]) for x in Xt])
        np.testing.assert_allclose(pred[:, o], ref, atol=1e-12, rtol=0)


def test_single_tree_memorizes():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 5))
    y = rng.normal(size=40)
    m = train_forest(X, y, n_trees=1, min_leaf=1, mtry=5, bootstrap=False)
    np.testing.assert_allclose(m.predict(X)[:, 0], y, atol=1e-12)


def test_constant_target_gives_single_leaf():
    X = np.random.default_rng(1).normal(size=(30, 5))
    m = train_forest(X, np.full(30, 3.5), n_trees=3)
    assert all(m.forests[0].tree(t).n_nodes == 1 for t in range(3))
    np.testing.assert_array_equal(m.predict(X[:4]), 3.5)


def test_min_leaf_respected():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 5))
    m = train_forest(X, X[:, 0] + rng.normal(size=200), n_trees=5, min_leaf=7)
    for t in range(5):
        tree = m.forests[0].tree(t)
        assert tree.count[tree.is_leaf()].min() >= 7


def test_deterministic_and_thread_invariant():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 5))
    Y = rng.normal(size=(120, 3))
    a = train_forest(X, Y, n_trees=10, seed=9)
    b = train_forest(X, Y, n_trees=10, seed=9, n_jobs=3)
    c = train_forest(X, Y, n_trees=10, seed=10)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert not np.array_equal(a.predict(X), c.predict(X))


def test_oob_mask_complements_bootstrap():
    X = np.random.default_rng(4).normal(size=(60, 5))
    m = train_forest(X, X[:, 1], n_trees=2)
    mask = m.oob_mask(0, 1)
    assert not mask[m.bootstrap_sample(0, 1)].any()
    assert mask.sum() == 60 - len(np.unique(m.bootstrap_sample(0, 1)))


def test_impurity_importance_finds_informative_feature():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 5))
    m = train_forest(X, 3 * X[:, 2], n_trees=30, mtry=2)
    imp = m.impurity_importance[0]
    assert imp.sum() == pytest.approx(100.0)
    assert np.argmax(imp) == 2


def test_input_validation():
    X = np.zeros((20, 5))
    with pytest.raises(DataError):
        train_forest(X[:5], np.zeros(5), min_leaf=5)
    with pytest.raises(DataError):
        train_forest(X, np.zeros(20), mtry=6)
    with pytest.raises(DimensionError):
        train_forest(X, np.zeros(19))
    m = train_forest(np.random.rand(20, 5), np.random.rand(20), n_trees=2)
    with pytest.raises(DimensionError):
        m.predict(np.zeros((2, 4)))
