"""Permutation feature importance and learning curves."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from .dataset import Dataset
from .forest import ForestModel, train_forest
from .net import train_net


def feature_importance(model: ForestModel, X_train, Y_train, seed: int = 0) -> np.ndarray:
    """Out-of-bag permutation importance, percent per output.

    For every tree, the out-of-bag rows of its bootstrap sample are scored
    before and after shuffling one feature column; the MSE increase is
    averaged over trees, floored at zero and normalized so each output's row
    sums to 100.  Outputs where no feature matters (e.g. constant targets)
    get a row of NaN.
    """
    if not model.bootstrap:
        raise DataError("forest was grown without bootstrap; no out-of-bag rows")
    X = np.asarray(X_train, dtype=float)
    Y = np.asarray(Y_train, dtype=float)
    if len(X) != model.n_train:
        raise DataError(f"importance needs the {model.n_train} training rows, got {len(X)}")
    if Y.ndim == 1:
        Y = Y[:, None]
    n_out, n_feat = model.n_outputs, model.n_features
    result = np.full((n_out, n_feat), np.nan)
    for o in range(n_out):
        forest = model.forests[o]
        total = np.zeros(n_feat)
        used = 0
        for t in range(forest.n_trees):
            mask = model.oob_mask(o, t)
            if not mask.any():
                continue
            tree = forest.tree(t)
            Xo = X[mask]
            yo = Y[mask, o]
            base = np.mean((tree.predict(Xo) - yo) ** 2)
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), o, t, 0x1AA]))
            for f in range(n_feat):
                Xp = Xo.copy()
                Xp[:, f] = Xp[rng.permutation(len(Xp)), f]
                total[f] += np.mean((tree.predict(Xp) - yo) ** 2) - base
            used += 1
        if used == 0:
            raise DataError("no out-of-bag rows in any tree")
        inc = np.maximum(total / used, 0.0)
        if inc.sum() > 0:
            result[o] = 100.0 * inc / inc.sum()
    return result


def _overall_rmse(pred, truth) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(truth)) ** 2)))


def learning_curve(data: Dataset, fractions, seed: int = 0, kind: str = "forest",
                   **train_cfg) -> list[dict]:
    """Test RMSE after training on nested fractions of the training split.

    Subsets are prefixes of one seeded permutation, restored to their
    original row order, so fraction 1.0 reproduces a plain training run.
    """
    train, test = data.train, data.test
    if len(test) == 0:
        raise DataError("learning curve needs a non-empty test split")
    fractions = [float(f) for f in fractions]
    if any(not 0 < f <= 1 for f in fractions):
        raise DataError("fractions must lie in (0, 1]")
    min_leaf = int(train_cfg.get("min_leaf", 5))
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1C])).permutation(len(train))
    rows = []
    for f in fractions:
        k = int(math.ceil(f * len(train)))
        if kind == "forest" and k < 2 * min_leaf:
            raise DataError(f"fraction {f} leaves {k} rows, fewer than 2 * min_leaf")
        sub = train.subset(np.sort(perm[:k]))
        if kind == "forest":
            model = train_forest(sub.features, sub.targets, seed=seed, **train_cfg)
        elif kind == "net":
            model, _ = train_net(sub, seed=seed, **train_cfg)
        else:
            raise DataError(f"unknown model kind {kind!r}")
        rows.append({"fraction": f, "n_train": k,
                     "test_rmse": _overall_rmse(model.predict(test.features), test.targets)})
    return rows
