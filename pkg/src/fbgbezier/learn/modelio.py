"""Versioned JSON model files.

Arrays are stored as base64 of zlib-compressed little-endian bytes, so every
float round-trips exactly.  Forest trees are kept in pre-order: only the
split feature (``-1`` for leaves) and one float per node (the threshold of
a split node, the mean of a leaf) are written; child links are rebuilt on
load.
"""
from __future__ import annotations

import base64
import json
import zlib
from pathlib import Path

import numba
import numpy as np

from ..errors import DataError
from .dataset import Normalizer
from .forest import Forest, ForestModel
from .net import NetModel

VERSION = 1


def encode_array(a: np.ndarray, dtype: str) -> dict:
    a = np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<"))
    raw = zlib.compress(a.tobytes(), 6)
    return {"dtype": dtype, "shape": list(a.shape), "b64": base64.b64encode(raw).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    try:
        raw = zlib.decompress(base64.b64decode(d["b64"]))
        dt = np.dtype(d["dtype"]).newbyteorder("<")
        return np.frombuffer(raw, dtype=dt).astype(d["dtype"]).reshape(d["shape"])
    except (KeyError, ValueError, TypeError, zlib.error) as exc:
        raise DataError(f"corrupt array in model file: {exc}") from exc


@numba.njit(cache=True)
def _links_from_preorder(feature, offsets):
    n = feature.shape[0]
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    stack = np.empty(n + 1, np.int64)
    for t in range(offsets.shape[0] - 1):
        a, b = offsets[t], offsets[t + 1]
        # stack of split nodes whose right child is not yet placed
        top = 0
        for i in range(a, b):
            local = i - a
            if i > a:
                parent = stack[top - 1]
                if left[a + parent] == -1:
                    left[a + parent] = local
                else:
                    right[a + parent] = local
                    top -= 1
            if feature[i] >= 0:
                stack[top] = local
                top += 1
    return left, right


def _forest_to_dict(f: Forest) -> dict:
    leaf = f.feature < 0
    param = np.where(leaf, f.value, f.threshold)
    return {"offsets": encode_array(f.offsets, "int64"),
            "feature": encode_array(f.feature, "int8"),
            "param": encode_array(param, "float64")}


def _forest_from_dict(d: dict) -> Forest:
    offsets = decode_array(d["offsets"]).astype(np.int64)
    feature = decode_array(d["feature"]).astype(np.int64)
    param = decode_array(d["param"])
    leaf = feature < 0
    left, right = _links_from_preorder(feature, offsets)
    return Forest(feature=feature, threshold=np.where(leaf, 0.0, param), left=left, right=right,
                  value=np.where(leaf, param, 0.0), count=np.zeros(len(feature), np.int64),
                  offsets=offsets)


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "kind": "forest",
        "version": VERSION,
        "config": model.config,
        "n_features": model.n_features,
        "n_train": model.n_train,
        "impurity_importance": encode_array(model.impurity_importance, "float64"),
        "forests": [_forest_to_dict(f) for f in model.forests],
    }


def net_to_dict(model: NetModel) -> dict:
    d = {
        "kind": "net",
        "version": VERSION,
        "config": model.config,
        "layer_sizes": list(model.layer_sizes),
        "activation": "tanh",
        "params": encode_array(model.get_params(), "float64"),
    }
    if model.normalizer is not None:
        n = model.normalizer
        d["normalizer"] = {"mean": encode_array(n.mean, "float64"),
                           "std": encode_array(n.std, "float64"),
                           "target_scale": n.target_scale}
    return d


def model_from_dict(d: dict):
    if not isinstance(d, dict) or d.get("version") != VERSION:
        raise DataError(f"unsupported model file version {d.get('version') if isinstance(d, dict) else d!r}")
    kind = d.get("kind")
    try:
        if kind == "forest":
            cfg = d["config"]
            return ForestModel(
                forests=[_forest_from_dict(f) for f in d["forests"]],
                n_features=int(d["n_features"]), n_trees=int(cfg["trees"]),
                min_leaf=int(cfg["min_leaf"]), mtry=int(cfg["mtry"]), seed=int(cfg["seed"]),
                bootstrap=bool(cfg["bootstrap"]), n_train=int(d["n_train"]),
                impurity_importance=decode_array(d["impurity_importance"]), config=cfg)
        if kind == "net":
            sizes = tuple(d["layer_sizes"])
            ws = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
            bs = [np.zeros(o) for o in sizes[1:]]
            net = NetModel(sizes, ws, bs, config=d["config"])
            net.set_params(decode_array(d["params"]))
            if "normalizer" in d:
                n = d["normalizer"]
                net.normalizer = Normalizer(decode_array(n["mean"]), decode_array(n["std"]),
                                            float(n["target_scale"]))
            return net
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed {kind} model: {exc}") from exc
    raise DataError(f"unknown model kind {kind!r}")


def save_model(path, model) -> None:
    if isinstance(model, ForestModel):
        d = forest_to_dict(model)
    elif isinstance(model, NetModel):
        d = net_to_dict(model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text(json.dumps(d, sort_keys=True, indent=1), encoding="utf-8")


def load_model(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return model_from_dict(d)
