"""Feature/target tables, seeded splits and normalization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from ..errors import DataError, DimensionError

FEATURE_COLUMNS = ["bx_mT", "by_mT", "bmag_mT", "freq_Hz", "dist_mm"]
TARGET_COLUMNS = [f"p{i}{ax}" for i in range(4) for ax in "xyz"]
ROBOT_LENGTH = 40.0


class Split(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        Y = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(X) == 0:
            X = X.reshape(0, 5)
            Y = Y.reshape(0, 12)
        if len(X) != len(Y):
            raise DimensionError("feature and target row counts differ")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("dataset contains NaN or infinite values")
        labels = self.labels
        if labels is None:
            labels = np.full(len(X), Split.TRAIN, dtype=np.int8)
        labels = np.asarray(labels, dtype=np.int8)
        if labels.shape != (len(X),):
            raise DimensionError("one split label per row required")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", Y)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.features)

    def part(self, which: Split) -> "Dataset":
        mask = self.labels == which
        return Dataset(self.features[mask], self.targets[mask], self.labels[mask])

    @property
    def train(self) -> "Dataset":
        return self.part(Split.TRAIN)

    @property
    def val(self) -> "Dataset":
        return self.part(Split.VAL)

    @property
    def test(self) -> "Dataset":
        return self.part(Split.TEST)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.targets[idx], self.labels[idx])


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    train, val, test = ratios
    n_train = int(math.floor(n * train + 0.5))
    n_val = int(math.floor(n * val + 0.5))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split(data: Dataset, ratios=(0.8, 0.0, 0.2), seed: int = 0) -> Dataset:
    """Seeded random assignment of rows to train/val/test in the given proportions."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0,
                                                                           abs_tol=1e-9):
        raise DataError(f"split ratios must be three non-negative numbers summing to 1: {ratios}")
    n = len(data)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train, n_val, _ = split_counts(n, ratios)
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B17])).permutation(n)
    labels = np.full(n, Split.TEST, dtype=np.int8)
    labels[perm[:n_train]] = Split.TRAIN
    labels[perm[n_train:n_train + n_val]] = Split.VAL
    return replace(data, labels=labels)


@dataclass(frozen=True)
class Normalizer:
    """z-scores features; targets are divided by the robot length.

    Constant features (zero std) pass through unchanged.
    """

    mean: np.ndarray
    std: np.ndarray
    target_scale: float = ROBOT_LENGTH

    @classmethod
    def fit(cls, features, target_scale: float = ROBOT_LENGTH) -> "Normalizer":
        X = np.asarray(features, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = ~(std > 0)
        mean = np.where(constant, 0.0, mean)
        std = np.where(constant, 1.0, std)
        return cls(mean, std, float(target_scale))

    @property
    def constant(self) -> np.ndarray:
        return (self.mean == 0.0) & (self.std == 1.0)

    def features(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def targets(self, Y):
        return np.asarray(Y, dtype=float) / self.target_scale

    def denormalize_targets(self, Yn):
        return np.asarray(Yn, dtype=float) * self.target_scale


def save_csv(path, data: Dataset) -> None:
    """Write the dataset with full round-trip float precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(FEATURE_COLUMNS + TARGET_COLUMNS) + "\n")
        for x, y in zip(data.features, data.targets):
            fh.write(",".join(repr(float(v)) for v in (*x, *y)) + "\n")


def load_csv(path) -> Dataset:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if header != FEATURE_COLUMNS + TARGET_COLUMNS:
        raise DataError(f"{path}: unexpected header {header}")
    try:
        arr = np.array(rows, dtype=float).reshape(-1, 17)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return Dataset(arr[:, :5], arr[:, 5:])


def load_matrix_csv(path, n_cols: int = 12) -> np.ndarray:
    """Plain numeric CSV with a header row (prediction / truth files)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            arr = np.array([row for row in reader if row], dtype=float)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    arr = arr.reshape(-1, arr.shape[-1] if arr.size else n_cols)
    if arr.shape[1] == 17:
        arr = arr[:, 5:]
    if arr.shape[1] != n_cols:
        raise DataError(f"{path}: expected {n_cols} columns, got {arr.shape[1]}")
    return arr


def save_matrix_csv(path, M, columns=TARGET_COLUMNS) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in np.asarray(M):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
