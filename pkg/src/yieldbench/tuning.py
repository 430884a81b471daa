"""K-fold cross-validation and grid / randomized hyperparameter search.

A search talks to models through one callable:

    fit_predict(config, X_train, y_train, X_eval, seed) -> predictions

Trial i derives its own seeds from (master seed, i), so trials can run
in any order or in parallel without changing results. Grid mode
enumerates the full Cartesian product; random mode draws `budget`
configurations.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np


class LeakageError(RuntimeError):
    """A cross-validation row belongs to a forbidden (test) year."""


@dataclass(frozen=True)
class Domain:
    """Hyperparameter domain: a value grid or a bounded distribution."""

    kind: str  # grid | uniform | log_uniform | int_uniform
    values: tuple = ()
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "grid":
            if len(self.values) == 0:
                raise ValueError("grid domain needs at least one value")
            return
        if self.kind not in ("uniform", "log_uniform", "int_uniform"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError("bounds must be finite")
        if self.low > self.high:
            raise ValueError("low must be <= high")
        if self.kind == "log_uniform" and self.low <= 0:
            raise ValueError("log_uniform bounds must be positive")

    def sample(self, rng: np.random.Generator):
        if self.kind == "grid":
            return self.values[int(rng.integers(len(self.values)))]
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "log_uniform":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return int(rng.integers(int(self.low), int(self.high) + 1))


def grid(*values) -> Domain:
    return Domain("grid", values=tuple(values))


def uniform(low: float, high: float) -> Domain:
    return Domain("uniform", low=low, high=high)


def log_uniform(low: float, high: float) -> Domain:
    return Domain("log_uniform", low=low, high=high)


def int_uniform(low: int, high: int) -> Domain:
    return Domain("int_uniform", low=low, high=high)


@dataclass
class TrialRecord:
    index: int
    config: dict
    fold_rmse: list[float]
    mean_rmse: float
    seed: int
    wall_time: float

    def to_dict(self) -> dict:
        return {"index": self.index, "config": self.config,
                "fold_rmse": self.fold_rmse, "mean_rmse": self.mean_rmse,
                "seed": self.seed, "wall_time": self.wall_time}


@dataclass
class SearchResult:
    best: TrialRecord
    trials: list[TrialRecord]


def make_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id per row; seeded permutation dealt round-robin so sizes
    differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"need n >= k, got n={n} k={k}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def assert_no_leakage(row_years: np.ndarray, forbidden_years) -> None:
    bad = sorted(set(np.asarray(row_years).tolist()) & set(int(t) for t in forbidden_years))
    if bad:
        raise LeakageError(f"rows from held-out years {bad} present in tuning data")


def _grid_configs(space: dict[str, Domain]) -> list[dict]:
    names = sorted(space)
    value_lists = [space[name].values for name in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*value_lists)]


def _random_config(space: dict[str, Domain], rng: np.random.Generator) -> dict:
    return {name: space[name].sample(rng) for name in sorted(space)}


def cv_rmse(fit_predict: Callable, config: dict, X: np.ndarray, y: np.ndarray,
            folds: np.ndarray, seed: int) -> list[float]:
    out = []
    for fold in range(int(folds.max()) + 1):
        held = folds == fold
        pred = fit_predict(config, X[~held], y[~held], X[held], seed)
        out.append(float(np.sqrt(np.mean((np.asarray(pred) - y[held]) ** 2))))
    return out


def search(fit_predict: Callable, space: dict[str, Domain], X: np.ndarray,
           y: np.ndarray, folds: np.ndarray, seed: int = 0, budget: int = 50,
           row_years: np.ndarray | None = None,
           forbidden_years=None) -> SearchResult:
    """Lowest mean CV RMSE wins; ties break to the earlier trial index."""
    if not space:
        raise ValueError("empty search space")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if folds.shape[0] != y.shape[0]:
        raise ValueError("fold assignment length mismatch")
    if row_years is not None and forbidden_years is not None:
        assert_no_leakage(row_years, forbidden_years)

    all_grid = all(d.kind == "grid" for d in space.values())
    if all_grid:
        configs = _grid_configs(space)
    else:
        configs = [_random_config(space, np.random.default_rng([seed, i, 0]))
                   for i in range(budget)]

    trials: list[TrialRecord] = []
    for i, config in enumerate(configs):
        model_seed = int(np.random.default_rng([seed, i, 1]).integers(2 ** 31 - 1))
        t0 = time.perf_counter()
        fold_rmse = cv_rmse(fit_predict, config, X, y, folds, model_seed)
        wall = time.perf_counter() - t0
        trials.append(TrialRecord(i, config, fold_rmse,
                                  float(np.mean(fold_rmse)), model_seed, wall))
    best = min(trials, key=lambda t: (t.mean_rmse, t.index))
    return SearchResult(best, trials)


def write_trial_log(trials: list[TrialRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")


def read_trial_log(path) -> list[TrialRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(TrialRecord(d["index"], d["config"], d["fold_rmse"],
                                       d["mean_rmse"], d["seed"], d["wall_time"]))
    return out
