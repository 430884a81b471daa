"""Uniform fit/predict/serialize wrappers over the nine model families.

Every artifact owns its feature scaler (fitted on training rows only)
and, for the neural families, the target standardization constants, so
a loaded artifact reproduces predictions on raw-unit inputs exactly.

The CNN wrapper scatters whatever weather features the table carries
onto a fixed (variable, week) grid; grid cells with no corresponding
feature stay at 0, the scaled-space mean. That keeps the architecture
unchanged when a model is retrained on a selected feature subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataio import (FeatureDescriptor, FeatureTable, ScalerParams,
                     WEATHER_VARS)
from .instkern import KnnModel, SvrParams, fit_knn, fit_svr, predict_knn
from .linmod import LinearModel, fit_lasso, fit_ridge, predict_linear
from .neural import (CnnArchitecture, CnnNetwork, DenseNetwork, TrainConfig,
                     TrainResult, network_from_dict, network_to_dict,
                     train_network)
from .trees import (EnsembleModel, fit_gbt, fit_random_forest,
                    fit_regression_tree, predict_ensemble)

MODEL_FAMILIES = ("ridge", "lasso", "knn", "svr", "tree", "forest", "gbt",
                  "dnn", "cnn")

DEFAULT_CONFIGS: dict[str, dict] = {
    "ridge": {"lam": 1.0},
    "lasso": {"lam": 0.01, "tol": 1e-8, "max_iter": 10_000},
    "knn": {"k": 5},
    "svr": {"C": 1.0, "epsilon": 0.1, "step": 0.5, "iterations": 2000},
    "tree": {"min_node_size": 5, "max_depth": None},
    "forest": {"n_trees": 100, "min_node_size": 5, "max_depth": None,
               "feature_fraction": 1.0 / 3.0},
    "gbt": {"n_trees": 150, "learning_rate": 0.08, "max_depth": 3,
            "min_node_size": 5, "leaf_l2": 1.0},
    "dnn": {"hidden": (64, 32, 16), "lr": 1e-3, "batch_size": 32,
            "max_epochs": 200, "patience": 20, "validation_fraction": 0.1},
    "cnn": {"arch": None, "weeks": None, "lr": 1e-3, "batch_size": 32,
            "max_epochs": 200, "patience": 20, "validation_fraction": 0.1},
}


@dataclass
class ModelArtifact:
    family: str
    config: dict
    descriptors: tuple[FeatureDescriptor, ...]
    scaler: ScalerParams
    payload: object
    y_mean: float = 0.0
    y_std: float = 1.0
    seed: int = 0
    history: TrainResult | None = None

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.descriptors]


def resolve_config(family: str, config: dict | None) -> dict:
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}; "
                         f"expected one of {MODEL_FAMILIES}")
    out = dict(DEFAULT_CONFIGS[family])
    for key, val in (config or {}).items():
        if key not in out:
            raise ValueError(f"unknown {family} option {key!r}")
        out[key] = val
    return out


def _scale(X: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    safe = np.where(scaler.constant_columns, 1.0, scaler.std)
    Xs = (X - scaler.mean) / safe
    Xs[:, scaler.constant_columns] = 0.0
    return Xs


def _fit_scaler_arrays(X: np.ndarray) -> ScalerParams:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return ScalerParams(mean, std, std == 0.0)


# ---------------------------------------------------------------------------
# CNN input layout
# ---------------------------------------------------------------------------

def _infer_weeks(descriptors: Sequence[FeatureDescriptor]) -> int:
    weeks = [f.week_index for f in descriptors if f.group == "weather"]
    if not weeks:
        raise ValueError("cnn requires at least one weather feature")
    return max(weeks)


def _cnn_layout(descriptors: Sequence[FeatureDescriptor],
                weeks: int) -> tuple[list[tuple[int, int, int]], list[int]]:
    weather, static = [], []
    for col, f in enumerate(descriptors):
        if f.group == "weather":
            if f.week_index > weeks:
                raise ValueError(f"{f.name}: week {f.week_index} exceeds weeks={weeks}")
            weather.append((WEATHER_VARS.index(f.weather_var), f.week_index - 1, col))
        else:
            static.append(col)
    return weather, static


def _cnn_inputs(Xs: np.ndarray, weather: list[tuple[int, int, int]],
                static: list[int], weeks: int) -> tuple[np.ndarray, np.ndarray]:
    n = Xs.shape[0]
    xw = np.zeros((n, len(WEATHER_VARS), weeks))
    for var_i, week0, col in weather:
        xw[:, var_i, week0] = Xs[:, col]
    xs = Xs[:, static]
    return xw, xs


def _build_cnn(config: dict, descriptors: Sequence[FeatureDescriptor],
               seed: int) -> CnnNetwork:
    weeks = config["weeks"] or _infer_weeks(descriptors)
    arch = config["arch"]
    if arch is None:
        arch = CnnArchitecture()
    elif isinstance(arch, dict):
        arch = CnnArchitecture.from_dict(arch)
    _, static_cols = _cnn_layout(descriptors, weeks)
    if not static_cols:
        arch = CnnArchitecture(arch.weather_branch, (), arch.head)
    return CnnNetwork(arch, weeks, len(static_cols), len(WEATHER_VARS), seed)


def _train_config(config: dict, seed: int) -> TrainConfig:
    return TrainConfig(lr=config["lr"], batch_size=config["batch_size"],
                       max_epochs=config["max_epochs"], patience=config["patience"],
                       validation_fraction=config["validation_fraction"], seed=seed)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def fit_arrays(family: str, X: np.ndarray, y: np.ndarray,
               descriptors: Sequence[FeatureDescriptor], config: dict | None = None,
               seed: int = 0) -> ModelArtifact:
    """Array-level core shared by table fitting and fold-wise tuning."""
    cfg = resolve_config(family, config)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scaler = _fit_scaler_arrays(X)
    Xs = _scale(X, scaler)
    art = ModelArtifact(family, cfg, tuple(descriptors), scaler, None, seed=seed)

    if family == "ridge":
        art.payload = fit_ridge(Xs, y, cfg["lam"])
    elif family == "lasso":
        art.payload = fit_lasso(Xs, y, cfg["lam"], tol=cfg["tol"],
                                max_iter=cfg["max_iter"])
    elif family == "knn":
        art.payload = fit_knn(Xs, y, cfg["k"])
    elif family == "svr":
        model, _ = fit_svr(Xs, y, SvrParams(C=cfg["C"], epsilon=cfg["epsilon"],
                                            step=cfg["step"],
                                            iterations=cfg["iterations"]))
        art.payload = model
    elif family == "tree":
        root = fit_regression_tree(Xs, y, cfg["min_node_size"], cfg["max_depth"])
        art.payload = EnsembleModel([root], "single", Xs.shape[1])
    elif family == "forest":
        art.payload = fit_random_forest(
            Xs, y, n_trees=cfg["n_trees"], min_node_size=cfg["min_node_size"],
            max_depth=cfg["max_depth"], feature_fraction=cfg["feature_fraction"],
            seed=seed)
    elif family == "gbt":
        art.payload = fit_gbt(Xs, y, n_trees=cfg["n_trees"],
                              learning_rate=cfg["learning_rate"],
                              max_depth=cfg["max_depth"],
                              min_node_size=cfg["min_node_size"],
                              leaf_l2=cfg["leaf_l2"])
    elif family in ("dnn", "cnn"):
        art.y_mean = float(y.mean())
        art.y_std = float(y.std()) or 1.0
        ys = (y - art.y_mean) / art.y_std
        if family == "dnn":
            net: DenseNetwork | CnnNetwork = DenseNetwork(
                Xs.shape[1], tuple(cfg["hidden"]), seed)
            inputs: tuple[np.ndarray, ...] = (Xs,)
        else:
            net = _build_cnn(cfg, descriptors, seed)
            weather, static = _cnn_layout(descriptors, net.weeks)
            inputs = _cnn_inputs(Xs, weather, static, net.weeks)
        art.history = train_network(net, inputs, ys, _train_config(cfg, seed))
        art.payload = net
    return art


def fit_model(family: str, table: FeatureTable, config: dict | None = None,
              seed: int = 0) -> ModelArtifact:
    return fit_arrays(family, table.X, table.y, table.descriptors, config, seed)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_matrix(artifact: ModelArtifact, X: np.ndarray) -> np.ndarray:
    """Predict from a raw-unit matrix laid out like the training table."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(artifact.descriptors):
        raise ValueError(f"expected (n, {len(artifact.descriptors)}), got {X.shape}")
    Xs = _scale(X, artifact.scaler)
    family = artifact.family
    if family in ("ridge", "lasso", "svr"):
        return predict_linear(artifact.payload, Xs)
    if family == "knn":
        return predict_knn(artifact.payload, Xs)
    if family in ("tree", "forest", "gbt"):
        return predict_ensemble(artifact.payload, Xs)
    net = artifact.payload
    if family == "dnn":
        raw = net.forward(Xs)
    else:
        weather, static = _cnn_layout(artifact.descriptors, net.weeks)
        xw, xs = _cnn_inputs(Xs, weather, static, net.weeks)
        raw = net.forward(xw, xs)
    return raw * artifact.y_std + artifact.y_mean


def predict_model(artifact: ModelArtifact, table: FeatureTable) -> np.ndarray:
    if table.feature_names != artifact.feature_names:
        raise ValueError("table feature columns do not match the fitted model")
    return predict_matrix(artifact, table.X)


def model_fn(artifact: ModelArtifact) -> Callable[[np.ndarray], np.ndarray]:
    """Plain matrix->predictions callable (the attribution interface)."""
    return lambda X: predict_matrix(artifact, X)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _descriptor_to_dict(f: FeatureDescriptor) -> dict:
    return {"name": f.name, "group": f.group, "weather_var": f.weather_var,
            "week_index": f.week_index}


def model_to_dict(artifact: ModelArtifact) -> dict:
    family = artifact.family
    if family in ("ridge", "lasso", "svr", "knn"):
        payload = artifact.payload.to_dict()
    elif family in ("tree", "forest", "gbt"):
        payload = artifact.payload.to_dict()
    else:
        payload = network_to_dict(artifact.payload)
    cfg = dict(artifact.config)
    if family == "cnn" and isinstance(cfg.get("arch"), CnnArchitecture):
        cfg["arch"] = cfg["arch"].to_dict()
    if family == "dnn":
        cfg["hidden"] = list(cfg["hidden"])
    return {"schema": 1, "family": family, "config": cfg,
            "descriptors": [_descriptor_to_dict(f) for f in artifact.descriptors],
            "scaler": artifact.scaler.to_dict(), "payload": payload,
            "y_mean": artifact.y_mean, "y_std": artifact.y_std,
            "seed": artifact.seed,
            "history": artifact.history.to_dict() if artifact.history else None}


def model_from_dict(d: dict) -> ModelArtifact:
    family = d["family"]
    if family in ("ridge", "lasso", "svr"):
        payload: object = LinearModel.from_dict(d["payload"])
    elif family == "knn":
        payload = KnnModel.from_dict(d["payload"])
    elif family in ("tree", "forest", "gbt"):
        payload = EnsembleModel.from_dict(d["payload"])
    else:
        payload = network_from_dict(d["payload"])
    descriptors = tuple(FeatureDescriptor(**f) for f in d["descriptors"])
    history = None
    if d.get("history"):
        h = d["history"]
        history = TrainResult(h["train_loss"], h["val_loss"], h["best_epoch"],
                              h["stopped_early"])
    return ModelArtifact(family, d["config"], descriptors,
                         ScalerParams.from_dict(d["scaler"]), payload,
                         d["y_mean"], d["y_std"], d["seed"], history)


# ---------------------------------------------------------------------------
# Tuning adapter
# ---------------------------------------------------------------------------

def make_fit_predict(family: str, descriptors: Sequence[FeatureDescriptor],
                     base_config: dict | None = None) -> Callable:
    """fit_predict(config, X_tr, y_tr, X_eval, seed) closure for tuning.search;
    each fold refits its own scaler on its own training rows."""
    base = dict(base_config or {})

    def fit_predict(config: dict, X_tr: np.ndarray, y_tr: np.ndarray,
                    X_eval: np.ndarray, seed: int) -> np.ndarray:
        art = fit_arrays(family, X_tr, y_tr, descriptors, {**base, **config}, seed)
        return predict_matrix(art, X_eval)

    return fit_predict
