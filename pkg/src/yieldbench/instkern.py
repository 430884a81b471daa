"""Instance-based and margin-based regressors: KNN and linear epsilon-SVR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linmod import LinearModel


def euclidean_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sqrt(np.sum((q - p) ** 2)))


@dataclass
class KnnModel:
    """Stores the training data; prediction is a brute-force distance scan."""

    X: np.ndarray
    y: np.ndarray
    k: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.k < 1 or self.k > self.X.shape[0]:
            raise ValueError(f"k={self.k} out of range for n={self.X.shape[0]}")

    def to_dict(self) -> dict:
        return {"schema": 1, "kind": "knn", "k": self.k,
                "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        return cls(np.array(d["X"]), np.array(d["y"]), d["k"])


def fit_knn(X: np.ndarray, y: np.ndarray, k: int) -> KnnModel:
    return KnnModel(np.array(X, dtype=np.float64, copy=True),
                    np.array(y, dtype=np.float64, copy=True), k)


def predict_knn(model: KnnModel, X: np.ndarray) -> np.ndarray | float:
    """Unweighted mean target of the k nearest training rows.

    Distance ties are broken by lower training-row index (stable sort).
    A single 1-D query returns a scalar; a 2-D batch returns a vector.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.X.shape[1]:
        raise ValueError("query dimension does not match training data")
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        d2 = np.sum((model.X - x) ** 2, axis=1)
        nearest = np.argsort(d2, kind="stable")[: model.k]
        out[i] = model.y[nearest].mean()
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Linear epsilon-insensitive SVR (primal subgradient descent)
# ---------------------------------------------------------------------------

@dataclass
class SvrParams:
    C: float = 1.0
    epsilon: float = 0.1
    step: float = 0.5
    iterations: int = 2000

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


def svr_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  C: float, epsilon: float) -> float:
    r = y - X @ w - b
    return float(0.5 * w @ w + C * np.sum(np.maximum(0.0, np.abs(r) - epsilon)))


def fit_svr(X: np.ndarray, y: np.ndarray, params: SvrParams) -> tuple[LinearModel, np.ndarray]:
    """Minimize 0.5*||w||^2 + C * sum(max(0, |y - Xw - b| - eps)).

    Deterministic full-batch subgradient descent from w=0, b=mean(y) with
    step schedule step/sqrt(t+1); the base step is scaled by 1/n so the
    default transfers across dataset sizes. The subgradient at the tube
    boundary is taken as 0 and the intercept is unregularized. Since the
    subgradient method is not a descent method, the returned model is the
    Polyak-averaged iterate with the lowest objective seen; the second
    return value is the monitored history, i.e. the best averaged-iterate
    objective up to each step, non-increasing by construction.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    w = np.zeros(d)
    b = float(y.mean())

    w_avg, b_avg = w.copy(), b
    best_obj = svr_objective(w_avg, b_avg, X, y, params.C, params.epsilon)
    best_w, best_b = w_avg.copy(), b_avg
    history = [best_obj]

    for t in range(1, params.iterations + 1):
        r = y - X @ w - b
        outside = np.abs(r) > params.epsilon
        sign = np.sign(r) * outside
        g_w = w - params.C * (X.T @ sign)
        g_b = -params.C * float(sign.sum())
        eta = params.step / (n * np.sqrt(t))
        w = w - eta * g_w
        b = b - eta * g_b

        w_avg += (w - w_avg) / (t + 1)
        b_avg += (b - b_avg) / (t + 1)
        obj = svr_objective(w_avg, b_avg, X, y, params.C, params.epsilon)
        if obj < best_obj:
            best_obj, best_w, best_b = obj, w_avg.copy(), b_avg
        history.append(best_obj)

    # lam mirrors the fixed 0.5*||w||^2 term relative to the loss weight C
    model = LinearModel(best_w, float(best_b), 1.0 / params.C, "svr",
                        n_iter=params.iterations, objective=best_obj)
    return model, np.array(history)
