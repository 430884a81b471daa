"""Regularized linear regressors: ridge (direct solve) and lasso (coordinate descent).

Penalty conventions differ on purpose: ridge minimizes
``0.5*||y - Xw - b||^2 + 0.5*lam*||w||^2`` (so the normal equations are
``(X'X + lam*I) w = X'y`` on centered data), while lasso minimizes
``(1/2n)*||y - Xw - b||^2 + lam*||w||_1`` so that the all-zero threshold
is exactly ``lam_max = max_j |X_j'y| / n``. The intercept is never
penalized; it is handled by centering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    lam: float
    kind: str  # ridge | lasso | svr
    converged: bool = True
    n_iter: int = 0
    objective: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.intercept):
            raise ValueError("non-finite model coefficients")

    def to_dict(self) -> dict:
        return {"schema": 1, "kind": self.kind, "lambda": self.lam,
                "weights": self.weights.tolist(), "intercept": self.intercept,
                "converged": self.converged, "n_iter": self.n_iter,
                "objective": self.objective}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.array(d["weights"]), d["intercept"], d["lambda"], d["kind"],
                   d.get("converged", True), d.get("n_iter", 0), d.get("objective", 0.0))


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float,
              fit_intercept: bool = True) -> LinearModel:
    """Solve the penalized normal equations (X'X + lam*I) w = X'y directly."""
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
    else:
        Xc, yc = X, y
    d = X.shape[1]
    A = Xc.T @ Xc + lam * np.eye(d)
    try:
        w = np.linalg.solve(A, Xc.T @ yc)
    except np.linalg.LinAlgError:
        raise ValueError("singular system; use lam > 0 for rank-deficient data") from None
    if not np.all(np.isfinite(w)):
        raise ValueError("singular system; use lam > 0 for rank-deficient data")
    b = float(y_mean - w @ x_mean) if fit_intercept else 0.0
    return LinearModel(w, b, lam, "ridge")


def lasso_lambda_max(X: np.ndarray, y: np.ndarray,
                     fit_intercept: bool = True) -> float:
    """Smallest lam for which the lasso solution is exactly zero.

    Computed with the same per-column dot products the descent sweep
    uses, so fit_lasso(X, y, lasso_lambda_max(X, y)) zeroes every
    coefficient bit-exactly, not just up to rounding.
    """
    X, y = _check_xy(X, y)
    if fit_intercept:
        Xc, yc = X - X.mean(axis=0), y - y.mean()
    else:
        Xc, yc = X, y
    n, d = X.shape
    return max(abs(float(Xc[:, j] @ yc)) for j in range(d)) / n


def soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def fit_lasso(X: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-8,
              max_iter: int = 10_000, fit_intercept: bool = True) -> LinearModel:
    """Cyclic coordinate descent with soft-thresholding on centered data.

    Converged when the largest coefficient change in a sweep is below
    ``tol``; exhausting ``max_iter`` sets converged=False instead of
    raising.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n, d = X.shape
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
    else:
        x_mean, y_mean = np.zeros(d), 0.0
        Xc, yc = X, y

    col_sq = (Xc * Xc).sum(axis=0) / n
    w = np.zeros(d)
    r = yc.copy()  # residual yc - Xc @ w, maintained incrementally
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = (Xc[:, j] @ r) / n + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                r += Xc[:, j] * (old - new)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            converged = True
            break
    b = float(y_mean - w @ x_mean) if fit_intercept else 0.0
    return LinearModel(w, b, lam, "lasso", converged=converged, n_iter=sweeps)


def predict_linear(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[0]:
        raise ValueError(f"expected {model.weights.shape[0]} columns, got {X.shape}")
    return X @ model.weights + model.intercept


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) and y (n,)")
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    return X, y
