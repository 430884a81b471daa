"""Evaluation metrics, residual normality, hexbin data, correlation matrix.

The reported correlation comes in two flavors: ``paper_r``, defined as
sqrt(1 - SSE/SST) and clamped to 0 when SSE exceeds SST (the clamp is
flagged), and the ordinary Pearson correlation. They coincide only for
predictors that happen to satisfy the OLS normal equations, so both are
reported side by side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import FeatureTable, WEATHER_VARS


@dataclass
class MetricSet:
    mae: float
    rmse: float
    paper_r: float  # sqrt(max(0, 1 - SSE/SST)), in [0, 1]
    pearson_r: float
    r_squared: float  # 1 - SSE/SST, may be negative
    n: int
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "paper_r": self.paper_r,
                "pearson_r": self.pearson_r, "r_squared": self.r_squared,
                "n": self.n, "flags": list(self.flags)}


def evaluate(pred: np.ndarray, truth: np.ndarray) -> MetricSet:
    """MAE, RMSE, clamped sqrt(1 - SSE/SST), and Pearson r for one split."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be 1-D arrays of equal length")
    n = pred.shape[0]
    if n == 0:
        raise ValueError("empty inputs")

    err = truth - pred
    mae = float(np.mean(np.abs(err)))
    rmse = float(math.sqrt(np.mean(err * err)))

    flags = []
    sse = float(np.sum(err * err))
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        flags.append("constant_truth")
        paper_r, r_squared = 0.0, 0.0
    else:
        r_squared = 1.0 - sse / sst
        if sse > sst:
            flags.append("paper_r_clamped")
            paper_r = 0.0
        else:
            paper_r = math.sqrt(max(0.0, r_squared))

    if np.all(pred == pred[0]):
        flags.append("constant_pred")
    if "constant_truth" in flags or "constant_pred" in flags:
        flags.append("pearson_undefined")
        pearson = 0.0
    else:
        pearson = float(np.corrcoef(pred, truth)[0, 1])
    return MetricSet(mae, rmse, paper_r, pearson, float(r_squared), n, tuple(flags))


def percentage_error(actual: np.ndarray, predicted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance |A - P| / A * 100.

    Returns (values, valid) where instances with actual == 0 carry NaN
    and valid False; they are excluded from any downstream summary.
    """
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ValueError("length mismatch")
    valid = actual != 0.0
    values = np.full(actual.shape, np.nan)
    values[valid] = np.abs((actual[valid] - predicted[valid]) / actual[valid]) * 100.0
    return values, valid


def regional_percentage_error(region_id: np.ndarray, actual: np.ndarray,
                              predicted: np.ndarray) -> list[tuple[str, float]]:
    """Mean percentage error per region, sorted by region id; zero-actual rows dropped."""
    values, valid = percentage_error(actual, predicted)
    out = []
    for region in sorted(set(np.asarray(region_id, dtype=str).tolist())):
        mask = (np.asarray(region_id, dtype=str) == region) & valid
        if mask.any():
            out.append((region, float(values[mask].mean())))
    return out


# ---------------------------------------------------------------------------
# Residual normality (Anderson-Darling, case 3: mean and variance estimated)
# ---------------------------------------------------------------------------

@dataclass
class NormalityResult:
    statistic: float  # A^2
    corrected: float  # A*^2 with the small-sample correction
    p_value: float
    band: str  # e.g. "p>0.05", "p<0.01"
    n: int


def _log_std_normal_cdf(z: np.ndarray) -> np.ndarray:
    # log Phi(z) via erfc for a numerically safe left tail
    return np.array([math.log(0.5 * math.erfc(-v / math.sqrt(2.0))) for v in z])


def anderson_darling_normality(residuals: np.ndarray) -> NormalityResult:
    """A^2 test of normality with estimated mean/variance.

    Applies the small-sample correction A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)
    and the standard piecewise exponential p-value approximation.
    """
    x = np.sort(np.asarray(residuals, dtype=np.float64))
    n = x.shape[0]
    if n < 8:
        raise ValueError(f"need at least 8 residuals, got {n}")
    s = x.std(ddof=1)
    if s == 0.0:
        raise ValueError("residuals are constant; normality test undefined")
    z = (x - x.mean()) / s

    i = np.arange(1, n + 1)
    log_cdf = _log_std_normal_cdf(z)
    log_sf = _log_std_normal_cdf(-z[::-1])  # log(1 - Phi(z_{n+1-i}))
    a2 = -n - np.sum((2 * i - 1) * (log_cdf + log_sf)) / n
    a2c = a2 * (1.0 + 0.75 / n + 2.25 / n ** 2)

    if a2c >= 0.6:
        p = math.exp(1.2937 - 5.709 * a2c + 0.0186 * a2c ** 2)
    elif a2c >= 0.34:
        p = math.exp(0.9177 - 4.279 * a2c - 1.38 * a2c ** 2)
    elif a2c >= 0.2:
        p = 1.0 - math.exp(-8.318 + 42.796 * a2c - 59.938 * a2c ** 2)
    else:
        p = 1.0 - math.exp(-13.436 + 101.14 * a2c - 223.73 * a2c ** 2)
    p = min(1.0, max(0.0, p))

    if p < 0.01:
        band = "p<0.01"
    elif p < 0.05:
        band = "p<0.05"
    else:
        band = "p>0.05"
    return NormalityResult(float(a2), float(a2c), float(p), band, n)


# ---------------------------------------------------------------------------
# Hexagonal binning (pointy-top axial grid)
# ---------------------------------------------------------------------------

@dataclass
class HexBin:
    center_x: float
    center_y: float
    count: int


def hexbin(pred: np.ndarray, truth: np.ndarray, hex_size: float) -> list[HexBin]:
    """Bin (truth, pred) points onto a pointy-top hexagon grid.

    ``hex_size`` is the hexagon circumradius; truth is the x axis and
    prediction the y axis. Counts over all bins sum to n.
    """
    if hex_size <= 0:
        raise ValueError("hex_size must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError("length mismatch")

    x, y = truth, pred
    q = (math.sqrt(3.0) / 3.0 * x - y / 3.0) / hex_size
    r = (2.0 / 3.0 * y) / hex_size
    qr, rr = _axial_round(q, r)

    counts: dict[tuple[int, int], int] = {}
    for key in zip(qr.tolist(), rr.tolist()):
        counts[key] = counts.get(key, 0) + 1
    bins = []
    for (qi, ri) in sorted(counts):
        cx = hex_size * math.sqrt(3.0) * (qi + ri / 2.0)
        cy = hex_size * 1.5 * ri
        bins.append(HexBin(cx, cy, counts[(qi, ri)]))
    return bins


def _axial_round(q: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # cube rounding: fix whichever coordinate moved furthest
    s = -q - r
    qi, ri, si = np.round(q), np.round(r), np.round(s)
    dq, dr, ds = np.abs(qi - q), np.abs(ri - r), np.abs(si - s)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    qi[fix_q] = -ri[fix_q] - si[fix_q]
    ri[fix_r] = -qi[fix_r] - si[fix_r]
    return qi.astype(np.int64), ri.astype(np.int64)


# ---------------------------------------------------------------------------
# Pearson correlation matrix
# ---------------------------------------------------------------------------

def correlation_matrix(table: FeatureTable, average_weather: bool = False,
                       include_target: bool = False) -> tuple[np.ndarray, list[str], list[str]]:
    """Pearson correlations across columns.

    With ``average_weather`` each weather variable is first averaged
    across its weeks (the heatmap convention). Constant columns are
    flagged and their off-diagonal entries set to 0; the diagonal stays 1.
    Returns (matrix, labels, constant_labels).
    """
    if table.n < 2:
        raise ValueError("need at least 2 rows")
    cols, labels = [], []
    if average_weather:
        for name in [f.name for f in table.descriptors if f.group != "weather"]:
            cols.append(table.X[:, table.column(name)])
            labels.append(name)
        for var in WEATHER_VARS:
            idx = [i for i, f in enumerate(table.descriptors) if f.weather_var == var]
            if idx:
                cols.append(table.X[:, idx].mean(axis=1))
                labels.append(f"{var}_mean")
    else:
        for i, f in enumerate(table.descriptors):
            cols.append(table.X[:, i])
            labels.append(f.name)
    if include_target:
        cols.append(table.y)
        labels.append("yield_t_ha")

    M = np.column_stack(cols)
    sd = M.std(axis=0)
    constant = sd == 0.0
    Z = (M - M.mean(axis=0)) / np.where(constant, 1.0, sd)
    Z[:, constant] = 0.0
    corr = Z.T @ Z / M.shape[0]
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    return corr, labels, [labels[i] for i in np.where(constant)[0]]
