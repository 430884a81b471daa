"""Model-agnostic Shapley attribution.

Two routes to the same quantity: `exact_shapley` enumerates every
coalition (d <= 13) and averages permutation-weighted marginal
contributions; `kernel_shap` solves the Shapley-kernel weighted least
squares, enumerating fully when the budget covers 2^d coalitions
(then it reproduces the exact values) and otherwise drawing coalitions
in complementary pairs proportionally to the kernel. Both use the same
value function: v(S) = mean over background rows b of f(x with the
features outside S replaced by b's values).

Models are plain callables mapping an (n, d) matrix to (n,) predictions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAX_EXACT_FEATURES = 13
_MAX_EVAL_ROWS = 1 << 19  # chunk masked-matrix model calls above this


@dataclass
class Attribution:
    phi: np.ndarray
    base_value: float
    instance_ref: str = ""
    budget_used: int = 0
    exact: bool = False

    @property
    def output(self) -> float:
        return self.base_value + float(self.phi.sum())

    def to_dict(self) -> dict:
        return {"phi": self.phi.tolist(), "base_value": self.base_value,
                "instance_ref": self.instance_ref,
                "budget_used": self.budget_used, "exact": self.exact}


@dataclass
class ImportanceRanking:
    """(feature, mean |phi|, sign) triples, non-increasing in mean |phi|.

    sign is the sign of the Pearson correlation between a feature's
    values and its phi across the explained instances (0 when undefined).
    """

    entries: list[tuple[str, float, int]]

    @property
    def feature_names(self) -> list[str]:
        return [name for name, _, _ in self.entries]

    def to_list(self) -> list[dict]:
        return [{"feature": n, "mean_abs_phi": v, "sign": s}
                for n, v, s in self.entries]


# ---------------------------------------------------------------------------
# Value function
# ---------------------------------------------------------------------------

def _coalition_values(model: Callable, x: np.ndarray, background: np.ndarray,
                      masks: np.ndarray) -> np.ndarray:
    """v(S) for each coalition mask row; masks is (n_s, d) boolean where
    True means the feature takes the instance's value."""
    n_s, d = masks.shape
    m = background.shape[0]
    out = np.empty(n_s)
    # rows per coalition = m; evaluate in chunks of whole coalitions
    per = max(1, _MAX_EVAL_ROWS // m)
    for start in range(0, n_s, per):
        chunk = masks[start:start + per]
        c = chunk.shape[0]
        stacked = np.where(chunk[:, None, :], x[None, None, :], background[None, :, :])
        preds = np.asarray(model(stacked.reshape(c * m, d)), dtype=np.float64)
        out[start:start + c] = preds.reshape(c, m).mean(axis=1)
    return out


def _check_inputs(x: np.ndarray, background: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] < 1:
        raise ValueError("background must be a nonempty 2-D matrix")
    if background.shape[1] != x.shape[0]:
        raise ValueError("instance and background disagree on feature count")
    return x, background


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

def exact_shapley(model: Callable, x: np.ndarray, background: np.ndarray,
                  instance_ref: str = "") -> Attribution:
    """Permutation-weighted marginal contributions over all 2^d coalitions."""
    x, background = _check_inputs(x, background)
    d = x.shape[0]
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration capped at d <= {MAX_EXACT_FEATURES}, got {d}")
    n_c = 1 << d
    codes = np.arange(n_c, dtype=np.uint32)
    masks = (codes[:, None] >> np.arange(d)[None, :]) & 1
    v = _coalition_values(model, x, background, masks.astype(bool))

    pop = masks.sum(axis=1)
    # weight for adding player j to a coalition of size s: s!(d-1-s)!/d!
    fact = np.array([math.factorial(i) for i in range(d + 1)], dtype=np.float64)
    w = fact[np.arange(d)] * fact[d - 1 - np.arange(d)] / fact[d]

    phi = np.empty(d)
    for j in range(d):
        bit = np.uint32(1 << j)
        without = codes[(codes & bit) == 0]
        phi[j] = np.sum(w[pop[without]] * (v[without | bit] - v[without]))
    return Attribution(phi, float(v[0]), instance_ref, budget_used=n_c, exact=True)


# ---------------------------------------------------------------------------
# Kernel SHAP
# ---------------------------------------------------------------------------

def shapley_kernel_weight(d: int, s: int) -> float:
    """pi(S) = (d-1) / (C(d,s) * s * (d-s)) for 0 < s < d."""
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def _solve_constrained_wls(masks: np.ndarray, v: np.ndarray, weights: np.ndarray,
                           base: float, fx: float, regularizer: float) -> np.ndarray:
    """WLS for phi with the efficiency constraint folded in by eliminating
    the last coefficient: phi_last = (fx - base) - sum(others)."""
    d = masks.shape[1]
    z = masks.astype(np.float64)
    y = v - base - z[:, -1] * (fx - base)
    A = z[:, :-1] - z[:, [-1]]
    sw = np.sqrt(weights)[:, None]
    Aw, yw = A * sw, y * sw[:, 0]
    if regularizer > 0.0:
        Aw = np.vstack([Aw, np.sqrt(regularizer) * np.eye(d - 1)])
        yw = np.concatenate([yw, np.zeros(d - 1)])
    head, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    phi = np.empty(d)
    phi[:-1] = head
    phi[-1] = (fx - base) - head.sum()
    return phi


def kernel_shap(model: Callable, x: np.ndarray, background: np.ndarray,
                budget: int, seed: int = 0, regularizer: float = 0.0,
                instance_ref: str = "") -> Attribution:
    """Shapley values via the kernel-weighted regression.

    Full enumeration whenever 2^d <= budget (exact); otherwise coalitions
    are drawn in complementary pairs with probability proportional to the
    Shapley kernel, and repeats accumulate weight.
    """
    x, background = _check_inputs(x, background)
    d = x.shape[0]
    if budget < d + 2:
        raise ValueError(f"budget {budget} underdetermines {d} features; need >= {d + 2}")

    base = float(np.mean(np.asarray(model(background), dtype=np.float64)))
    fx = float(np.asarray(model(x[None, :]), dtype=np.float64)[0])
    if d == 1:
        return Attribution(np.array([fx - base]), base, instance_ref,
                           budget_used=2, exact=True)

    if (1 << d) <= budget:
        codes = np.arange(1, (1 << d) - 1, dtype=np.uint64)  # proper nonempty subsets
        masks = ((codes[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & 1).astype(bool)
        sizes = masks.sum(axis=1)
        weights = np.array([shapley_kernel_weight(d, int(s)) for s in sizes])
        v = _coalition_values(model, x, background, masks)
        phi = _solve_constrained_wls(masks, v, weights, base, fx, regularizer)
        return Attribution(phi, base, instance_ref, budget_used=1 << d, exact=True)

    # paired sampling proportional to the kernel, aggregated by multiplicity
    rng = np.random.default_rng(seed)
    sizes = np.arange(1, d)
    size_p = (d - 1) / (sizes * (d - sizes))
    size_p = size_p / size_p.sum()
    n_draws = budget - 2
    counts: dict[bytes, int] = {}
    drawn = 0
    while drawn < n_draws:
        s = int(rng.choice(sizes, p=size_p))
        mask = np.zeros(d, dtype=bool)
        mask[rng.choice(d, size=s, replace=False)] = True
        for m in (mask, ~mask):
            if drawn >= n_draws:
                break
            key = m.tobytes()
            counts[key] = counts.get(key, 0) + 1
            drawn += 1
    keys = sorted(counts)
    masks = np.array([np.frombuffer(k, dtype=bool) for k in keys])
    weights = np.array([counts[k] for k in keys], dtype=np.float64)
    v = _coalition_values(model, x, background, masks)
    phi = _solve_constrained_wls(masks, v, weights, base, fx, regularizer)
    return Attribution(phi, base, instance_ref,
                       budget_used=len(keys) + 2, exact=False)


# ---------------------------------------------------------------------------
# Aggregation, force plots, selection
# ---------------------------------------------------------------------------

def global_importance(attributions: Sequence[Attribution],
                      feature_values: np.ndarray,
                      feature_names: Sequence[str],
                      top_k: int | None = None) -> ImportanceRanking:
    """Rank by mean |phi| (descending); sign from the correlation between
    feature value and phi across instances."""
    if len(attributions) < 1:
        raise ValueError("need at least one attribution")
    phi = np.vstack([a.phi for a in attributions])
    values = np.asarray(feature_values, dtype=np.float64)
    if phi.shape != values.shape:
        raise ValueError("feature_values must align with the phi matrix")
    if phi.shape[1] != len(feature_names):
        raise ValueError("feature_names length mismatch")

    mean_abs = np.abs(phi).mean(axis=0)
    signs = np.zeros(phi.shape[1], dtype=np.int64)
    if phi.shape[0] > 1:
        vc = values - values.mean(axis=0)
        pc = phi - phi.mean(axis=0)
        cov = (vc * pc).sum(axis=0)
        scale = np.sqrt((vc ** 2).sum(axis=0) * (pc ** 2).sum(axis=0))
        ok = scale > 0
        signs[ok] = np.sign(cov[ok]).astype(np.int64)
    order = np.argsort(-mean_abs, kind="stable")
    if top_k is not None:
        order = order[:top_k]
    entries = [(str(feature_names[i]), float(mean_abs[i]), int(signs[i]))
               for i in order]
    return ImportanceRanking(entries)


def force_plot_data(attribution: Attribution, feature_names: Sequence[str],
                    feature_values: np.ndarray) -> dict:
    """Contributions sorted by |phi| descending, plus base and output."""
    phi = attribution.phi
    if len(feature_names) != phi.shape[0]:
        raise ValueError("feature_names length mismatch")
    values = np.asarray(feature_values, dtype=np.float64).reshape(-1)
    order = np.argsort(-np.abs(phi), kind="stable")
    items = [{"feature": str(feature_names[i]), "value": float(values[i]),
              "phi": float(phi[i]), "positive": bool(phi[i] > 0)}
             for i in order]
    return {"base": attribution.base_value, "output": attribution.output,
            "instance_ref": attribution.instance_ref, "contributions": items}


def top_fraction(ranking: ImportanceRanking, p: float) -> list[str]:
    """Top ceil(p * d) ranked feature names."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    d = len(ranking.entries)
    return ranking.feature_names[:math.ceil(p * d)]


def select_features(table, ranking: ImportanceRanking | None = None,
                    p: float | None = None, group: str | None = None):
    """Reduced FeatureTable: top-fraction of a ranking, or a whole group."""
    from .dataio import take_features

    if (ranking is None) == (group is None):
        raise ValueError("pass exactly one of (ranking, p) or group")
    if group is not None:
        names = [f.name for f in table.descriptors if f.group == group]
        if not names:
            raise ValueError(f"no features in group {group!r}")
    else:
        if p is None:
            raise ValueError("p is required with a ranking")
        names = top_fraction(ranking, p)
    return take_features(table, names)


def attributions_to_jsonl(attributions: Sequence[Attribution], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in attributions:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")


def attributions_from_jsonl(path) -> list[Attribution]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(Attribution(np.asarray(d["phi"], dtype=np.float64),
                                       d["base_value"], d["instance_ref"],
                                       d["budget_used"], d["exact"]))
    return out
