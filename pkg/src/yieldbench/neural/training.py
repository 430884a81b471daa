"""Mini-batch Adam training on mean squared error, plus a gradient oracle.

Training is deterministic given the config seed: one generator drives
the validation split and every epoch's shuffle. Early stopping tracks
the best validation loss and restores those weights at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size >= 1, max_epochs >= 0, patience >= 1")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "validation_fraction": self.validation_fraction, "seed": self.seed}


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    stopped_early: bool

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_loss": self.val_loss,
                "best_epoch": self.best_epoch, "stopped_early": self.stopped_early}


def _take(inputs: tuple[np.ndarray, ...], idx: np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(a[idx] for a in inputs)


def _mse(net, inputs: tuple[np.ndarray, ...], y: np.ndarray) -> float:
    pred = net.forward(*inputs)
    return float(np.mean((pred - y) ** 2))


def train_network(net, inputs: tuple[np.ndarray, ...] | np.ndarray,
                  y: np.ndarray, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train in place. `inputs` is the tuple of forward() arguments
    (weather+static for the CNN, a single matrix for the dense stack)."""
    if isinstance(inputs, np.ndarray):
        inputs = (inputs,)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if any(a.shape[0] != n for a in inputs):
        raise ValueError("input row counts disagree with target")

    rng = np.random.default_rng(config.seed)
    use_val = config.validation_fraction > 0.0
    if use_val:
        perm = rng.permutation(n)
        n_val = min(max(int(round(config.validation_fraction * n)), 1), n - 1)
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
    else:
        tr_idx = np.arange(n)
        val_idx = np.empty(0, dtype=int)
    tr_inputs, tr_y = _take(inputs, tr_idx), y[tr_idx]
    val_inputs, val_y = _take(inputs, val_idx), y[val_idx]
    n_tr = tr_y.shape[0]

    opt = Adam(net.params, config.lr, config.beta1, config.beta2, config.eps)
    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_params: list[np.ndarray] | None = None
    since_best = 0
    stopped_early = False

    for epoch in range(config.max_epochs):
        order = rng.permutation(n_tr)
        sse = 0.0
        for start in range(0, n_tr, config.batch_size):
            bidx = order[start:start + config.batch_size]
            xb, yb = _take(tr_inputs, bidx), tr_y[bidx]
            net.zero_grads()
            pred = net.forward(*xb)
            resid = pred - yb
            batch_loss = float(np.mean(resid ** 2))
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}; "
                    "consider lowering lr or rescaling inputs")
            sse += batch_loss * bidx.shape[0]
            net.backward(2.0 * resid / bidx.shape[0])
            opt.step(net.grads)
        train_hist.append(sse / n_tr)
        if use_val:
            vl = _mse(net, val_inputs, val_y)
            val_hist.append(vl)
            if vl < best_val:
                best_val = vl
                best_epoch = epoch
                best_params = [p.copy() for p in net.params]
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    stopped_early = True
                    break

    if best_params is not None:
        for dst, src in zip(net.params, best_params):
            dst[...] = src
    elif train_hist:
        best_epoch = len(train_hist) - 1
    return TrainResult(train_hist, val_hist, best_epoch, stopped_early)


# ---------------------------------------------------------------------------
# Gradient oracle
# ---------------------------------------------------------------------------

def min_abs_preactivation(net) -> float:
    """Smallest |pre-activation| any ReLU saw on the last forward pass."""
    seqs = [net.stack] if hasattr(net, "stack") else [
        net.weather_branch, net.static_branch, net.head]
    return min(s.min_abs_preactivation() for s in seqs)


def nudge_from_kinks(net, inputs: tuple[np.ndarray, ...], y: np.ndarray,
                     margin: float = 1e-3, seed: int = 0,
                     max_tries: int = 200) -> bool:
    """Perturb bias vectors until no ReLU pre-activation sits within
    `margin` of its kink, so finite differences stay one-sided-safe."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        net.forward(*inputs)
        if min_abs_preactivation(net) >= margin:
            return True
        for p in net.params:
            if p.ndim == 1:  # bias vectors only
                p += rng.uniform(-3 * margin, 3 * margin, size=p.shape)
    net.forward(*inputs)
    return min_abs_preactivation(net) >= margin


def finite_difference_check(net, inputs: tuple[np.ndarray, ...] | np.ndarray,
                            y: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between central differences and backprop over
    every parameter. Intended for nets of at most a few thousand params."""
    if isinstance(inputs, np.ndarray):
        inputs = (inputs,)
    y = np.asarray(y, dtype=np.float64)

    net.zero_grads()
    pred = net.forward(*inputs)
    net.backward(2.0 * (pred - y) / y.shape[0])
    analytic = [g.copy() for g in net.grads]

    worst = 0.0
    for p, g in zip(net.params, analytic):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for i in range(flat_p.shape[0]):
            keep = flat_p[i]
            flat_p[i] = keep + eps
            up = _mse(net, inputs, y)
            flat_p[i] = keep - eps
            down = _mse(net, inputs, y)
            flat_p[i] = keep
            fd = (up - down) / (2.0 * eps)
            err = abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-8)
            worst = max(worst, err)
    return worst
