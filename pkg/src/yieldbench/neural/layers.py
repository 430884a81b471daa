"""Layer primitives with hand-written reverse-mode gradients.

Every layer computes float64 forward passes on batched inputs and, given
the loss gradient at its output, returns the loss gradient at its input
while accumulating parameter gradients in matching ``.grads`` slots.
Convolution and pooling use valid padding only: L_out = (L - k)//s + 1.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    """Base class; parameter-free layers leave params empty."""

    name: str = "layer"

    def __init__(self) -> None:
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for g in self.grads:
            g[...] = 0.0

    def output_length(self, length: int) -> int:
        return length


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv1d(Layer):
    """Valid cross-correlation over (N, C_in, L) inputs."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int,
                 stride: int = 1, rng: np.random.Generator | None = None) -> None:
        super().__init__()
        if kernel_size < 1 or stride < 1:
            raise ValueError("kernel_size and stride must be >= 1")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        self.name = f"conv1d({filters},{kernel_size},{stride})"
        rng = rng if rng is not None else np.random.default_rng(0)
        w = he_uniform((filters, in_channels, kernel_size),
                       in_channels * kernel_size, rng)
        b = np.zeros(filters)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]
        self._windows: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def output_length(self, length: int) -> int:
        if length < self.kernel_size:
            raise ValueError(
                f"{self.name}: input length {length} shorter than kernel "
                f"{self.kernel_size}")
        return (length - self.kernel_size) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(f"{self.name}: expected (N, {self.in_channels}, L), got {x.shape}")
        self.output_length(x.shape[2])
        self._in_shape = x.shape
        # (N, C_in, L_out, k) strided view of every receptive field
        self._windows = sliding_window_view(x, self.kernel_size, axis=2)[:, :, ::self.stride, :]
        w, b = self.params
        return np.einsum("nclk,ock->nol", self._windows, w) + b[None, :, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        w, _ = self.params
        self.grads[0] += np.einsum("nclk,nol->ock", self._windows, grad_out)
        self.grads[1] += grad_out.sum(axis=(0, 2))
        grad_in = np.zeros(self._in_shape)
        n_out = grad_out.shape[2]
        for j in range(self.kernel_size):
            stop = j + self.stride * (n_out - 1) + 1
            grad_in[:, :, j:stop:self.stride] += np.einsum(
                "nol,oc->ncl", grad_out, w[:, :, j])
        return grad_in


class AvgPool1d(Layer):
    def __init__(self, window: int, stride: int) -> None:
        super().__init__()
        if window < 1 or stride < 1:
            raise ValueError("window and stride must be >= 1")
        self.window = window
        self.stride = stride
        self.name = f"avgpool1d({window},{stride})"
        self._in_shape: tuple[int, ...] | None = None

    def output_length(self, length: int) -> int:
        if length < self.window:
            raise ValueError(
                f"{self.name}: input length {length} shorter than window {self.window}")
        return (length - self.window) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError(f"{self.name}: expected (N, C, L), got {x.shape}")
        self.output_length(x.shape[2])
        self._in_shape = x.shape
        windows = sliding_window_view(x, self.window, axis=2)[:, :, ::self.stride, :]
        return windows.mean(axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_in = np.zeros(self._in_shape)
        share = grad_out / self.window
        n_out = grad_out.shape[2]
        for j in range(self.window):
            stop = j + self.stride * (n_out - 1) + 1
            grad_in[:, :, j:stop:self.stride] += share
        return grad_in


class Dense(Layer):
    def __init__(self, in_features: int, units: int,
                 rng: np.random.Generator | None = None) -> None:
        super().__init__()
        self.in_features = in_features
        self.units = units
        self.name = f"dense({units})"
        rng = rng if rng is not None else np.random.default_rng(0)
        w = he_uniform((in_features, units), in_features, rng)
        b = np.zeros(units)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"{self.name}: expected (N, {self.in_features}), got {x.shape}")
        self._x = x
        w, b = self.params
        return x @ w + b

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        w, _ = self.params
        self.grads[0] += self._x.T @ grad_out
        self.grads[1] += grad_out.sum(axis=0)
        return grad_out @ w.T


class ReLU(Layer):
    """max(0, x); subgradient at exactly 0 taken as 0."""

    name = "relu"

    def __init__(self) -> None:
        super().__init__()
        self._mask: np.ndarray | None = None
        self.min_abs_preactivation: float = np.inf

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        self.min_abs_preactivation = float(np.min(np.abs(x))) if x.size else np.inf
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, 0.0)


class Flatten(Layer):
    name = "flatten"

    def __init__(self) -> None:
        super().__init__()
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._in_shape)
