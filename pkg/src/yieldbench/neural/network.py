"""Network assembly: layer specs, the two-branch CNN, and the dense stack.

The CNN applies ONE weather branch (shared weights) to each of the six
weather channels by folding the channel axis into the batch axis, runs
soil and phenology features through a small dense branch, concatenates
all branch outputs, and feeds three head layers ending in one linear
unit. Architecture sizes are configurable; defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import AvgPool1d, Conv1d, Dense, Flatten, Layer, ReLU

LAYER_KINDS = ("conv1d", "avgpool1d", "dense", "relu", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel_size: int = 0
    stride: int = 1
    window: int = 0
    units: int = 0

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "filters": self.filters,
                "kernel_size": self.kernel_size, "stride": self.stride,
                "window": self.window, "units": self.units}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv(filters: int, kernel_size: int, stride: int = 1) -> LayerSpec:
    return LayerSpec("conv1d", filters=filters, kernel_size=kernel_size, stride=stride)


def pool(window: int, stride: int) -> LayerSpec:
    return LayerSpec("avgpool1d", window=window, stride=stride)


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", units=units)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


DEFAULT_WEATHER_BRANCH = (
    conv(8, 5, 1), relu(), pool(2, 2),
    conv(12, 3, 1), relu(), pool(2, 2),
    conv(16, 3, 1), relu(), flatten(),
)
DEFAULT_STATIC_BRANCH = (dense(16), relu(), dense(16), relu())
DEFAULT_HEAD = (dense(64), relu(), dense(32), relu(), dense(1))


@dataclass(frozen=True)
class CnnArchitecture:
    weather_branch: tuple[LayerSpec, ...] = DEFAULT_WEATHER_BRANCH
    static_branch: tuple[LayerSpec, ...] = DEFAULT_STATIC_BRANCH
    head: tuple[LayerSpec, ...] = DEFAULT_HEAD

    def to_dict(self) -> dict:
        return {"weather_branch": [s.to_dict() for s in self.weather_branch],
                "static_branch": [s.to_dict() for s in self.static_branch],
                "head": [s.to_dict() for s in self.head]}

    @classmethod
    def from_dict(cls, d: dict) -> "CnnArchitecture":
        return cls(tuple(LayerSpec.from_dict(s) for s in d["weather_branch"]),
                   tuple(LayerSpec.from_dict(s) for s in d["static_branch"]),
                   tuple(LayerSpec.from_dict(s) for s in d["head"]))


class Sequential:
    def __init__(self, layers: list[Layer]) -> None:
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def min_abs_preactivation(self) -> float:
        vals = [layer.min_abs_preactivation for layer in self.layers
                if isinstance(layer, ReLU)]
        return min(vals) if vals else np.inf


def _build_branch(specs: tuple[LayerSpec, ...], channels: int, length: int | None,
                  rng: np.random.Generator, branch_name: str) -> tuple[Sequential, int]:
    """Instantiate layers, tracking (channels, length) to validate shapes.

    length is None once the signal is flat (2-D); returns final feature width.
    """
    layers: list[Layer] = []
    for i, spec in enumerate(specs, start=1):
        where = f"{branch_name} layer {i} ({spec.kind})"
        try:
            if spec.kind == "conv1d":
                if length is None:
                    raise ValueError("convolution after flatten")
                layer: Layer = Conv1d(channels, spec.filters, spec.kernel_size,
                                      spec.stride, rng)
                length = layer.output_length(length)
                channels = spec.filters
            elif spec.kind == "avgpool1d":
                if length is None:
                    raise ValueError("pooling after flatten")
                layer = AvgPool1d(spec.window, spec.stride)
                length = layer.output_length(length)
            elif spec.kind == "dense":
                if length is not None:
                    raise ValueError("dense layer needs flat input; add flatten first")
                layer = Dense(channels, spec.units, rng)
                channels = spec.units
            elif spec.kind == "relu":
                layer = ReLU()
            else:  # flatten
                layer = Flatten()
                channels = channels * (length if length is not None else 1)
                length = None
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from None
        layers.append(layer)
    if length is not None:
        channels = channels * length  # implicit trailing flatten width
    return Sequential(layers), channels


class CnnNetwork:
    """Two-branch CNN; forward takes (N, n_weather, W) weather and (N, S) static."""

    def __init__(self, arch: CnnArchitecture, weeks: int, n_static: int,
                 n_weather: int = 6, seed: int = 0) -> None:
        self.arch = arch
        self.weeks = weeks
        self.n_static = n_static
        self.n_weather = n_weather
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weather_branch, feat_w = _build_branch(
            arch.weather_branch, 1, weeks, rng, "weather branch")
        if not any(s.kind == "flatten" for s in arch.weather_branch):
            raise ValueError("weather branch must end with a flatten layer")
        self.static_branch, feat_s = _build_branch(
            arch.static_branch, n_static, None, rng, "static branch")
        self.branch_width = feat_w
        head_in = n_weather * feat_w + feat_s
        self.head, head_out = _build_branch(arch.head, head_in, None, rng, "head")
        if head_out != 1:
            raise ValueError(f"head must end in 1 linear unit, got {head_out}")

    @property
    def params(self) -> list[np.ndarray]:
        return (self.weather_branch.params + self.static_branch.params
                + self.head.params)

    @property
    def grads(self) -> list[np.ndarray]:
        return (self.weather_branch.grads + self.static_branch.grads
                + self.head.grads)

    def zero_grads(self) -> None:
        self.weather_branch.zero_grads()
        self.static_branch.zero_grads()
        self.head.zero_grads()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def branch_features(self, x_weather: np.ndarray) -> np.ndarray:
        """Per-variable shared-branch outputs, shape (N, n_weather, width)."""
        n = x_weather.shape[0]
        folded = x_weather.reshape(n * self.n_weather, 1, self.weeks)
        return self.weather_branch.forward(folded).reshape(
            n, self.n_weather, self.branch_width)

    def forward(self, x_weather: np.ndarray, x_static: np.ndarray) -> np.ndarray:
        if x_weather.ndim != 3 or x_weather.shape[1:] != (self.n_weather, self.weeks):
            raise ValueError(
                f"expected weather (N, {self.n_weather}, {self.weeks}), "
                f"got {x_weather.shape}")
        if x_static.ndim != 2 or x_static.shape[1] != self.n_static:
            raise ValueError(
                f"expected static (N, {self.n_static}), got {x_static.shape}")
        n = x_weather.shape[0]
        bw = self.branch_features(x_weather).reshape(n, -1)
        bs = self.static_branch.forward(x_static)
        joint = np.concatenate([bw, bs], axis=1)
        return self.head.forward(joint)[:, 0]

    def backward(self, grad_pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Propagate d(loss)/d(prediction) of shape (N,); returns input grads."""
        n = grad_pred.shape[0]
        g_joint = self.head.backward(grad_pred[:, None])
        split = self.n_weather * self.branch_width
        g_bw, g_bs = g_joint[:, :split], g_joint[:, split:]
        g_static = self.static_branch.backward(g_bs)
        g_folded = self.weather_branch.backward(
            g_bw.reshape(n * self.n_weather, self.branch_width))
        return g_folded.reshape(n, self.n_weather, self.weeks), g_static

    def predict(self, x_weather: np.ndarray, x_static: np.ndarray) -> np.ndarray:
        return self.forward(x_weather, x_static)


class DenseNetwork:
    """Plain feedforward stack over flat feature vectors."""

    def __init__(self, n_features: int, hidden: tuple[int, ...] = (64, 32, 16),
                 seed: int = 0) -> None:
        self.n_features = n_features
        self.hidden = tuple(hidden)
        self.seed = seed
        rng = np.random.default_rng(seed)
        specs: list[LayerSpec] = []
        for units in hidden:
            specs.extend([dense(units), relu()])
        specs.append(dense(1))
        self.stack, out = _build_branch(tuple(specs), n_features, None, rng, "stack")
        assert out == 1
        self.weeks = 0

    @property
    def params(self) -> list[np.ndarray]:
        return self.stack.params

    @property
    def grads(self) -> list[np.ndarray]:
        return self.stack.grads

    def zero_grads(self) -> None:
        self.stack.zero_grads()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected (N, {self.n_features}), got {x.shape}")
        return self.stack.forward(x)[:, 0]

    def backward(self, grad_pred: np.ndarray) -> np.ndarray:
        return self.stack.backward(grad_pred[:, None])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)


def network_to_dict(net: CnnNetwork | DenseNetwork) -> dict:
    weights = [p.tolist() for p in net.params]
    if isinstance(net, CnnNetwork):
        return {"schema": 1, "kind": "cnn", "arch": net.arch.to_dict(),
                "weeks": net.weeks, "n_static": net.n_static,
                "n_weather": net.n_weather, "seed": net.seed, "weights": weights}
    return {"schema": 1, "kind": "dnn", "n_features": net.n_features,
            "hidden": list(net.hidden), "seed": net.seed, "weights": weights}


def network_from_dict(d: dict) -> CnnNetwork | DenseNetwork:
    if d["kind"] == "cnn":
        net: CnnNetwork | DenseNetwork = CnnNetwork(
            CnnArchitecture.from_dict(d["arch"]), d["weeks"], d["n_static"],
            d["n_weather"], d["seed"])
    elif d["kind"] == "dnn":
        net = DenseNetwork(d["n_features"], tuple(d["hidden"]), d["seed"])
    else:
        raise ValueError(f"unknown network kind {d['kind']!r}")
    stored = [np.asarray(w, dtype=np.float64) for w in d["weights"]]
    live = net.params
    if len(stored) != len(live):
        raise ValueError("weight array count mismatch")
    for dst, src in zip(live, stored):
        if dst.shape != src.shape:
            raise ValueError(f"weight shape mismatch: {dst.shape} vs {src.shape}")
        dst[...] = src
    return net
