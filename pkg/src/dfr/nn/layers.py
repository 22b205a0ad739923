"""Layer objects and the sequential network container."""
from dataclasses import dataclass, field

import numpy as np

from dfr.errors import ConfigurationError
from dfr.nn import tensor as T
from dfr.nn.functional import conv_output_size

LAYER_KINDS = ("conv", "maxpool", "relu", "flatten", "dense")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``params`` keys by kind: conv -> out_channels, kernel, stride, padding;
    maxpool -> size, stride; dense -> units. relu and flatten take none.
    Input sizes are inferred when the network is built.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        p = self.params
        if self.kind == "conv":
            if p.get("kernel", 0) < 1 or p.get("stride", 1) < 1 or p.get("padding", 0) < 0:
                raise ConfigurationError(f"bad conv parameters {p}")
            if p.get("out_channels", 0) < 1:
                raise ConfigurationError(f"conv needs out_channels >= 1, got {p}")
        elif self.kind == "maxpool":
            if p.get("size", 0) < 1 or p.get("stride", p.get("size", 0)) < 1:
                raise ConfigurationError(f"bad maxpool parameters {p}")
        elif self.kind == "dense" and p.get("units", 0) < 1:
            raise ConfigurationError(f"dense needs units >= 1, got {p}")

    def describe(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({args})" if args else self.kind


def conv(out_channels, kernel=3, stride=1, padding=1):
    return LayerSpec("conv", dict(out_channels=out_channels, kernel=kernel, stride=stride, padding=padding))


def maxpool(size=2, stride=None):
    return LayerSpec("maxpool", dict(size=size, stride=size if stride is None else stride))


def relu():
    return LayerSpec("relu")


def flatten():
    return LayerSpec("flatten")


def dense(units):
    return LayerSpec("dense", dict(units=units))


class Conv2D:
    def __init__(self, in_channels, out_channels, kernel, stride, padding, rng, dtype):
        fan_in = in_channels * kernel * kernel
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel, kernel))
        self.weight = T.Tensor(w.astype(dtype), requires_grad=True)
        self.bias = T.Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Dense:
    def __init__(self, in_units, units, rng, dtype):
        limit = np.sqrt(6.0 / in_units)
        w = rng.uniform(-limit, limit, size=(units, in_units))
        self.weight = T.Tensor(w.astype(dtype), requires_grad=True)
        self.bias = T.Tensor(np.zeros(units, dtype=dtype), requires_grad=True)

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return T.dense(x, self.weight, self.bias)


class MaxPool2D:
    def __init__(self, size, stride):
        self.size = size
        self.stride = stride

    def params(self):
        return []

    def __call__(self, x):
        return T.maxpool2d(x, self.size, self.stride)


class ReLU:
    def params(self):
        return []

    def __call__(self, x):
        return T.relu(x)


class Flatten:
    def params(self):
        return []

    def __call__(self, x):
        return T.flatten(x, batched=True)


class Sequential:
    """A feed-forward stack of layers over batched ``(N, C, H, W)`` input.

    Parameters are initialised with He-style uniform fan-in scaling from a
    generator seeded with ``seed``.
    """

    def __init__(self, specs, input_shape, seed=0, dtype=np.float64):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            layer, shape = self._make(spec, shape, rng)
            if any(d < 1 for d in shape):
                raise ConfigurationError(f"layer {i} ({spec.describe()}) produces non-positive shape {shape}")
            self.layers.append(layer)
        self.output_shape = shape

    def _make(self, spec, shape, rng):
        p = spec.params
        if spec.kind == "conv":
            if len(shape) != 3:
                raise ConfigurationError(f"conv needs (C, H, W) input, got {shape}")
            c, h, w = shape
            k, s, pad = p["kernel"], p.get("stride", 1), p.get("padding", 0)
            out = (p["out_channels"], conv_output_size(h, k, s, pad), conv_output_size(w, k, s, pad))
            return Conv2D(c, p["out_channels"], k, s, pad, rng, self.dtype), out
        if spec.kind == "maxpool":
            if len(shape) != 3:
                raise ConfigurationError(f"maxpool needs (C, H, W) input, got {shape}")
            c, h, w = shape
            size, s = p["size"], p.get("stride", p["size"])
            return MaxPool2D(size, s), (c, (h - size) // s + 1, (w - size) // s + 1)
        if spec.kind == "relu":
            return ReLU(), shape
        if spec.kind == "flatten":
            return Flatten(), (int(np.prod(shape)),)
        if len(shape) != 1:
            raise ConfigurationError(f"dense needs flat input, got {shape}; add a flatten layer")
        return Dense(shape[0], p["units"], rng, self.dtype), (p["units"],)

    def parameters(self):
        return [t for layer in self.layers for t in layer.params()]

    def zero_grad(self):
        for t in self.parameters():
            t.zero_grad()

    def __call__(self, x):
        if not isinstance(x, T.Tensor):
            x = T.Tensor(np.asarray(x, dtype=self.dtype))
        for layer in self.layers:
            x = layer(x)
        return x

    def predict(self, x):
        """Forward pass on a raw batch, returning a plain array."""
        return self(np.asarray(x, dtype=self.dtype)).data
