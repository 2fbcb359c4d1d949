"""Layer set for the two convolutional networks.

Exactly the kinds required: dense conv2d, depthwise-separable conv2d, batch
norm, relu, and the pre-activation residual block.  Spatial padding is always
"same" so any (height, width) passes through unchanged, which is what lets a
trained model run on a different subcarrier count.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ConfigError, NumericError
from . import tensor as T
from .tensor import DiffTensor


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base class; subclasses define _params (name -> DiffTensor) and forward."""

    name: str
    in_channels: int
    out_channels: int

    def params(self) -> Iterator[tuple[str, DiffTensor]]:
        for key, p in self._params.items():
            yield f"{self.name}/{key}", p

    def state(self) -> Iterator[tuple[str, np.ndarray]]:
        """Non-trainable arrays that still belong in a weights file."""
        return iter(())

    def astype(self, dtype) -> None:
        for _, p in self.params():
            p.values = p.values.astype(dtype)
            p.zero_grad()

    def forward(self, x: DiffTensor, training: bool = False,
                update_stats: bool = True) -> DiffTensor:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel_size: tuple[int, int] = (1, 1),
                 dilation: tuple[int, int] = (1, 1),
                 bias: bool = True, rng: np.random.Generator | None = None,
                 dtype=None):
        rng = rng or np.random.default_rng(0)
        dtype = dtype or T.default_dtype()
        kh, kw = kernel_size
        fan_in = kh * kw * in_channels
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = (kh, kw)
        self.dilation = tuple(dilation)
        self._params = {"kernel": T.parameter(
            _he_uniform(rng, (kh, kw, in_channels, out_channels), fan_in, dtype),
            name=f"{name}/kernel")}
        if bias:
            self._params["bias"] = T.parameter(
                np.zeros(out_channels, dtype=dtype), name=f"{name}/bias")

    def forward(self, x, training=False, update_stats=True):
        return T.conv2d(x, self._params["kernel"], self._params.get("bias"),
                        self.dilation)


class SeparableConv2d(Layer):
    """Depthwise spatial filter followed by a pointwise channel mix."""

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel_size: tuple[int, int], dilation: tuple[int, int] = (1, 1),
                 bias: bool = True, rng: np.random.Generator | None = None,
                 dtype=None):
        rng = rng or np.random.default_rng(0)
        dtype = dtype or T.default_dtype()
        kh, kw = kernel_size
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = (kh, kw)
        self.dilation = tuple(dilation)
        self._params = {
            "depthwise": T.parameter(
                _he_uniform(rng, (kh, kw, in_channels), kh * kw, dtype),
                name=f"{name}/depthwise"),
            "pointwise": T.parameter(
                _he_uniform(rng, (1, 1, in_channels, out_channels), in_channels, dtype),
                name=f"{name}/pointwise"),
        }
        if bias:
            self._params["bias"] = T.parameter(
                np.zeros(out_channels, dtype=dtype), name=f"{name}/bias")

    def forward(self, x, training=False, update_stats=True):
        y = T.depthwise_conv2d(x, self._params["depthwise"], self.dilation)
        return T.conv2d(y, self._params["pointwise"], self._params.get("bias"))

    def dense_equivalent(self) -> np.ndarray:
        """Contract depthwise and pointwise factors into one dense kernel."""
        dw = self._params["depthwise"].values          # (kh, kw, cin)
        pw = self._params["pointwise"].values[0, 0]    # (cin, cout)
        return np.einsum("ijc,co->ijco", dw, pw)


class BatchNorm2d(Layer):
    def __init__(self, name: str, channels: int, momentum: float = 0.1,
                 eps: float = 1e-6, dtype=None):
        dtype = dtype or T.default_dtype()
        self.name = name
        self.in_channels = channels
        self.out_channels = channels
        self.momentum = momentum
        self.eps = eps
        self._params = {
            "scale": T.parameter(np.ones(channels, dtype=dtype), name=f"{name}/scale"),
            "shift": T.parameter(np.zeros(channels, dtype=dtype), name=f"{name}/shift"),
        }
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)

    def state(self):
        yield f"{self.name}/running_mean", self.running_mean
        yield f"{self.name}/running_var", self.running_var

    def forward(self, x, training=False, update_stats=True):
        return T.batch_norm(x, self._params["scale"], self._params["shift"],
                            self.running_mean, self.running_var,
                            training=training, momentum=self.momentum,
                            eps=self.eps, update_stats=update_stats)


class ReLU(Layer):
    def __init__(self, name: str = "relu", channels: int = 0):
        self.name = name
        self.in_channels = channels
        self.out_channels = channels
        self._params = {}

    def forward(self, x, training=False, update_stats=True):
        return T.relu(x)


class ResidualBlock(Layer):
    """(batch_norm -> relu -> separable conv) twice, plus a skip connection.

    The skip is the identity when channel counts match and a 1x1 projection
    otherwise.  Pre-activation ordering keeps the block stable without any
    careful initialization.  ``linear=True`` drops both relus, leaving the
    block (and any network of such blocks) an affine map of its input.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel_size: tuple[int, int], dilation: tuple[int, int] = (1, 1),
                 linear: bool = False, rng: np.random.Generator | None = None,
                 dtype=None):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = tuple(kernel_size)
        self.dilation = tuple(dilation)
        self.linear = linear
        self.bn1 = BatchNorm2d(f"{name}/bn1", in_channels, dtype=dtype)
        # no bias on conv1: it feeds bn2, which absorbs any constant shift,
        # leaving such a bias with an exactly zero gradient
        self.conv1 = SeparableConv2d(f"{name}/conv1", in_channels, out_channels,
                                     kernel_size, dilation, bias=False,
                                     rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(f"{name}/bn2", out_channels, dtype=dtype)
        self.conv2 = SeparableConv2d(f"{name}/conv2", out_channels, out_channels,
                                     kernel_size, dilation, rng=rng, dtype=dtype)
        self.proj = None
        if in_channels != out_channels:
            self.proj = Conv2d(f"{name}/proj", in_channels, out_channels,
                               (1, 1), bias=False, rng=rng, dtype=dtype)
        self._children = [self.bn1, self.conv1, self.bn2, self.conv2]
        if self.proj is not None:
            self._children.append(self.proj)

    def params(self):
        for child in self._children:
            yield from child.params()

    def state(self):
        for child in self._children:
            yield from child.state()

    def astype(self, dtype):
        for child in self._children:
            child.astype(dtype)

    def forward(self, x, training=False, update_stats=True):
        t = self.bn1.forward(x, training, update_stats)
        if not self.linear:
            t = T.relu(t)
        t = self.conv1.forward(t, training, update_stats)
        t = self.bn2.forward(t, training, update_stats)
        if not self.linear:
            t = T.relu(t)
        t = self.conv2.forward(t, training, update_stats)
        skip = x if self.proj is None else self.proj.forward(x, training, update_stats)
        return T.add(t, skip)


_KINDS = {
    "conv2d": Conv2d,
    "separable_conv2d": SeparableConv2d,
    "batch_norm": BatchNorm2d,
    "relu": ReLU,
    "residual_block": ResidualBlock,
}


def forward_layer(x: DiffTensor, layer: Layer, kind: str | None = None,
                  training: bool = False) -> DiffTensor:
    """Validated single-layer application.

    Checks the channel count against the layer and rejects non-finite input.
    Networks call layer.forward directly on their hot path; this wrapper is
    the checked entry point.
    """
    if kind is not None:
        expected = _KINDS.get(kind)
        if expected is None:
            raise ConfigError(f"unknown layer kind '{kind}'")
        if not isinstance(layer, expected):
            raise ConfigError(f"layer {layer.name} is {type(layer).__name__}, not {kind}")
    if layer.in_channels and x.values.shape[-1] != layer.in_channels:
        raise ConfigError(
            f"layer {layer.name} expects {layer.in_channels} channels, "
            f"got {x.values.shape[-1]}")
    if not np.isfinite(x.values).all():
        raise NumericError(f"non-finite input to layer {layer.name}")
    return layer.forward(x, training=training)


class Network:
    """Ordered layer container with parameter iteration and weight state."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def params(self) -> Iterator[tuple[str, DiffTensor]]:
        for layer in self.layers:
            yield from layer.params()

    def param_count(self) -> int:
        return sum(int(p.values.size) for _, p in self.params())

    def astype(self, dtype) -> None:
        for layer in self.layers:
            layer.astype(dtype)

    def zero_grad(self) -> None:
        for _, p in self.params():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.values.copy() for name, p in self.params()}
        for layer in self.layers:
            for name, arr in layer.state():
                out[name] = arr.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = {name: p for name, p in self.params()}
        stats = {}
        for layer in self.layers:
            for name, arr in layer.state():
                stats[name] = arr
        for name, arr in state.items():
            if name in own:
                if own[name].values.shape != arr.shape:
                    raise ConfigError(
                        f"weight {name}: shape {arr.shape} does not match "
                        f"{own[name].values.shape}")
                own[name].values = arr.astype(own[name].values.dtype)
            elif name in stats:
                stats[name][...] = arr
            else:
                raise ConfigError(f"unknown weight '{name}'")
        missing = set(own) - set(state)
        if missing:
            raise ConfigError(f"weights file missing {sorted(missing)[:4]}")
