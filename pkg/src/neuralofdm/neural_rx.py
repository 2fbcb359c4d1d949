"""Convolutional receiver mapping the received grid to per-bit LLRs.

The input is the received grid as two real channels, optionally concatenated
with a dense pilot-value grid (zeros on data REs, which encodes positions and
values at once) and, in oracle mode, the true channel.  Dilations are
(frequency, time): early blocks reach far across subcarriers, where channel
time-variation smears energy, and only modestly across symbols.  The head
emits one LLR channel per bit with the same sign convention as the classical
demapper: positive means bit 1.
"""

from __future__ import annotations

import numpy as np

from . import tensorkit as T
from .errors import ConfigError, NumericError
from .grid import PilotPattern, ResourceGrid
from .neural_mod import channels_from_complex

RX_INPUT_MODES = ("pilots", "pilots+csi", "none")
_RX_CHANNELS = {"pilots": 4, "pilots+csi": 6, "none": 2}

_INIT_SEED = 0x3A0E

# residual stage plan: (kernel, dilation) as (frequency, time) pairs
_BLOCK_PLAN = (
    ((7, 5), (7, 2)),
    ((7, 5), (7, 1)),
    ((5, 3), (1, 2)),
    ((5, 3), (1, 2)),
    ((3, 3), (1, 1)),
)


class ReceiverNet:
    """Input conv (3x3, width/2) -> five residual blocks at full width with
    the dilation plan above -> 1x1 conv to m LLR channels."""

    def __init__(self, m: int, width: int = 128, rx_input: str = "pilots",
                 seed: int = 0, dtype=None):
        if rx_input not in RX_INPUT_MODES:
            raise ConfigError(f"rx_input must be one of {RX_INPUT_MODES}")
        if m < 1:
            raise ConfigError("m must be >= 1")
        if width < 2:
            raise ConfigError("receiver width must be >= 2")
        rng = np.random.default_rng([_INIT_SEED, seed])
        cin = _RX_CHANNELS[rx_input]
        w2 = max(width // 2, 2)
        self.m = int(m)
        self.width = int(width)
        self.rx_input = rx_input
        stack = [T.SeparableConv2d("rx/in", cin, w2, (3, 3), rng=rng, dtype=dtype)]
        prev = w2
        for i, (kernel, dil) in enumerate(_BLOCK_PLAN, start=1):
            stack.append(T.ResidualBlock(f"rx/res{i}", prev, width, kernel,
                                         dilation=dil, rng=rng, dtype=dtype))
            prev = width
        stack.append(T.Conv2d("rx/out", width, m, (1, 1), rng=rng, dtype=dtype))
        self.net = T.Network(stack)

    def forward(self, x: T.DiffTensor, training: bool = False,
                update_stats: bool = True) -> T.DiffTensor:
        expected = _RX_CHANNELS[self.rx_input]
        if x.values.shape[-1] != expected:
            raise ConfigError(
                f"receiver expects {expected} input channels for "
                f"rx_input={self.rx_input!r}, got {x.values.shape[-1]}")
        t = x
        for layer in self.net.layers:
            t = layer.forward(t, training, update_stats)
        return t

    def params(self):
        return self.net.params()

    @property
    def param_count(self) -> int:
        return self.net.param_count()

    def astype(self, dtype) -> None:
        self.net.astype(dtype)

    def zero_grad(self) -> None:
        self.net.zero_grad()

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, state) -> None:
        self.net.load_state_dict(state)

    def config(self) -> dict:
        return {"m": self.m, "width": self.width, "rx_input": self.rx_input}


def build_receiver_input(y, pattern: PilotPattern, csi, rx_input: str,
                         dtype=np.float64) -> np.ndarray:
    """Stack the receiver's input channels: (..., n_S, n_T, C) real array."""
    vals = y.values if isinstance(y, ResourceGrid) else np.asarray(y)
    vals = np.asarray(vals, dtype=np.complex128)
    if vals.shape[-2:] != (pattern.n_s, pattern.n_t):
        raise ConfigError(f"grid shape {vals.shape[-2:]} does not match pattern")
    parts = [channels_from_complex(vals)]
    if rx_input in ("pilots", "pilots+csi"):
        pilots = np.broadcast_to(channels_from_complex(pattern.values),
                                 parts[0].shape)
        parts.append(pilots)
    if rx_input == "pilots+csi":
        if csi is None:
            raise ConfigError("rx_input 'pilots+csi' requires a channel grid")
        cvals = csi.values if isinstance(csi, ResourceGrid) else np.asarray(csi)
        cvals = np.asarray(cvals, dtype=np.complex128)
        if cvals.shape != vals.shape:
            raise ConfigError("channel grid shape does not match received grid")
        parts.append(channels_from_complex(cvals))
    elif csi is not None:
        raise ConfigError(f"rx_input {rx_input!r} does not accept a channel grid")
    return np.concatenate(parts, axis=-1).astype(dtype)


def neural_receive(y, pattern: PilotPattern, net: ReceiverNet,
                   csi=None) -> np.ndarray:
    """Inference-mode LLRs (..., n_S, n_T, m) for a received grid."""
    net_dtype = next(iter(net.params()))[1].values.dtype
    x = build_receiver_input(y, pattern, csi, net.rx_input, dtype=net_dtype)
    lead = x.shape[:-3]
    xt = T.const(x.reshape(-1, *x.shape[-3:]))
    out = net.forward(xt, training=False)
    llr = out.values.astype(np.float64)
    if not np.all(np.isfinite(llr)):
        raise NumericError("receiver produced non-finite LLRs")
    return llr.reshape(*lead, pattern.n_s, pattern.n_t, net.m)


def data_llrs(llr_grid: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Flatten an LLR grid to data-RE bit order matching the mapper."""
    m = llr_grid.shape[-1]
    lead = llr_grid.shape[:-3]
    flat = llr_grid.reshape(*lead, pattern.n_s * pattern.n_t, m)
    return flat[..., pattern.data_indices, :].reshape(*lead, -1)
