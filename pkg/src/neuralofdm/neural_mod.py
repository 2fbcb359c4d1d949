"""Convolutional modulator, grid power normalization, superimposed pilots,
and centroid collapse of a trained modulator to a fixed constellation.

The modulator maps the complex transmit grid, viewed as two real channels,
through a small residual conv stack and adds the result to its input (a
global complex identity skip), so an untrained or zeroed net passes symbols
through unchanged.  After the net, data-RE power is renormalized to 1 and
pilot REs are re-stamped with their configured values, which keeps the
average grid power at exactly 1 for unit-magnitude pilots and preserves the
classical receivers' pilot assumptions.
"""

from __future__ import annotations

import numpy as np

from . import tensorkit as T
from .errors import ConfigError
from .grid import Constellation, PilotPattern, ResourceGrid, normalize_constellation

MODULATION_MODES = ("qam", "gs", "deepofdm", "deepofdm-linear", "deepofdm-gs", "sip")

_INIT_SEED = 0x3A0D
_SIP_SEED = 0x51AB


def sip_pilot_grid(n_s: int, n_t: int, seed: int = _SIP_SEED) -> np.ndarray:
    """Dense unit-modulus QPSK grid used as the superimposed pilot sequence."""
    rng = np.random.default_rng([seed, n_s, n_t])
    q = rng.integers(0, 4, size=(n_s, n_t))
    return np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * q))


class ModulatorNet:
    """Residual conv stack: 2 -> width/2 (3x3) -> res width (5x5) -> 1x1
    projection -> res width (5x5) -> 2 (1x1), all dilation (1, 1)."""

    def __init__(self, width: int = 48, linear: bool = False, seed: int = 0,
                 dtype=None):
        if width < 2:
            raise ConfigError("modulator width must be >= 2")
        rng = np.random.default_rng([_INIT_SEED, seed])
        w2 = max(width // 2, 2)
        self.width = int(width)
        self.linear = bool(linear)
        self.net = T.Network([
            T.SeparableConv2d("mod/in", 2, w2, (3, 3), rng=rng, dtype=dtype),
            T.ResidualBlock("mod/res1", w2, width, (5, 5), linear=linear,
                            rng=rng, dtype=dtype),
            T.Conv2d("mod/proj", width, width, (1, 1), rng=rng, dtype=dtype),
            T.ResidualBlock("mod/res2", width, width, (5, 5), linear=linear,
                            rng=rng, dtype=dtype),
            T.Conv2d("mod/out", width, 2, (1, 1), rng=rng, dtype=dtype),
        ])

    def forward(self, x: T.DiffTensor, training: bool = False,
                update_stats: bool = True) -> T.DiffTensor:
        t = x
        for layer in self.net.layers:
            t = layer.forward(t, training, update_stats)
        return T.add(t, x)  # global complex identity skip

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
        return {"width": self.width, "linear": self.linear}


def channels_from_complex(vals: np.ndarray) -> np.ndarray:
    """(..., H, W) complex -> (..., H, W, 2) real in the level dtype."""
    return np.stack([vals.real, vals.imag], axis=-1)


def complex_from_channels(vals: np.ndarray) -> np.ndarray:
    return vals[..., 0] + 1j * vals[..., 1]


def modulate_diff(x: T.DiffTensor, net: ModulatorNet, pattern: PilotPattern,
                  training: bool = False, update_stats: bool = True) -> T.DiffTensor:
    """Differentiable modulator pipeline on (B, n_S, n_T, 2) tensors.

    Net output is power-normalized over the data REs and the pilot values are
    stamped back as constants, so gradients flow only through the data REs.
    """
    if x.values.shape[1:3] != (pattern.n_s, pattern.n_t):
        raise ConfigError(
            f"grid {x.values.shape[1:3]} does not match pattern "
            f"({pattern.n_s}, {pattern.n_t})")
    y = net.forward(x, training, update_stats)
    z = T.normalize_data_power(y, ~pattern.mask)
    if pattern.n_pilots == 0:
        return z
    pilots = channels_from_complex(pattern.values).astype(x.values.dtype)
    tile = np.broadcast_to(pilots, z.values.shape).copy()
    return T.add(z, T.const(tile, name="pilots"))


def neural_modulate(x, net: ModulatorNet, pattern: PilotPattern) -> ResourceGrid:
    """Inference-mode modulation of a complex grid (..., n_S, n_T)."""
    vals = x.values if isinstance(x, ResourceGrid) else np.asarray(x)
    vals = np.asarray(vals, dtype=np.complex128)
    lead = vals.shape[:-2]
    if vals.shape[-2:] != (pattern.n_s, pattern.n_t):
        raise ConfigError(f"grid shape {vals.shape[-2:]} does not match pattern")
    batch = vals.reshape(-1, pattern.n_s, pattern.n_t)
    net_dtype = next(iter(net.params()))[1].values.dtype
    xt = T.const(channels_from_complex(batch).astype(net_dtype))
    out = modulate_diff(xt, net, pattern, training=False)
    res = complex_from_channels(out.values.astype(np.float64))
    return ResourceGrid(res.reshape(*lead, pattern.n_s, pattern.n_t), role="tx")


def sip_modulate(x, pilot_values: np.ndarray, alpha) -> ResourceGrid:
    """Superimposed pilots: X = sqrt(1-A)*X_data + sqrt(A)*P per RE."""
    vals = x.values if isinstance(x, ResourceGrid) else np.asarray(x)
    vals = np.asarray(vals, dtype=np.complex128)
    p = np.asarray(pilot_values, dtype=np.complex128)
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ConfigError("pilot energy fraction must be within [0, 1]")
    out = np.sqrt(1.0 - a) * vals + np.sqrt(a) * p
    return ResourceGrid(out, role="tx")


def collapse_to_gs(net: ModulatorNet, constellation: Constellation,
                   pattern: PilotPattern, n_grids: int = 32,
                   seed: int = 0xC011) -> Constellation:
    """Average the modulator's data-RE outputs per input point (centroids).

    Random context grids are drawn from the constellation itself; the result
    is a fixed geometrically shaped constellation with the net discarded.
    """
    rng = np.random.default_rng([seed, constellation.m])
    n_pts = constellation.points.size
    labels = rng.integers(0, n_pts, size=(n_grids, pattern.n_s, pattern.n_t))
    grids = constellation.points[labels]
    grids.reshape(n_grids, -1)[:, pattern.pilot_indices] = \
        pattern.values.reshape(-1)[pattern.pilot_indices]
    out = neural_modulate(grids, net, pattern).values

    out_data = out.reshape(n_grids, -1)[:, pattern.data_indices].ravel()
    lab_data = labels.reshape(n_grids, -1)[:, pattern.data_indices].ravel()
    sums = np.zeros(n_pts, dtype=np.complex128)
    np.add.at(sums, lab_data, out_data)
    counts = np.bincount(lab_data, minlength=n_pts)
    if np.any(counts == 0):
        raise ConfigError("not enough context grids to observe every point")
    return normalize_constellation(sums / counts, m=constellation.m)


def count_complexity(net, grid: tuple[int, int] = (128, 14)) -> tuple[int, int]:
    """(parameter count, multiply-accumulate count) for one grid pass.

    MACs count kernel multiplies of convolutions plus one multiply per
    element for batch-norm scaling; activations and bias adds are free.
    """
    h, w = grid
    params = 0
    macs = 0

    def visit(layer):
        nonlocal params, macs
        if isinstance(layer, T.ResidualBlock):
            for child in layer._children:
                visit(child)
            return
        params += sum(p.values.size for _, p in layer.params())
        kh, kw = getattr(layer, "kernel_size", (1, 1))
        if isinstance(layer, T.SeparableConv2d):
            macs += h * w * (kh * kw * layer.in_channels
                             + layer.in_channels * layer.out_channels)
        elif isinstance(layer, T.Conv2d):
            macs += h * w * kh * kw * layer.in_channels * layer.out_channels
        elif isinstance(layer, T.BatchNorm2d):
            macs += h * w * layer.in_channels

    layers = net.net.layers if hasattr(net, "net") else net.layers
    for layer in layers:
        visit(layer)
    return params, macs
