"""End-to-end optimization of constellation, modulator, and receiver.

Training runs without channel coding: each step maps fresh random bits onto
the (learnable) constellation, shapes the grid, OFDM-modulates, passes the
frame through freshly drawn doubly selective channels at per-element uniform
random speed and SNR, demodulates, and scores the receiver's LLRs with a
bitwise rate proxy.  A smooth-max PAPR penalty is annealed in over the later
steps.  Everything is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensorkit as T
from .channel import (
    ChannelRealization,
    TdlProfile,
    channel_ops,
    freq_csi,
    generate_tdl,
)
from .errors import ConfigError, NumericError
from .grid import (
    PilotPattern,
    make_pilot_pattern,
    normalize_constellation,
    qam_constellation,
)
from .neural_mod import (
    MODULATION_MODES,
    ModulatorNet,
    channels_from_complex,
    complex_from_channels,
    modulate_diff,
    sip_pilot_grid,
)
from .neural_rx import RX_INPUT_MODES, ReceiverNet
from .persist import WeightsBundle, bundle_from_nets, save_weights
from .waveform import demodulate_ops, modulate_ops

_TRAIN_STREAM = 0x7EA1


def _uses_modnet(mode: str) -> bool:
    return mode.startswith("deepofdm")


def _trains_constellation(mode: str) -> bool:
    return mode != "qam"


@dataclass
class TrainConfig:
    """Knobs for one training run; defaults are the full-scale setup."""

    m: int = 6
    mode: str = "deepofdm"
    pilots: str = "0P"
    rx_input: str = "none"
    n_s: int = 128
    n_t: int = 14
    n_cp: int = 6
    delta_f: float = 15e3
    carrier_freq: float = 2e9
    batch_size: int = 128
    learning_rate: float = 1e-3
    speed_range: tuple = (0.0, 100.0)
    snr_range_db: tuple = (0.0, 16.0)
    n_steps: int = 1000
    lambda_max: float = 0.01
    ramp_frac: float = 0.6
    papr_tau: float = 10.0
    seed: int = 0
    mod_width: int = 48
    rx_width: int = 128
    sip_alpha: float = 0.25
    channel_pool: int = 0
    channel_profile: dict = field(default_factory=lambda: {"name": "tdl-a"})
    dtype: str = "float32"
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        self.speed_range = tuple(float(v) for v in self.speed_range)
        self.snr_range_db = tuple(float(v) for v in self.snr_range_db)
        if self.mode not in MODULATION_MODES:
            raise ConfigError(f"unknown modulation mode '{self.mode}'")
        if self.rx_input not in RX_INPUT_MODES:
            raise ConfigError(f"unknown receiver input mode '{self.rx_input}'")
        if self.m < 1:
            raise ConfigError("need at least one bit per symbol")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.n_steps < 1:
            raise ConfigError("step count must be at least 1")
        lo, hi = self.speed_range
        if not (0.0 <= lo <= hi):
            raise ConfigError(f"invalid speed range {self.speed_range}")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ConfigError(f"invalid SNR range {self.snr_range_db}")
        if self.lambda_max < 0:
            raise ConfigError("PAPR weight must be non-negative")
        if not 0.0 <= self.ramp_frac <= 1.0:
            raise ConfigError("ramp fraction must lie in [0, 1]")
        if self.papr_tau <= 0:
            raise ConfigError("smooth-max temperature must be positive")
        if not 0.0 <= self.sip_alpha <= 1.0:
            raise ConfigError("pilot energy fraction must lie in [0, 1]")
        if self.mode == "sip" and self.pilots.strip().upper() != "0P":
            raise ConfigError(
                "superimposed pilots replace orthogonal pilot symbols; use 0P")
        if self.channel_pool < 0:
            raise ConfigError("channel pool size cannot be negative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported training dtype '{self.dtype}'")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint interval cannot be negative")
        if self.checkpoint_every > 0 and not self.checkpoint_dir:
            raise ConfigError("checkpointing requires a checkpoint directory")

    @classmethod
    def from_dict(cls, section: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**section)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["speed_range"] = list(self.speed_range)
        out["snr_range_db"] = list(self.snr_range_db)
        return out


@dataclass
class TrainHistory:
    """Per-step training trace; all entries finite, step index monotone."""

    steps: list = field(default_factory=list)
    rate_loss: list = field(default_factory=list)
    papr: list = field(default_factory=list)
    lambda_papr: list = field(default_factory=list)
    total_loss: list = field(default_factory=list)
    speed_mean: list = field(default_factory=list)
    snr_mean_db: list = field(default_factory=list)

    def append(self, step, rate, papr, lam, total, speed_mean, snr_mean) -> None:
        self.steps.append(int(step))
        self.rate_loss.append(float(rate))
        self.papr.append(float(papr))
        self.lambda_papr.append(float(lam))
        self.total_loss.append(float(total))
        self.speed_mean.append(float(speed_mean))
        self.snr_mean_db.append(float(snr_mean))

    def __len__(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


class DivergenceError(NumericError):
    """Training loss left the finite range; carries the history so far."""

    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def smoothed(values, window: int = 20) -> np.ndarray:
    """Moving average with a ramp-up head, same length as the input."""
    v = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ConfigError("smoothing window must be at least 1")
    c = np.concatenate([[0.0], np.cumsum(v)])
    n = np.minimum(np.arange(1, v.size + 1), window)
    start = np.arange(1, v.size + 1) - n
    return (c[start + n] - c[start]) / n


def papr_schedule(step: int, n_steps: int, lambda_max: float,
                  ramp_frac: float = 0.6) -> float:
    """Zero for the leading fraction of steps, then linear up to lambda_max."""
    if lambda_max == 0.0 or n_steps <= 1 or ramp_frac >= 1.0:
        return 0.0
    p = step / (n_steps - 1)
    if p <= ramp_frac:
        return 0.0
    return lambda_max * (p - ramp_frac) / (1.0 - ramp_frac)


def rate_loss(llrs, bits) -> T.DiffTensor:
    """Bitwise rate proxy: mean BCE of the LLRs in bits, minus one.

    Zero LLRs score exactly 0; perfectly saturated correct LLRs approach -1.
    LLRs are clipped to +-30 first, which also bounds the gradient.
    """
    if not isinstance(llrs, T.DiffTensor):
        llrs = T.const(np.asarray(llrs, dtype=np.float64))
    return T.rate_bce(T.clip(llrs, -30.0, 30.0), bits)


def papr_value(frame_vals: np.ndarray, tau: float = 10.0) -> float:
    """Smooth-max PAPR of an (..., L, 2) frame, batch mean, no graph."""
    p = frame_vals[..., 0].astype(np.float64) ** 2 \
        + frame_vals[..., 1].astype(np.float64) ** 2
    mu = p.mean(axis=-1)
    m0 = p.max(axis=-1)
    z = np.exp(tau * (p - m0[..., None])).sum(axis=-1)
    return float(((m0 + np.log(z) / tau) / mu).mean())


def total_loss(l_rate: T.DiffTensor, frame: T.DiffTensor, lambda_papr: float,
               tau: float = 10.0) -> T.DiffTensor:
    """Rate loss plus the annealed smooth-max PAPR penalty."""
    if lambda_papr < 0:
        raise ConfigError("PAPR weight must be non-negative")
    if lambda_papr == 0.0:
        return l_rate
    return T.add(l_rate, T.scale(T.papr_smoothmax(frame, tau), lambda_papr))


class Adam:
    """Adaptive-moment optimizer over named parameter tensors."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names in optimizer")
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = float(eps)
        self.t = 0
        self._m = {n: np.zeros_like(p.values) for n, p in self.params}
        self._v = {n: np.zeros_like(p.values) for n, p in self.params}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.params:
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.values -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


@dataclass
class _ChannelPool:
    """Pre-drawn tap trajectories reused across steps with fresh phases."""

    taps: np.ndarray
    delays: np.ndarray
    speeds: np.ndarray
    sample_period: float
    carrier_freq: float

    def draw(self, rng: np.random.Generator, batch: int) -> ChannelRealization:
        idx = rng.integers(0, self.taps.shape[0], size=batch)
        phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=batch))
        taps = self.taps[idx] * phase[:, None, None]
        speeds = self.speeds[idx]
        fd = speeds * self.carrier_freq / 3.0e8
        return ChannelRealization(taps, self.delays, speeds, fd,
                                  self.sample_period)


def _build_pool(cfg: TrainConfig, profile: TdlProfile, n_frame: int,
                sample_period: float, rng: np.random.Generator) -> _ChannelPool:
    speeds = rng.uniform(cfg.speed_range[0], cfg.speed_range[1],
                         size=cfg.channel_pool)
    ch = generate_tdl(profile, 0.0, cfg.carrier_freq, n_frame, sample_period,
                      seed=rng, batch=cfg.channel_pool, n_cp=cfg.n_cp,
                      speeds=speeds)
    return _ChannelPool(ch.taps, ch.delays, speeds, sample_period,
                        cfg.carrier_freq)


def _bits_to_labels(bits: np.ndarray, m: int) -> np.ndarray:
    weights = 1 << np.arange(m - 1, -1, -1)
    return (bits * weights).sum(axis=-1)


def build_tx_grid(labels: np.ndarray, points: T.DiffTensor,
                  pattern: PilotPattern, cfg: TrainConfig,
                  mod_net: ModulatorNet | None, sip_pilots: np.ndarray | None,
                  training: bool = True) -> T.DiffTensor:
    """Differentiable transmit grid (B, n_S, n_T, 2) for any modulation mode."""
    sym = T.gather_points(points, labels)
    grid = T.scatter_re(sym, pattern.data_indices, (pattern.n_s, pattern.n_t))
    if _uses_modnet(cfg.mode):
        if pattern.n_pilots > 0:
            pil = channels_from_complex(pattern.values).astype(grid.values.dtype)
            grid = T.add(grid, T.const(
                np.broadcast_to(pil, grid.values.shape).copy()))
        return modulate_diff(grid, mod_net, pattern, training=training)
    if cfg.mode == "sip":
        mix = channels_from_complex(
            np.sqrt(cfg.sip_alpha) * sip_pilots).astype(grid.values.dtype)
        return T.add(T.scale(grid, np.sqrt(1.0 - cfg.sip_alpha)),
                     T.const(np.broadcast_to(mix, grid.values.shape).copy()))
    if pattern.n_pilots > 0:
        pil = channels_from_complex(pattern.values).astype(grid.values.dtype)
        grid = T.add(grid, T.const(
            np.broadcast_to(pil, grid.values.shape).copy()))
    return grid


def train_end_to_end(config: TrainConfig, progress=None
                     ) -> tuple[WeightsBundle, TrainHistory]:
    """Run the optimization loop; returns the trained bundle and the trace.

    ``progress`` is an optional callable(step, history) invoked after every
    step, used by the CLI for periodic logging.
    """
    cfg = config
    dtype = np.dtype(cfg.dtype).type
    profile = TdlProfile.from_config(cfg.channel_profile)
    pattern = make_pilot_pattern(cfg.pilots, cfg.n_s, cfg.n_t)
    sample_period = 1.0 / (cfg.n_s * cfg.delta_f)
    n_frame = cfg.n_t * (cfg.n_s + cfg.n_cp)
    mod_fwd, mod_adj = modulate_ops(cfg.n_s, cfg.n_t, cfg.n_cp)
    dem_fwd, dem_adj = demodulate_ops(cfg.n_s, cfg.n_t, cfg.n_cp)

    constellation = qam_constellation(cfg.m)
    points_exact = constellation.points.copy()  # float64 master, bundle source
    points = T.parameter(
        channels_from_complex(constellation.points).astype(dtype),
        name="constellation")
    mod_net = None
    if _uses_modnet(cfg.mode):
        mod_net = ModulatorNet(width=cfg.mod_width,
                               linear=cfg.mode == "deepofdm-linear",
                               seed=cfg.seed, dtype=dtype)
    rx_net = ReceiverNet(m=cfg.m, width=cfg.rx_width, rx_input=cfg.rx_input,
                         seed=cfg.seed, dtype=dtype)
    sip_pilots = sip_pilot_grid(cfg.n_s, cfg.n_t) if cfg.mode == "sip" else None

    trainables = []
    if _trains_constellation(cfg.mode):
        trainables.append(("constellation", points))
    if mod_net is not None:
        trainables.extend(mod_net.params())
    trainables.extend(rx_net.params())
    opt = Adam(trainables, lr=cfg.learning_rate)

    rng = np.random.default_rng([_TRAIN_STREAM, cfg.seed])
    pool = None
    if cfg.channel_pool > 0:
        pool = _build_pool(cfg, profile, n_frame, sample_period, rng)

    pil_ch = None
    if cfg.rx_input in ("pilots", "pilots+csi"):
        pil_ch = channels_from_complex(pattern.values).astype(dtype)

    history = TrainHistory()
    s = cfg.batch_size
    for step in range(cfg.n_steps):
        bits = rng.integers(0, 2, size=(s, pattern.n_data, cfg.m)).astype(np.int8)
        labels = _bits_to_labels(bits, cfg.m)
        speeds = rng.uniform(cfg.speed_range[0], cfg.speed_range[1], size=s)
        snr_db = rng.uniform(cfg.snr_range_db[0], cfg.snr_range_db[1], size=s)
        n0 = 10.0 ** (-snr_db / 10.0)

        if pool is not None:
            ch = pool.draw(rng, s)
        else:
            ch = generate_tdl(profile, 0.0, cfg.carrier_freq, n_frame,
                              sample_period, seed=rng, batch=s, n_cp=cfg.n_cp,
                              speeds=speeds)
            speeds = ch.speed
        grid = build_tx_grid(labels, points, pattern, cfg, mod_net, sip_pilots)
        frame = T.complex_linear(grid, mod_fwd, mod_adj, name="ofdm")

        ch_fwd, ch_adj = channel_ops(ch, n_frame)
        faded = T.complex_linear(frame, ch_fwd, ch_adj, name="channel")
        noise = (rng.standard_normal((s, n_frame, 2))
                 * np.sqrt(n0 / 2.0)[:, None, None]).astype(dtype)
        received = T.add(faded, T.const(noise))
        y_grid = T.complex_linear(received, dem_fwd, dem_adj, name="ofdm-inv")

        parts = [y_grid]
        if pil_ch is not None:
            parts.append(T.const(
                np.broadcast_to(pil_ch, y_grid.values.shape).copy()))
        if cfg.rx_input == "pilots+csi":
            csi = freq_csi(ch, cfg.n_s, cfg.n_t, cfg.n_cp)
            parts.append(T.const(
                channels_from_complex(csi.values).astype(dtype)))
        x_in = T.concat(parts, axis=-1) if len(parts) > 1 else y_grid

        llr_grid = rx_net.forward(x_in, training=True)
        llr_data = T.gather_re(llr_grid, pattern.data_indices)
        l_rate = rate_loss(llr_data, bits)

        lam = papr_schedule(step, cfg.n_steps, cfg.lambda_max, cfg.ramp_frac)
        total = total_loss(l_rate, frame, lam, cfg.papr_tau)
        papr_term = papr_value(frame.values, cfg.papr_tau)
        rate_val = float(l_rate.values)
        total_val = float(total.values)
        if not (np.isfinite(total_val) and np.isfinite(rate_val)):
            raise DivergenceError(
                f"loss diverged at step {step} "
                f"(rate {rate_val}, total {total_val})", history)

        T.backward(total)
        opt.step()
        opt.zero_grad()
        if _trains_constellation(cfg.mode):
            pts = complex_from_channels(points.values.astype(np.float64))
            points_exact = normalize_constellation(pts, cfg.m).points
            points.values = channels_from_complex(points_exact).astype(dtype)

        history.append(step, rate_val, papr_term, lam, total_val,
                       speeds.mean(), snr_db.mean())
        if progress is not None:
            progress(step, history)
        if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            bundle = _make_bundle(cfg, points_exact, mod_net, rx_net, step + 1)
            path = Path(cfg.checkpoint_dir) / f"checkpoint_{step + 1:06d}.npz"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_weights(bundle, path)

    return _make_bundle(cfg, points_exact, mod_net, rx_net, cfg.n_steps), history


def _make_bundle(cfg: TrainConfig, pts: np.ndarray,
                 mod_net: ModulatorNet | None, rx_net: ReceiverNet,
                 steps_done: int) -> WeightsBundle:
    meta = {
        "seed": cfg.seed,
        "steps": steps_done,
        "mode": cfg.mode,
        "pilots": cfg.pilots,
        "m": cfg.m,
        "grid": [cfg.n_s, cfg.n_t],
        "speed_range": list(cfg.speed_range),
        "snr_range_db": list(cfg.snr_range_db),
        "learning_rate": cfg.learning_rate,
        "lambda_max": cfg.lambda_max,
        "sip_alpha": cfg.sip_alpha if cfg.mode == "sip" else None,
    }
    return bundle_from_nets(cfg.mode, pts, rx_net, mod_net, metadata=meta)
