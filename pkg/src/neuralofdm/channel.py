"""Doubly selective tapped-delay-line channel with Jakes/Clarke Doppler.

Tap trajectories are synthesized by a sum of 32 sinusoids per tap with
uniform arrival angles, which reproduces the Clarke autocorrelation
J0(2 pi f_d tau) exactly in expectation.  The phasors advance by a per-sample
rotation (a multiplicative recurrence) so generation cost is independent of
the trig-call count.

Speed of light is taken as c = 3e8 m/s throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import ResourceGrid

SPEED_OF_LIGHT = 3.0e8
SINUSOIDS_PER_TAP = 32

# 3GPP TR 38.901 Table 7.7.2-1, TDL-A: normalized delays and powers [dB]
_TDLA_DELAYS = np.array([
    0.0000, 0.3819, 0.4025, 0.5868, 0.4610, 0.5375, 0.6708, 0.5750,
    0.7618, 1.5375, 1.8978, 2.2242, 2.1718, 2.4942, 2.5119, 3.0582,
    4.0810, 4.4579, 4.5695, 4.7966, 5.0066, 5.3043, 9.6586,
])
_TDLA_POWERS_DB = np.array([
    -13.4, 0.0, -2.2, -4.0, -6.0, -8.2, -9.9, -10.5, -7.5, -15.9,
    -6.6, -16.7, -12.4, -15.2, -10.8, -11.3, -12.7, -16.2, -18.3,
    -18.9, -16.6, -19.9, -29.7,
])


@dataclass
class TdlProfile:
    """Tap delays (seconds) and linear powers summing to one."""

    delays: np.ndarray
    powers: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=np.float64)
        self.powers = np.asarray(self.powers, dtype=np.float64)
        if np.any(self.powers < 0):
            raise ConfigError("tap powers must be nonnegative")
        if np.any(np.diff(self.delays) < 0):
            raise ConfigError("tap delays must be nondecreasing")
        total = self.powers.sum()
        if total <= 0:
            raise ConfigError("tap powers sum to zero")
        self.powers = self.powers / total

    @classmethod
    def tdl_a(cls, rms_delay_spread: float = 100e-9) -> "TdlProfile":
        powers = 10.0 ** (_TDLA_POWERS_DB / 10.0)
        order = np.argsort(_TDLA_DELAYS, kind="stable")
        return cls(_TDLA_DELAYS[order] * rms_delay_spread, powers[order],
                   name="tdl-a")

    @classmethod
    def single_tap(cls) -> "TdlProfile":
        return cls(np.array([0.0]), np.array([1.0]), name="awgn-flat")

    @classmethod
    def from_config(cls, section: dict) -> "TdlProfile":
        name = section.get("name", "custom")
        if "delays_ns" in section:
            delays = np.asarray(section["delays_ns"], dtype=np.float64) * 1e-9
            powers = 10.0 ** (np.asarray(section["powers_db"], dtype=np.float64) / 10.0)
            return cls(delays, powers, name=name)
        if name == "tdl-a":
            return cls.tdl_a(float(section.get("rms_delay_spread_ns", 100)) * 1e-9)
        if name in ("awgn-flat", "single-tap", "flat"):
            return cls.single_tap()
        raise ConfigError(f"unknown channel profile '{name}'")

    def sample_taps(self, sample_period: float, n_cp: int | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
        """Quantize to integer sample delays, merging power in shared bins."""
        idx = np.round(self.delays / sample_period).astype(int)
        if n_cp is not None and self.delays.max() >= n_cp * sample_period:
            raise ConfigError(
                f"delay spread {self.delays.max()*1e9:.0f} ns exceeds the "
                f"cyclic prefix ({n_cp} samples of {sample_period*1e9:.0f} ns)")
        uniq = np.unique(idx)
        powers = np.array([self.powers[idx == k].sum() for k in uniq])
        return uniq, powers


@dataclass
class ChannelRealization:
    """Per-tap complex trajectories at the sample rate.

    taps has shape (..., n_taps, n_samples); delays are integer sample
    offsets matching the tap axis.  For batched realizations ``speed`` holds
    the per-element speeds.
    """

    taps: np.ndarray
    delays: np.ndarray
    speed: float | np.ndarray
    doppler: float | np.ndarray
    sample_period: float
    seed: object = None

    @property
    def n_samples(self) -> int:
        return self.taps.shape[-1]

    @property
    def max_delay(self) -> int:
        return int(self.delays.max())


def doppler_shift(speed: float, carrier_freq: float) -> float:
    return speed * carrier_freq / SPEED_OF_LIGHT


def generate_tdl(profile: TdlProfile, speed: float, carrier_freq: float,
                 n_samples: int, sample_period: float, seed=None,
                 batch: int | None = None, n_cp: int | None = None,
                 speeds: np.ndarray | None = None) -> ChannelRealization:
    """Draw one (or a batch of) TDL realizations.

    Each tap is an independent sum of SINUSOIDS_PER_TAP complex sinusoids
    with Clarke-distributed Doppler frequencies f_d cos(alpha) and uniform
    phases.  ``speeds`` overrides ``speed`` per batch element.
    """
    delays, powers = profile.sample_taps(sample_period, n_cp=n_cp)
    n_taps = delays.size
    rng = np.random.default_rng(seed)
    squeeze = batch is None
    b = 1 if batch is None else batch
    if speeds is None:
        u = np.full(b, float(speed))
    else:
        u = np.asarray(speeds, dtype=np.float64)
        if u.shape != (b,):
            raise ConfigError(f"speeds shape {u.shape} does not match batch {b}")
    fd = u * carrier_freq / SPEED_OF_LIGHT

    m = SINUSOIDS_PER_TAP
    alpha = rng.uniform(0.0, 2.0 * np.pi, size=(b, n_taps, m))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(b, n_taps, m))
    omega = 2.0 * np.pi * fd[:, None, None] * np.cos(alpha)

    lane = np.exp(1j * phi)
    step = np.exp(1j * omega * sample_period)
    out = np.empty((b, n_taps, n_samples), dtype=np.complex128)
    for t in range(n_samples):
        out[:, :, t] = lane.sum(axis=-1)
        lane *= step
    out *= np.sqrt(powers / m)[None, :, None]

    if squeeze:
        return ChannelRealization(out[0], delays, float(u[0]), float(fd[0]),
                                  sample_period, seed=seed)
    return ChannelRealization(out, delays, u, fd, sample_period, seed=seed)


def apply_channel(frame, ch: ChannelRealization, n0: float = 0.0, seed=None):
    """y[b] = sum_l h_l[b] x[b - l] + w[b], w ~ CN(0, n0) i.i.d.

    Accepts a TimeDomainFrame or a bare complex array; returns the same kind.
    Batched taps broadcast against batched frames.
    """
    from .waveform import TimeDomainFrame

    is_frame = isinstance(frame, TimeDomainFrame)
    x = frame.samples if is_frame else np.asarray(frame)
    n = x.shape[-1]
    if ch.n_samples < n:
        raise ConfigError(
            f"channel realization covers {ch.n_samples} samples, frame has {n}")
    y = np.zeros(np.broadcast_shapes(x.shape, ch.taps.shape[:-2] + (n,)),
                 dtype=np.complex128)
    for i, d in enumerate(ch.delays):
        d = int(d)
        if d >= n:
            continue
        y[..., d:] += ch.taps[..., i, d:n] * x[..., :n - d]
    if n0 > 0:
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y += np.sqrt(n0 / 2.0) * w
    if is_frame:
        return TimeDomainFrame(y, frame.n_s, frame.n_cp, frame.delta_f)
    return y


def channel_ops(ch: ChannelRealization, n: int):
    """(forward, adjoint) pair of the noiseless channel for the autodiff bridge."""
    taps = ch.taps
    delays = [int(d) for d in ch.delays]

    def fwd(x):
        y = np.zeros(np.broadcast_shapes(x.shape, taps.shape[:-2] + (n,)),
                     dtype=np.complex128)
        for i, d in enumerate(delays):
            if d < n:
                y[..., d:] += taps[..., i, d:n] * x[..., :n - d]
        return y

    def adj(g):
        x = np.zeros(g.shape, dtype=np.complex128)
        for i, d in enumerate(delays):
            if d < n:
                x[..., :n - d] += np.conj(taps[..., i, d:n]) * g[..., d:]
        return x

    return fwd, adj


def freq_csi(ch: ChannelRealization, n_s: int, n_t: int, n_cp: int) -> ResourceGrid:
    """Frequency response per RE with taps frozen at each symbol midpoint."""
    sym_len = n_s + n_cp
    mids = np.arange(n_t) * sym_len + n_cp + n_s // 2
    if mids.max() >= ch.n_samples:
        raise ConfigError("realization does not cover all OFDM symbols")
    h_mid = ch.taps[..., mids]  # (..., n_taps, n_T)
    k = np.arange(n_s)
    phase = np.exp(-2j * np.pi * np.outer(k, ch.delays) / n_s)  # (n_S, n_taps)
    h = np.einsum("kl,...lt->...kt", phase, h_mid)
    return ResourceGrid(h, role="csi")


def ici_fraction(speed: float, carrier_freq: float, delta_f: float) -> float:
    """Power fraction scattered off the diagonal by Doppler spread.

    gamma = 1 - sinc^2(nu_max) with nu_max = u f_c / (c delta_f); the
    complement sinc^2 is the power kept by the useful (diagonal) term when
    a tap rotates linearly across one symbol.
    """
    if delta_f <= 0:
        raise ConfigError("subcarrier spacing must be positive")
    nu_max = speed * carrier_freq / (SPEED_OF_LIGHT * delta_f)
    return float(1.0 - np.sinc(nu_max) ** 2)


def effective_noise(n0: float, speed: float, carrier_freq: float,
                    delta_f: float) -> float:
    """N0_eff = N0 + gamma_ICI for unit-power grids."""
    return n0 + ici_fraction(speed, carrier_freq, delta_f)
