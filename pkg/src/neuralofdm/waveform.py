"""OFDM modulation and demodulation with a unitary FFT pair, plus PAPR.

The unitary normalization keeps per-RE and per-sample noise variances equal,
so one N0 describes both domains.  Frames support leading batch axes on the
sample stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FramingError, NumericError
from .grid import ResourceGrid


@dataclass
class TimeDomainFrame:
    """Complex sample stream of n_T OFDM symbols, each n_S + n_CP samples."""

    samples: np.ndarray
    n_s: int
    n_cp: int
    delta_f: float = 15e3

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        sym = self.n_s + self.n_cp
        if self.samples.shape[-1] % sym != 0:
            raise FramingError(
                f"frame length {self.samples.shape[-1]} is not a multiple of "
                f"n_S + n_CP = {sym}")

    @property
    def n_symbols(self) -> int:
        return self.samples.shape[-1] // (self.n_s + self.n_cp)

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.n_s * self.delta_f)


def ofdm_modulate(grid, n_cp: int, delta_f: float = 15e3) -> TimeDomainFrame:
    """Unitary IFFT per OFDM symbol followed by cyclic-prefix insertion."""
    vals = grid.values if isinstance(grid, ResourceGrid) else np.asarray(grid)
    n_s, n_t = vals.shape[-2], vals.shape[-1]
    if n_cp >= n_s:
        raise ConfigError(f"n_CP = {n_cp} must be smaller than n_S = {n_s}")
    time = np.fft.ifft(vals, axis=-2, norm="ortho")  # (..., n_S, n_T)
    time = np.moveaxis(time, -1, -2)                 # (..., n_T, n_S)
    sym = np.concatenate([time[..., n_s - n_cp:], time], axis=-1)
    samples = sym.reshape(*vals.shape[:-2], n_t * (n_s + n_cp))
    return TimeDomainFrame(samples, n_s, n_cp, delta_f)


def ofdm_demodulate(frame: TimeDomainFrame) -> ResourceGrid:
    """Strip cyclic prefixes and apply the unitary FFT per symbol."""
    n_s, n_cp = frame.n_s, frame.n_cp
    sym_len = n_s + n_cp
    s = frame.samples
    syms = s.reshape(*s.shape[:-1], -1, sym_len)[..., n_cp:]
    spec = np.fft.fft(syms, axis=-1, norm="ortho")   # (..., n_T, n_S)
    return ResourceGrid(np.moveaxis(spec, -1, -2), role="rx")


def papr(frame) -> np.ndarray | float:
    """Peak-to-average power ratio per frame, linear scale."""
    s = frame.samples if isinstance(frame, TimeDomainFrame) else np.asarray(frame)
    p = np.abs(s) ** 2
    mean = p.mean(axis=-1)
    if np.any(mean <= 0):
        raise NumericError("PAPR of a zero-energy frame")
    out = p.max(axis=-1) / mean
    return float(out) if out.ndim == 0 else out


def papr_db(frame) -> np.ndarray | float:
    return 10.0 * np.log10(papr(frame))


def ccdf_quantile(values_db: np.ndarray, prob: float) -> float:
    """The level x with P(value > x) = prob, from empirical samples."""
    return float(np.quantile(np.asarray(values_db), 1.0 - prob))


def export_iq(frame: TimeDomainFrame, path) -> None:
    """Interleaved (Re, Im) float32 little-endian pairs."""
    s = frame.samples.reshape(-1)
    buf = np.empty(2 * s.size, dtype="<f4")
    buf[0::2] = s.real
    buf[1::2] = s.imag
    buf.tofile(path)


def import_iq(path) -> np.ndarray:
    buf = np.fromfile(path, dtype="<f4")
    return buf[0::2] + 1j * buf[1::2]


# ---------------------------------------------------------------------------
# complex-linear (forward, adjoint) pairs for the autodiff bridge

def modulate_ops(n_s: int, n_t: int, n_cp: int):
    """(forward, adjoint) for grid -> time samples, complex arrays."""
    sym_len = n_s + n_cp

    def fwd(g):
        time = np.fft.ifft(g, axis=-2, norm="ortho")
        time = np.moveaxis(time, -1, -2)
        sym = np.concatenate([time[..., n_s - n_cp:], time], axis=-1)
        return sym.reshape(*g.shape[:-2], n_t * sym_len)

    def adj(y):
        sym = y.reshape(*y.shape[:-1], n_t, sym_len)
        main = sym[..., n_cp:].copy()
        main[..., n_s - n_cp:] += sym[..., :n_cp]  # CP copies pull gradient back
        spec = np.fft.fft(main, axis=-1, norm="ortho")
        return np.moveaxis(spec, -1, -2)

    return fwd, adj


def demodulate_ops(n_s: int, n_t: int, n_cp: int):
    """(forward, adjoint) for time samples -> grid, complex arrays."""
    sym_len = n_s + n_cp

    def fwd(y):
        sym = y.reshape(*y.shape[:-1], n_t, sym_len)[..., n_cp:]
        spec = np.fft.fft(sym, axis=-1, norm="ortho")
        return np.moveaxis(spec, -1, -2)

    def adj(g):
        time = np.fft.ifft(np.moveaxis(g, -2, -1), axis=-1, norm="ortho")
        sym = np.zeros((*time.shape[:-1], sym_len), dtype=time.dtype)
        sym[..., n_cp:] = time  # dropped CP samples get zero gradient
        return sym.reshape(*g.shape[:-2], n_t * sym_len)

    return fwd, adj
