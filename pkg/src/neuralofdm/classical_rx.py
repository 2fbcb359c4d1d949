"""Classical receivers: LS and LMMSE channel estimation, one-tap MMSE
equalization with exact per-bit LLRs, and iterative estimation/decoding.

Covariance convention: the channel grid H (n_S x n_T) is zero mean with
E[H[k,t] H*[k',t']] = R_F[k,k'] * R_T[t,t'], unit diagonal on both factors.
All estimators observe Y[k,t] = a[k,t] * H[k,t] + w on a subset of REs,
where a is a known pilot value or a soft symbol mean, and reduce to one
linear solve over that subset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import j0, logsumexp

from .channel import SPEED_OF_LIGHT, TdlProfile
from .errors import ConfigError, NumericError
from .fec import LdpcCode, ldpc_decode_soft, segment_payload
from .grid import Constellation, PilotPattern, ResourceGrid

_LOADING = 1e-9


@dataclass
class ChannelEstimate:
    """Estimated channel grid plus per-RE error variance (diag of R-tilde)."""

    h_hat: np.ndarray      # (..., n_S, n_T) complex
    err_var: np.ndarray    # (..., n_S, n_T) float, >= 0

    def __post_init__(self):
        self.h_hat = np.asarray(self.h_hat, dtype=np.complex128)
        self.err_var = np.asarray(self.err_var, dtype=np.float64)
        if np.any(self.err_var < 0):
            raise NumericError("error variances must be nonnegative")


@dataclass
class CovarianceModel:
    """Separable grid covariance R = R_F (x) R_T, kept in factored form."""

    r_f: np.ndarray  # (n_S, n_S) Hermitian PSD, unit diagonal
    r_t: np.ndarray  # (n_T, n_T) Hermitian PSD, unit diagonal

    def __post_init__(self):
        self.r_f = np.asarray(self.r_f, dtype=np.complex128)
        self.r_t = np.asarray(self.r_t, dtype=np.float64)
        for name, mat in (("r_f", self.r_f), ("r_t", self.r_t)):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ConfigError(f"{name} must be square")
            if not np.allclose(mat, mat.conj().T, atol=1e-10):
                raise ConfigError(f"{name} must be Hermitian")
            if np.linalg.eigvalsh(mat).min() < -1e-9:
                raise ConfigError(f"{name} must be positive semidefinite")
            if not np.allclose(np.diagonal(mat), 1.0, atol=1e-8):
                raise ConfigError(f"{name} must have unit diagonal")


def make_covariance(profile: TdlProfile, speed: float, carrier_freq: float,
                    n_s: int, n_t: int, n_cp: int,
                    delta_f: float = 15e3) -> CovarianceModel:
    """Covariance factors for a TDL profile at a given mobile speed.

    R_F is the DFT of the sample-quantized power-delay profile, matching how
    realizations are synthesized; R_T is the Clarke autocorrelation
    J0(2 pi f_d tau) at mid-symbol spacing.
    """
    sample_period = 1.0 / (n_s * delta_f)
    delays, powers = profile.sample_taps(sample_period, n_cp=n_cp)
    phase = np.exp(-2j * np.pi * np.outer(np.arange(n_s), delays) / n_s)
    r_f = (phase * powers) @ phase.conj().T

    f_d = speed * carrier_freq / SPEED_OF_LIGHT
    sym_len = (n_s + n_cp) * sample_period
    tau = (np.arange(n_t)[:, None] - np.arange(n_t)[None, :]) * sym_len
    r_t = j0(2.0 * np.pi * f_d * tau)
    return CovarianceModel(r_f, r_t)


# ----------------------------------------------------------------------
# core solver shared by pilot-only LMMSE and data-aided re-estimation


def _obs_split(flat_idx: np.ndarray, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    return flat_idx // n_t, flat_idx % n_t


def _solve_psd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        warnings.warn("singular LMMSE system; applying diagonal loading",
                      RuntimeWarning, stacklevel=3)
        c = np.linalg.cholesky(m + _LOADING * np.eye(m.shape[0]))
    z = np.linalg.solve(c, rhs)
    return np.linalg.solve(c.conj().T, z)


def _grid_lmmse(y_obs: np.ndarray, obs_idx: np.ndarray, a: np.ndarray,
                noise_var: np.ndarray, cov: CovarianceModel) -> ChannelEstimate:
    """LMMSE of the full grid from observations y = a*H + w on obs_idx.

    y_obs: (..., n_obs); a, noise_var: (n_obs,) shared across the batch.
    Frequency-first flat indexing (k * n_T + t) throughout.
    """
    n_s = cov.r_f.shape[0]
    n_t = cov.r_t.shape[0]
    k_idx, t_idx = _obs_split(obs_idx, n_t)

    r_ss = cov.r_f[np.ix_(k_idx, k_idx)] * cov.r_t[np.ix_(t_idx, t_idx)]
    m = a[:, None] * r_ss * a.conj()[None, :] + np.diag(noise_var)

    # cross covariance between every grid RE and the observations
    w = (cov.r_f[:, k_idx][:, None, :] * cov.r_t[:, t_idx][None, :, :])
    w = w.reshape(n_s * n_t, -1) * a.conj()[None, :]

    lead = y_obs.shape[:-1]
    rhs = y_obs.reshape(-1, y_obs.shape[-1]).T          # (n_obs, B)
    g = _solve_psd(m, rhs)                               # M^-1 y
    h_flat = (w @ g).T.reshape(*lead, n_s * n_t)

    x = _solve_psd(m, w.conj().T)                        # (n_obs, n_grid)
    q = np.einsum("gj,jg->g", w, x).real
    err = np.clip(1.0 - q, 0.0, None)
    err_grid = np.broadcast_to(err.reshape(n_s, n_t), (*lead, n_s, n_t)).copy()
    return ChannelEstimate(h_flat.reshape(*lead, n_s, n_t), err_grid)


# ----------------------------------------------------------------------


def _require_pilots(pattern: PilotPattern) -> None:
    if pattern.n_pilots == 0:
        raise ConfigError("pilot-based estimation is inapplicable to a "
                          "pilotless pattern")


def _grid_values(y) -> np.ndarray:
    vals = y.values if isinstance(y, ResourceGrid) else np.asarray(y)
    return np.asarray(vals, dtype=np.complex128)


def ls_estimate(y, pattern: PilotPattern, n0: float = 0.0) -> ChannelEstimate:
    """Per-RE division on pilots, linear time interpolation elsewhere.

    Extrapolation beyond the first/last pilot symbol is constant.  The error
    variance is N0 on pilot REs and grows linearly with the temporal distance
    to the nearest pilot symbol.
    """
    _require_pilots(pattern)
    vals = _grid_values(y)
    n_s, n_t = pattern.n_s, pattern.n_t
    pilot_syms = np.flatnonzero(pattern.mask.any(axis=0))
    if not pattern.mask[:, pilot_syms].all():
        raise ConfigError("LS interpolation expects full-symbol pilots")

    h_p = vals[..., :, pilot_syms] / pattern.values[:, pilot_syms]
    t_all = np.arange(n_t, dtype=np.float64)
    if len(pilot_syms) == 1:
        h_hat = np.repeat(h_p, n_t, axis=-1)
    else:
        # np.interp is 1-D; vectorize with direct two-point linear weights
        tp = pilot_syms.astype(np.float64)
        right = np.clip(np.searchsorted(tp, t_all), 1, len(tp) - 1)
        left = right - 1
        span = tp[right] - tp[left]
        frac = np.clip((t_all - tp[left]) / span, 0.0, 1.0)
        h_hat = (1.0 - frac) * h_p[..., left] + frac * h_p[..., right]

    dist = np.abs(t_all[None, :] - pilot_syms[:, None]).min(axis=0)
    err = n0 * (1.0 + dist)
    err_grid = np.broadcast_to(err, (*vals.shape[:-2], n_s, n_t)).copy()
    return ChannelEstimate(h_hat, err_grid)


def lmmse_estimate(y, pattern: PilotPattern, cov: CovarianceModel,
                   sigma2: float) -> ChannelEstimate:
    """Pilot-indexed LMMSE over the separable grid covariance."""
    _require_pilots(pattern)
    vals = _grid_values(y)
    obs_idx = pattern.pilot_indices
    a = pattern.values.reshape(-1)[obs_idx]
    y_obs = vals.reshape(*vals.shape[:-2], -1)[..., obs_idx]
    noise = np.full(obs_idx.size, float(sigma2))
    return _grid_lmmse(y_obs, obs_idx, a, noise, cov)


def data_aided_lmmse(y, pattern: PilotPattern, cov: CovarianceModel,
                     sigma2: float, x_mean: np.ndarray,
                     x_var: np.ndarray) -> ChannelEstimate:
    """LMMSE re-estimation using soft data symbols alongside the pilots.

    x_mean, x_var: per-RE posterior symbol mean and variance on the full
    grid (pilot entries ignored).  The system is restricted to REs whose
    mean is nonzero; symbol uncertainty enters as extra diagonal noise
    E[|x|^2 - |x_mean|^2] * E[|H|^2].
    """
    _require_pilots(pattern)
    vals = _grid_values(y)
    x_mean = np.asarray(x_mean, dtype=np.complex128).reshape(-1)
    x_var = np.asarray(x_var, dtype=np.float64).reshape(-1)

    data_sel = pattern.data_indices[
        np.abs(x_mean[pattern.data_indices]) > 1e-12]
    obs_idx = np.concatenate([pattern.pilot_indices, data_sel])
    a = np.concatenate([pattern.values.reshape(-1)[pattern.pilot_indices],
                        x_mean[data_sel]])
    noise = np.concatenate([np.full(pattern.n_pilots, float(sigma2)),
                            float(sigma2) + x_var[data_sel]])
    y_obs = vals.reshape(*vals.shape[:-2], -1)[..., obs_idx]
    return _grid_lmmse(y_obs, obs_idx, a, noise, cov)


def mmse_equalize_demap(y, est: ChannelEstimate, n0: float, gamma_ici: float,
                        constellation: Constellation,
                        pattern: PilotPattern) -> np.ndarray:
    """One-tap MMSE equalization and exact per-bit LLRs on the data REs.

    Returns (..., n_data * m) LLRs in frequency-first data-RE order, bit
    order MSB first within each RE, positive LLR meaning bit 1.
    """
    vals = _grid_values(y)
    n0_eff = float(n0) + float(gamma_ici)
    flat = vals.reshape(*vals.shape[:-2], -1)[..., pattern.data_indices]
    h = est.h_hat.reshape(*est.h_hat.shape[:-2], -1)[..., pattern.data_indices]
    rvar = est.err_var.reshape(*est.err_var.shape[:-2], -1)[..., pattern.data_indices]

    denom = np.abs(h) ** 2 + n0_eff
    dead = denom == 0.0  # h = 0 with zero effective noise
    x_hat = np.where(dead, 0.0, h.conj() * flat / np.where(dead, 1.0, denom))
    sigma2 = rvar + n0_eff

    pts = constellation.points
    d2 = np.abs(x_hat[..., None] - pts) ** 2
    safe = np.where(sigma2 > 0, sigma2, 1.0)[..., None]
    logits = -d2 / safe

    zero_m, one_m = constellation.subsets()
    llr = np.empty((*x_hat.shape, constellation.m))
    for i in range(constellation.m):
        num = logsumexp(logits, axis=-1, b=one_m[i])
        den = logsumexp(logits, axis=-1, b=zero_m[i])
        llr[..., i] = num - den
    llr = np.where((dead | (sigma2 == 0))[..., None], 0.0, llr)
    # sigma2 == 0 with h != 0 means an exact observation: saturate instead
    exact = (sigma2 == 0) & ~dead
    if np.any(exact):
        hard = np.argmin(d2, axis=-1)
        bits = constellation.bit_table()[hard].astype(np.float64) * 2 - 1
        llr = np.where(exact[..., None], bits * 300.0, llr)
    return llr.reshape(*llr.shape[:-2], -1)


def symbol_priors(llr_bits: np.ndarray,
                  constellation: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """Softmax symbol posteriors from per-bit LLRs.

    llr_bits: (..., n_re, m) -> (mean, variance) per RE.
    """
    bt = constellation.bit_table().astype(np.float64)   # (2^m, m)
    logits = np.einsum("...rm,cm->...rc", llr_bits, bt)
    logits -= logsumexp(logits, axis=-1, keepdims=True)
    p = np.exp(logits)
    pts = constellation.points
    mean = p @ pts
    e2 = p @ (np.abs(pts) ** 2)
    var = np.clip(e2 - np.abs(mean) ** 2, 0.0, None)
    return mean, var


def iedd_receive(y, pattern: PilotPattern, cov: CovarianceModel, sigma2: float,
                 code: LdpcCode, constellation: Constellation,
                 n_outer: int = 3, max_iters: int = 20,
                 gamma_ici: float = 0.0):
    """Iterative LMMSE estimation and LDPC decoding with soft-symbol feedback.

    Each outer round re-demaps from the current estimate, decodes every code
    block, and feeds extrinsic decoder output (posterior minus decoder input)
    back as symbol priors for data-aided re-estimation.  Zero-padded REs are
    treated as known symbols.  Returns (llrs, info bits, converged).
    """
    if n_outer < 1:
        raise ConfigError("n_outer must be >= 1")
    vals = _grid_values(y)
    if vals.ndim != 2:
        raise ConfigError("iedd_receive operates on a single frame")
    m = constellation.m
    layout = segment_payload(pattern.n_data * m, code, m)
    n0_eff = float(sigma2) + float(gamma_ici)

    est = lmmse_estimate(vals, pattern, cov, n0_eff)
    llr = bits = None
    converged = False
    for outer in range(n_outer):
        llr = mmse_equalize_demap(vals, est, sigma2, gamma_ici,
                                  constellation, pattern)
        blocks = llr[:layout.used_bits].reshape(layout.n_blocks, code.n)
        hard, post, done = ldpc_decode_soft(blocks, code, max_iters)
        bits = hard[..., :code.k].reshape(-1)
        converged = bool(np.all(done))
        if converged or outer == n_outer - 1:
            break

        extrinsic = post - blocks
        full = np.zeros((pattern.n_data, m))
        full.reshape(-1)[:layout.used_bits] = extrinsic.reshape(-1)
        x_mean, x_var = symbol_priors(full, constellation)
        if layout.leftover_bits:
            # padding REs carry the all-zero-label point with certainty
            x_mean[-layout.pad_re:] = constellation.points[0]
            x_var[-layout.pad_re:] = 0.0
        mean_grid = np.zeros(pattern.n_s * pattern.n_t, dtype=np.complex128)
        var_grid = np.zeros(pattern.n_s * pattern.n_t)
        mean_grid[pattern.data_indices] = x_mean
        var_grid[pattern.data_indices] = x_var
        est = data_aided_lmmse(vals, pattern, cov, n0_eff, mean_grid, var_grid)

    return llr, bits, converged
