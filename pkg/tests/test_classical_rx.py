"""Classical estimation and detection tests: LS interpolation, LMMSE closed
forms, MMSE equalize-demap LLRs, and iterative estimation-decoding."""

import warnings

import numpy as np
import pytest
from scipy.special import j0

from neuralofdm.channel import TdlProfile, freq_csi, generate_tdl
from neuralofdm.classical_rx import (
    ChannelEstimate,
    CovarianceModel,
    data_aided_lmmse,
    iedd_receive,
    lmmse_estimate,
    ls_estimate,
    make_covariance,
    mmse_equalize_demap,
    symbol_priors,
)
from neuralofdm.errors import ConfigError, NumericError
from neuralofdm.fec import ldpc_decode, ldpc_encode, make_code, segment_payload
from neuralofdm.grid import (
    Constellation,
    PilotPattern,
    demap_grid_hard,
    make_pilot_pattern,
    map_bits_to_grid,
    qam_constellation,
)

N_S, N_T, N_CP = 64, 14, 6
DELTA_F = 15e3


@pytest.fixture(scope="module")
def tdl_cov():
    prof = TdlProfile.tdl_a(100e-9)
    return prof, make_covariance(prof, 40.0, 2e9, N_S, N_T, N_CP)


def flat_pattern(n_s, n_t):
    return PilotPattern(n_s, n_t, np.zeros((n_s, n_t), bool),
                        np.zeros((n_s, n_t), complex), "0P")


# ------------------------------------------------------------------- LS

def test_ls_flat_noiseless_exact():
    pat = make_pilot_pattern("2P", 16, 14)
    h0 = 0.7 - 0.2j
    y = h0 * pat.values + (~pat.mask) * (0.3 + 0.1j)
    est = ls_estimate(y, pat)
    assert np.allclose(est.h_hat, h0)


def test_ls_linear_in_time_channel_exact():
    pat = make_pilot_pattern("2P", 16, 14)
    t = np.arange(14)
    h = (0.5 + 0.1 * t)[None, :] * np.ones((16, 1)) * (1 + 0.5j)
    est = ls_estimate(h * pat.values + (~pat.mask) * 1.0, pat)
    assert np.allclose(est.h_hat[:, 2:12], h[:, 2:12])  # interp interval
    assert np.allclose(est.h_hat[:, 0], h[:, 2])        # constant extrap
    assert np.allclose(est.h_hat[:, -1], h[:, 11])


def test_ls_pilot_mse_matches_n0(rng):
    pat = make_pilot_pattern("2P", 16, 14)
    n0, trials = 0.01, 2000
    h = rng.normal(size=(trials, 16, 14)) + 1j * rng.normal(size=(trials, 16, 14))
    w = (rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape)) * np.sqrt(n0 / 2)
    est = ls_estimate(h * pat.values + w, pat, n0=n0)
    mse = np.mean(np.abs(est.h_hat[:, :, [2, 11]] - h[:, :, [2, 11]]) ** 2)
    assert abs(mse - n0) / n0 < 0.1
    assert np.allclose(est.err_var[0, 0, [2, 11]], n0)


def test_ls_needs_pilots():
    with pytest.raises(ConfigError):
        ls_estimate(np.ones((16, 14), complex), make_pilot_pattern("0P", 16, 14))


def test_channel_estimate_rejects_negative_variance():
    with pytest.raises(NumericError):
        ChannelEstimate(np.ones((2, 2), complex), -np.ones((2, 2)))


# ---------------------------------------------------------------- LMMSE

def test_lmmse_white_channel_closed_form(rng):
    """R = I: pilot-column estimate is LS shrunk by 1/(1 + sigma2)."""
    pat = make_pilot_pattern("2P", 16, 14)
    cov = CovarianceModel(np.eye(16, dtype=complex), np.eye(14))
    sigma2 = 0.5
    h = rng.normal(size=(16, 14)) + 1j * rng.normal(size=(16, 14))
    y = h * pat.values
    est = lmmse_estimate(y, pat, cov, sigma2)
    ls_cols = y[:, [2, 11]] / pat.values[:, [2, 11]]
    assert np.allclose(est.h_hat[:, [2, 11]], ls_cols / (1 + sigma2))
    other = np.ones(14, bool)
    other[[2, 11]] = False
    assert np.allclose(est.h_hat[:, other], 0.0)  # prior mean off-pilot
    assert np.allclose(est.err_var[:, [2, 11]], sigma2 / (1 + sigma2))
    assert np.allclose(est.err_var[:, other], 1.0)


def test_lmmse_noise_free_full_pilots_recovers_ls(rng):
    k = np.arange(16)
    rf = 0.9 ** np.abs(k[:, None] - k[None, :]) \
        * np.exp(0.3j * (k[:, None] - k[None, :]))
    t = np.arange(14)
    cov = CovarianceModel(rf, 0.8 ** np.abs(t[:, None] - t[None, :]))
    pat = PilotPattern(16, 14, np.ones((16, 14), bool),
                       np.exp(1j * rng.uniform(0, 2 * np.pi, (16, 14))), "all")
    h = rng.normal(size=(16, 14)) + 1j * rng.normal(size=(16, 14))
    est = lmmse_estimate(h * pat.values, pat, cov, 1e-12)
    assert np.max(np.abs(est.h_hat - h)) < 1e-4


def test_lmmse_beats_ls_and_matches_trace(tdl_cov, rng):
    prof, cov = tdl_cov
    pat = make_pilot_pattern("2P", N_S, N_T)
    sigma2, trials = 0.1, 400
    sp = 1.0 / (N_S * DELTA_F)
    ch = generate_tdl(prof, 40.0, 2e9, (N_S + N_CP) * N_T, sp, seed=123,
                      batch=trials, n_cp=N_CP)
    hg = freq_csi(ch, N_S, N_T, N_CP).values
    w = (rng.normal(size=hg.shape) + 1j * rng.normal(size=hg.shape)) \
        * np.sqrt(sigma2 / 2)
    y = hg * pat.values + w
    est = lmmse_estimate(y, pat, cov, sigma2)
    emp = np.mean(np.abs(est.h_hat - hg) ** 2)
    pred = np.mean(est.err_var[0])
    assert abs(emp - pred) / pred < 0.15
    mse_ls = np.mean(np.abs(ls_estimate(y, pat, n0=sigma2).h_hat - hg) ** 2)
    assert emp <= mse_ls


def test_lmmse_singular_system_warns_and_loads():
    cov = CovarianceModel(np.eye(4, dtype=complex), np.ones((4, 4)))
    pat = PilotPattern(4, 4, np.ones((4, 4), bool), np.ones((4, 4), complex))
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        lmmse_estimate(np.ones((4, 4), complex), pat, cov, 0.0)
    assert any("loading" in str(x.message) for x in wlist)


def test_covariance_model_properties(tdl_cov):
    _, cov = tdl_cov
    assert np.allclose(cov.r_f, cov.r_f.conj().T)
    assert np.all(np.linalg.eigvalsh(cov.r_f) > -1e-10)
    np.testing.assert_allclose(np.diag(cov.r_t), 1.0, rtol=1e-12)
    # time correlation follows the zeroth-order Bessel at symbol lags
    fd = 40.0 * 2e9 / 3e8
    t_sym = (N_S + N_CP) / (N_S * DELTA_F)
    lags = np.arange(N_T) * t_sym
    np.testing.assert_allclose(cov.r_t[0], j0(2 * np.pi * fd * lags),
                               atol=1e-9)
    with pytest.raises(ConfigError):
        CovarianceModel(np.eye(3, dtype=complex), np.ones(4))


# ------------------------------------------------------------------ demap

def test_demap_llr_anchor_value():
    """Unit channel, err_var 1, antipodal points: LLR = 4 Re(y)."""
    c2 = Constellation(1, np.array([-1.0 + 0j, 1.0 + 0j]))
    pat = flat_pattern(1, 1)
    est = ChannelEstimate(np.ones((1, 1), complex), np.ones((1, 1)))
    llr = mmse_equalize_demap(np.array([[1.0 + 0j]]), est, 0.0, 0.0, c2, pat)
    np.testing.assert_allclose(llr, 4.0)


def test_demap_zero_channel_gives_zero_llr():
    c2 = Constellation(1, np.array([-1.0 + 0j, 1.0 + 0j]))
    pat = flat_pattern(1, 1)
    est = ChannelEstimate(np.zeros((1, 1), complex), np.zeros((1, 1)))
    llr = mmse_equalize_demap(np.array([[0.5 + 0j]]), est, 0.0, 0.0, c2, pat)
    assert np.all(llr == 0.0)


def test_demap_sign_matches_nearest_point(rng):
    """High-SNR AWGN: LLR signs reproduce nearest-point hard decisions."""
    c64 = qam_constellation(6)
    pat = flat_pattern(32, 32)
    bits = rng.integers(0, 2, size=32 * 32 * 6)
    x = map_bits_to_grid(bits, c64, pat).values
    n0 = 10 ** (-28 / 10)
    y = x + (rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)) \
        * np.sqrt(n0 / 2)
    est = ChannelEstimate(np.ones_like(y), np.zeros(y.shape, dtype=float))
    llr = mmse_equalize_demap(y, est, n0, 0.0, c64, pat)
    hard = (llr > 0).astype(np.uint8).reshape(-1, 6)
    near = demap_grid_hard(y, c64, pat).reshape(-1, 6)
    assert np.array_equal(hard, near)


def test_symbol_priors_from_llrs():
    """Saturated LLRs concentrate the prior on the labeled point."""
    c4 = qam_constellation(2)
    llr = np.array([[30.0, -30.0]])  # label 10 -> point index 2
    mean, var = symbol_priors(llr, c4)
    np.testing.assert_allclose(mean[0], c4.points[2], atol=1e-9)
    np.testing.assert_allclose(var[0], 0.0, atol=1e-9)
    mean0, var0 = symbol_priors(np.zeros((1, 2)), c4)
    np.testing.assert_allclose(mean0[0], c4.points.mean(), atol=1e-12)
    np.testing.assert_allclose(var0[0], 1.0, atol=1e-12)


# ------------------------------------------------------------------- IEDD

def test_iedd_one_outer_equals_lmmse_plus_decode(tdl_cov, rng):
    prof, cov = tdl_cov
    pat = make_pilot_pattern("2P", N_S, N_T)
    code = make_code(648, "1/2")
    c4 = qam_constellation(2)
    sigma2 = 10 ** (-8 / 10)
    sp = 1.0 / (N_S * DELTA_F)
    ch = generate_tdl(prof, 40.0, 2e9, (N_S + N_CP) * N_T, sp, seed=77,
                      n_cp=N_CP)
    hg = freq_csi(ch, N_S, N_T, N_CP).values
    lay = segment_payload(pat.n_data * 2, code, m=2)
    msg = rng.integers(0, 2, size=(lay.n_blocks, code.k)).astype(np.uint8)
    cw = ldpc_encode(msg, code).reshape(-1)
    payload = np.concatenate([cw, np.zeros(lay.leftover_bits, np.uint8)])
    x = map_bits_to_grid(payload, c4, pat).values
    w = (rng.normal(size=hg.shape) + 1j * rng.normal(size=hg.shape)) \
        * np.sqrt(sigma2 / 2)
    y = hg * x + w

    llr1, bits1, _ = iedd_receive(y, pat, cov, sigma2, code, c4, n_outer=1)
    est = lmmse_estimate(y, pat, cov, sigma2)
    llr_ref = mmse_equalize_demap(y, est, sigma2, 0.0, c4, pat)
    dec_ref, _ = ldpc_decode(
        llr_ref[:lay.used_bits].reshape(lay.n_blocks, code.n), code)
    assert np.allclose(llr1, llr_ref)
    assert np.array_equal(bits1, dec_ref.reshape(-1))
    with pytest.raises(ConfigError):
        iedd_receive(y[None], pat, cov, sigma2, code, c4)


def test_data_aided_priors_never_hurt(tdl_cov, rng):
    """Genie data priors reduce estimation MSE; zero priors reduce to
    pilot-only LMMSE."""
    prof, cov = tdl_cov
    pat = make_pilot_pattern("2P", N_S, N_T)
    c4 = qam_constellation(2)
    sigma2, trials = 10 ** (-8 / 10), 80
    sp = 1.0 / (N_S * DELTA_F)
    ch = generate_tdl(prof, 40.0, 2e9, (N_S + N_CP) * N_T, sp, seed=99,
                      batch=trials, n_cp=N_CP)
    hg = freq_csi(ch, N_S, N_T, N_CP).values
    bits = rng.integers(0, 2, size=(trials, pat.n_data * 2))
    x = map_bits_to_grid(bits, c4, pat).values
    w = (rng.normal(size=hg.shape) + 1j * rng.normal(size=hg.shape)) \
        * np.sqrt(sigma2 / 2)
    y = hg * x + w
    x_mean = x.reshape(trials, -1).copy()
    x_mean[:, pat.pilot_indices] = 0
    mse_g = 0.0
    for i in range(trials):
        e = data_aided_lmmse(y[i], pat, cov, sigma2, x_mean[i],
                             np.zeros(N_S * N_T))
        mse_g += np.mean(np.abs(e.h_hat - hg[i]) ** 2) / trials
    pilot_est = lmmse_estimate(y, pat, cov, sigma2)
    mse_p = np.mean(np.abs(pilot_est.h_hat - hg) ** 2)
    assert mse_g <= mse_p
    e0 = data_aided_lmmse(y[0], pat, cov, sigma2,
                          np.zeros(N_S * N_T, complex), np.zeros(N_S * N_T))
    assert np.allclose(e0.h_hat, pilot_est.h_hat[0])
