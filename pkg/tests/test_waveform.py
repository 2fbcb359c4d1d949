"""OFDM waveform tests: unitary transform pair, cyclic prefix, PAPR, IQ IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralofdm.errors import ConfigError, FramingError, NumericError
from neuralofdm.waveform import (
    TimeDomainFrame,
    ccdf_quantile,
    demodulate_ops,
    export_iq,
    import_iq,
    modulate_ops,
    ofdm_demodulate,
    ofdm_modulate,
    papr,
    papr_db,
)


def random_grid(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@given(n_s=st.sampled_from([8, 16, 64]), n_t=st.integers(1, 6),
       n_cp=st.integers(0, 7), seed=st.integers(0, 2 ** 16))
@settings(max_examples=20, deadline=None)
def test_modulate_demodulate_roundtrip(n_s, n_t, n_cp, seed):
    g = random_grid(np.random.default_rng(seed), (n_s, n_t))
    frame = ofdm_modulate(g, n_cp=n_cp)
    assert frame.samples.shape == (n_t * (n_s + n_cp),)
    back = ofdm_demodulate(frame)
    np.testing.assert_allclose(back.values, g, atol=1e-12)


def test_roundtrip_batched(rng):
    g = random_grid(rng, (3, 2, 16, 4))
    back = ofdm_demodulate(ofdm_modulate(g, n_cp=4))
    np.testing.assert_allclose(back.values, g, atol=1e-12)


def test_cyclic_prefix_copies_tail(rng):
    n_s, n_cp = 16, 4
    frame = ofdm_modulate(random_grid(rng, (n_s, 3)), n_cp=n_cp)
    syms = frame.samples.reshape(3, n_s + n_cp)
    np.testing.assert_allclose(syms[:, :n_cp], syms[:, n_s:], atol=1e-15)


def test_modulation_is_unitary_per_symbol(rng):
    """Grid energy equals the energy of the CP-stripped samples."""
    g = random_grid(rng, (32, 5))
    frame = ofdm_modulate(g, n_cp=8)
    body = frame.samples.reshape(5, 40)[:, 8:]
    np.testing.assert_allclose(np.sum(np.abs(body) ** 2),
                               np.sum(np.abs(g) ** 2), rtol=1e-12)


def test_frame_properties():
    frame = TimeDomainFrame(np.zeros(3 * 20, dtype=complex), n_s=16, n_cp=4)
    assert frame.n_symbols == 3
    np.testing.assert_allclose(frame.sample_period, 1.0 / (16 * 15e3))
    with pytest.raises(FramingError):
        TimeDomainFrame(np.zeros(21, dtype=complex), n_s=16, n_cp=4)
    with pytest.raises(ConfigError):
        ofdm_modulate(np.zeros((8, 2), dtype=complex), n_cp=8)


def test_papr_single_tone_is_zero_db():
    """One active subcarrier gives a constant-envelope symbol body."""
    g = np.zeros((64, 1), dtype=complex)
    g[5, 0] = 1.0
    frame = ofdm_modulate(g, n_cp=0)
    np.testing.assert_allclose(papr_db(frame), 0.0, atol=1e-9)


def test_papr_impulse_in_time():
    """All-ones spectrum is a time impulse: PAPR = n_S."""
    n_s = 32
    g = np.ones((n_s, 1), dtype=complex)
    frame = ofdm_modulate(g, n_cp=0)
    np.testing.assert_allclose(papr(frame), n_s, rtol=1e-9)
    np.testing.assert_allclose(papr_db(frame), 10 * np.log10(n_s), rtol=1e-9)


def test_papr_batched_and_zero_guard(rng):
    s = rng.normal(size=(4, 64)) + 1j * rng.normal(size=(4, 64))
    out = papr(s)
    assert out.shape == (4,)
    assert np.all(out >= 1.0)
    with pytest.raises(NumericError):
        papr(np.zeros(16, dtype=complex))


def test_ccdf_quantile():
    vals = np.arange(1000, dtype=float)
    assert ccdf_quantile(vals, 0.01) == pytest.approx(989.01, abs=0.2)
    assert ccdf_quantile(vals, 0.5) == pytest.approx(499.5)


def test_export_import_iq_roundtrip(tmp_path, rng):
    g = random_grid(rng, (16, 2))
    frame = ofdm_modulate(g, n_cp=4)
    path = tmp_path / "frame.iq"
    export_iq(frame, path)
    assert path.stat().st_size == 2 * 4 * frame.samples.size
    back = import_iq(path)
    np.testing.assert_allclose(back, frame.samples, atol=1e-6)


@pytest.mark.parametrize("ops", [modulate_ops, demodulate_ops])
def test_ops_adjoint_identity(ops, rng):
    """<F x, y> == <x, F* y> for the autodiff bridge pairs."""
    n_s, n_t, n_cp = 16, 3, 4
    fwd, adj = ops(n_s, n_t, n_cp)
    if ops is modulate_ops:
        xs, ys = (n_s, n_t), (n_t * (n_s + n_cp),)
    else:
        xs, ys = (n_t * (n_s + n_cp),), (n_s, n_t)
    x = random_grid(rng, xs)
    y = random_grid(rng, ys)
    lhs = np.vdot(fwd(x), y)
    rhs = np.vdot(x, adj(y))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_ops_match_reference_path(rng):
    g = random_grid(rng, (2, 16, 3))
    fwd, _ = modulate_ops(16, 3, 4)
    np.testing.assert_allclose(fwd(g), ofdm_modulate(g, n_cp=4).samples,
                               atol=1e-15)
    dfwd, _ = demodulate_ops(16, 3, 4)
    frame = ofdm_modulate(g, n_cp=4)
    np.testing.assert_allclose(dfwd(frame.samples),
                               ofdm_demodulate(frame).values, atol=1e-15)
