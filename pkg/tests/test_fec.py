"""LDPC code construction, encode/decode, and payload segmentation tests."""

from math import erfc, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralofdm.errors import ConfigError
from neuralofdm.fec import (
    LdpcCode,
    ldpc_decode,
    ldpc_decode_soft,
    ldpc_encode,
    make_code,
    segment_payload,
)


@pytest.fixture(scope="module")
def code648():
    return make_code(648, "1/2")


@pytest.mark.parametrize("n", [648, 1296, 1944])
@pytest.mark.parametrize("rate,frac", [("1/3", 1 / 3), ("1/2", 1 / 2),
                                       ("2/3", 2 / 3)])
def test_code_construction_and_parity(n, rate, frac):
    code = make_code(n, rate)
    assert code.n == n
    assert code.k == round(n * frac)
    assert code.rate == pytest.approx(frac)
    rng = np.random.default_rng(n + len(rate))
    bits = rng.integers(0, 2, size=(4, code.k)).astype(np.uint8)
    cw = ldpc_encode(bits, code)
    assert cw.shape == (4, n)
    assert np.array_equal(cw[:, :code.k], bits)  # systematic prefix
    assert np.all(code.parity_check(cw) == 0)


def test_make_code_rejections():
    with pytest.raises(ConfigError):
        make_code(650, "1/2")
    with pytest.raises(ConfigError):
        make_code(648, "7/8")


def test_all_zero_message_maps_to_all_zero_codeword(code648):
    cw = ldpc_encode(np.zeros(code648.k, dtype=np.uint8), code648)
    assert not cw.any()


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=10, deadline=None)
def test_encoder_is_linear_over_gf2(seed):
    code = make_code(648, "1/2")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=code.k).astype(np.uint8)
    b = rng.integers(0, 2, size=code.k).astype(np.uint8)
    assert np.array_equal(ldpc_encode(a ^ b, code),
                          ldpc_encode(a, code) ^ ldpc_encode(b, code))


def test_noiseless_decode_exact(code648, rng):
    bits = rng.integers(0, 2, size=(8, code648.k)).astype(np.uint8)
    llr = (2.0 * ldpc_encode(bits, code648) - 1.0) * 20.0
    dec, conv = ldpc_decode(llr, code648)
    assert dec.shape == (8, code648.k)
    assert np.array_equal(dec, bits)
    assert np.all(conv)


def test_single_flip_correction_exhaustive(code648, rng):
    """Every possible single coded-bit flip is corrected."""
    msg = rng.integers(0, 2, size=code648.k).astype(np.uint8)
    base = (2.0 * ldpc_encode(msg, code648) - 1.0) * 8.0
    llrs = np.tile(base, (code648.n, 1))
    llrs[np.arange(code648.n), np.arange(code648.n)] *= -1.0
    dec, conv = ldpc_decode(llrs, code648)
    assert np.all(dec == msg[None, :])
    assert np.all(conv)


def test_all_zero_llrs_do_not_converge(code648):
    _, conv = ldpc_decode(np.zeros(code648.n), code648)
    assert not bool(np.all(conv))


def test_decode_single_vector_shape(code648, rng):
    msg = rng.integers(0, 2, size=code648.k).astype(np.uint8)
    llr = (2.0 * ldpc_encode(msg, code648) - 1.0) * 9.0
    dec, conv = ldpc_decode(llr, code648)
    assert dec.shape == (code648.k,)
    assert np.array_equal(dec, msg)


def test_soft_decode_posteriors_sharpen(code648, rng):
    msg = rng.integers(0, 2, size=(2, code648.k)).astype(np.uint8)
    cw = ldpc_encode(msg, code648)
    llr = (2.0 * cw - 1.0) * 3.0 + rng.normal(0, 1.0, cw.shape)
    hard, post, done = ldpc_decode_soft(llr, code648)
    assert post.shape == (2, code648.n)
    assert np.array_equal(hard, cw)  # full-codeword decisions
    assert np.array_equal(hard[:, :code648.k], msg)
    assert np.all(done)
    # converged posteriors agree in sign with the codeword and outweigh input
    assert np.all((post > 0) == (cw == 1))
    assert np.mean(np.abs(post)) > np.mean(np.abs(llr))


def test_coded_beats_uncoded_bpsk(code648):
    """Real BPSK at Eb/N0 = 2.5 dB: coded BER under the uncoded closed form."""
    rng = np.random.default_rng(7)
    ebn0 = 10 ** (2.5 / 10)
    sigma2 = 1.0 / (2.0 * code648.rate * ebn0)
    msgs = rng.integers(0, 2, size=(64, code648.k)).astype(np.uint8)
    y = (2.0 * ldpc_encode(msgs, code648) - 1.0) \
        + rng.normal(0.0, np.sqrt(sigma2), (64, code648.n))
    dec, _ = ldpc_decode(2.0 * y / sigma2, code648)
    coded_ber = float(np.mean(dec != msgs))
    uncoded = 0.5 * erfc(sqrt(ebn0))
    assert coded_ber < uncoded


def test_decode_iteration_budget(code648, rng):
    """max_iters=0 returns the channel hard decision."""
    msg = rng.integers(0, 2, size=code648.k).astype(np.uint8)
    cw = ldpc_encode(msg, code648)
    llr = (2.0 * cw - 1.0) * 4.0
    llr[0] *= -1.0  # one flip
    dec0, conv0 = ldpc_decode(llr, code648, max_iters=0)
    assert dec0[0] != msg[0]
    assert not bool(np.all(conv0))
    dec, conv = ldpc_decode(llr, code648, max_iters=20)
    assert np.array_equal(dec, msg) and np.all(conv)


# ------------------------------------------------------------ segmentation

def test_segmentation_oracles():
    lay = segment_payload(10752, make_code(1944, "1/2"), m=6)
    assert lay.n_blocks == 5
    assert lay.block_len == 1944
    assert lay.used_bits == 5 * 1944
    assert lay.leftover_bits == 1032
    assert lay.pad_re == 172
    assert lay.info_bits == 5 * 972
    lay2 = segment_payload(648, make_code(648, "1/2"), m=6)
    assert (lay2.n_blocks, lay2.leftover_bits, lay2.pad_re) == (1, 0, 0)


def test_segmentation_accounting_identity():
    code = make_code(648, "1/2")
    for cap in (648, 700, 1296, 5000):
        lay = segment_payload(cap, code, m=2)
        assert lay.used_bits + lay.leftover_bits == cap
        assert lay.used_bits == lay.n_blocks * code.n
        assert lay.leftover_bits == lay.pad_re * 2


def test_segmentation_capacity_guard():
    with pytest.raises(ConfigError):
        segment_payload(647, make_code(648, "1/2"), m=2)
