"""Autodiff kernel tests: layer forwards, backward correctness against
finite differences, and the numeric guards."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import neuralofdm.tensorkit as T
from neuralofdm.errors import ConfigError, NumericError, UsageError
from neuralofdm.tensorkit.gradcheck import grad_check
from neuralofdm.tensorkit.layers import (
    BatchNorm2d,
    Conv2d,
    Network,
    ReLU,
    ResidualBlock,
    SeparableConv2d,
    forward_layer,
)


class Seq(Network):
    """Network plus a plain sequential forward, enough for grad_check."""

    def forward(self, x, training=False, update_stats=True):
        for layer in self.layers:
            x = layer.forward(x, training=training, update_stats=update_stats)
        return x


def fd_grad(f, x, eps=1e-6):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy()
        xp[i] += eps
        xm = x.copy()
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
        it.iternext()
    return g


# --------------------------------------------------------------- basics

def test_sum_backward_is_ones(rng):
    x = T.parameter(rng.normal(size=(3, 4)))
    T.backward(T.sum_all(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_half_sum_square_backward_is_x(rng):
    vals = rng.normal(size=(2, 5))
    x = T.parameter(vals)
    T.backward(T.scale(T.sum_all(T.mul(x, x)), 0.5))
    np.testing.assert_allclose(x.grad, vals, rtol=1e-12)


def test_backward_rejects_non_scalar(rng):
    x = T.parameter(rng.normal(size=(2, 2)))
    with pytest.raises(UsageError):
        T.backward(T.add(x, x))


def test_relu_forward():
    x = T.const(np.array([-1.0, 0.0, 2.0]))
    assert np.array_equal(T.relu(x).values, [0.0, 0.0, 2.0])


def test_clip_saturated_gradient_is_zero():
    x = T.parameter(np.array([-50.0, 0.5, 50.0]))
    T.backward(T.sum_all(T.clip(x, -30.0, 30.0)))
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_concat_splits_gradient(rng):
    a = T.parameter(rng.normal(size=(2, 3)))
    b = T.parameter(rng.normal(size=(2, 1)))
    out = T.concat([a, b], axis=-1)
    T.backward(T.sum_all(T.mul(out, out)))
    np.testing.assert_allclose(a.grad, 2 * a.values)
    np.testing.assert_allclose(b.grad, 2 * b.values)


def test_gradients_stay_finite_after_backward(rng):
    x = T.parameter(rng.normal(size=(2, 4, 4, 2)))
    block = ResidualBlock("r", 2, 3, kernel_size=(3, 3),
                          rng=np.random.default_rng(0), dtype=np.float64)
    out = block.forward(x, training=True)
    T.backward(T.mean_all(T.mul(out, out)))
    assert np.isfinite(x.grad).all()
    for _, p in block.params():
        assert np.isfinite(p.grad).all()


# ---------------------------------------------------------- conv layers

def test_identity_1x1_conv(rng):
    conv = Conv2d("c", 3, 3, kernel_size=(1, 1))
    conv._params["kernel"].values[...] = np.eye(3)[None, None]
    conv._params["bias"].values[...] = 0.0
    x = rng.normal(size=(2, 5, 4, 3))
    out = conv.forward(T.const(x))
    np.testing.assert_allclose(out.values, x, atol=1e-12)


def test_separable_matches_dense_equivalent(rng):
    sep = SeparableConv2d("s", 2, 3, kernel_size=(3, 3),
                          rng=np.random.default_rng(5), dtype=np.float64)
    x = rng.normal(size=(1, 4, 4, 2))
    out = sep.forward(T.const(x)).values
    dense = sep.dense_equivalent()  # (kh, kw, cin, cout)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros_like(out)
    for i in range(4):
        for j in range(4):
            patch = xp[0, i:i + 3, j:j + 3, :]
            ref[0, i, j, :] = np.einsum("hwc,hwco->o", patch, dense)
    ref += sep._params["bias"].values
    np.testing.assert_allclose(out, ref, atol=1e-10)


@given(h=st.integers(3, 9), w=st.integers(3, 9), k=st.sampled_from([1, 3, 5]),
       d=st.sampled_from([1, 2]))
@settings(max_examples=12, deadline=None)
def test_same_padding_preserves_shape(h, w, k, d):
    conv = Conv2d("c", 2, 4, kernel_size=(k, k), dilation=(d, d))
    out = conv.forward(T.const(np.zeros((1, h, w, 2))))
    assert out.values.shape == (1, h, w, 4)


def test_conv_kernel_gradient_matches_fd(rng):
    conv = Conv2d("c", 2, 3, kernel_size=(3, 3),
                  rng=np.random.default_rng(1), dtype=np.float64)
    x0 = rng.normal(size=(2, 5, 4, 2))
    w = rng.normal(size=(2, 5, 4, 3))
    kern = conv._params["kernel"]

    def loss_at(kvals):
        kern.values = kvals
        return float((conv.forward(T.const(x0)).values * w).sum())

    k0 = kern.values.copy()
    num = fd_grad(loss_at, k0)
    kern.values = k0
    out = conv.forward(T.const(x0))
    T.backward(T.sum_all(T.mul(out, T.const(w))))
    np.testing.assert_allclose(kern.grad, num, rtol=1e-6, atol=1e-8)


def test_residual_stack_gradient():
    """Three-block residual stack against central finite differences."""
    net = Seq([
        ResidualBlock("r1", 2, 4, kernel_size=(3, 3),
                      rng=np.random.default_rng(3), dtype=np.float64),
        ResidualBlock("r2", 4, 4, kernel_size=(3, 3), dilation=(2, 1),
                      rng=np.random.default_rng(4), dtype=np.float64),
        ResidualBlock("r3", 4, 2, kernel_size=(3, 3),
                      rng=np.random.default_rng(5), dtype=np.float64),
    ])
    x = np.random.default_rng(0).normal(size=(2, 6, 5, 2))
    err = grad_check(net, x, epsilon=1e-4, num_params=60, seed=0)
    assert err < 1e-4, f"max relative error {err:.3e}"


def test_grad_check_single_linear_layer():
    net = Seq([Conv2d("c", 2, 2, kernel_size=(1, 1),
                      rng=np.random.default_rng(7), dtype=np.float64)])
    err = grad_check(net, np.random.default_rng(1).normal(size=(2, 4, 4, 2)),
                     num_params=60)
    assert err < 1e-8


def test_grad_check_requires_float64():
    net = Seq([Conv2d("c", 1, 1, kernel_size=(1, 1), dtype=np.float32)])
    with pytest.raises(UsageError):
        grad_check(net, np.zeros((1, 2, 2, 1)))


def test_relu_kink_exclusion():
    """Inputs placed exactly at relu kinks must not fail the check."""
    net = Seq([Conv2d("c", 1, 2, kernel_size=(1, 1),
                      rng=np.random.default_rng(2), dtype=np.float64),
               ReLU("r", 2)])
    x = np.zeros((1, 3, 3, 1))  # zero bias puts every pre-activation at 0
    err = grad_check(net, x, num_params=40)
    assert err < 1e-6


def test_forward_layer_shape_mismatch_names_layer():
    conv = Conv2d("offender", 3, 3)
    with pytest.raises(ConfigError, match="offender"):
        forward_layer(T.const(np.zeros((1, 2, 2, 5))), conv)


def test_forward_layer_rejects_non_finite():
    conv = Conv2d("c", 1, 1)
    with pytest.raises(NumericError):
        forward_layer(T.const(np.full((1, 2, 2, 1), np.nan)), conv)


def test_forward_layer_kind_check():
    conv = Conv2d("c", 1, 1)
    with pytest.raises(ConfigError):
        forward_layer(T.const(np.zeros((1, 2, 2, 1))), conv, kind="batch_norm")
    out = forward_layer(T.const(np.zeros((1, 2, 2, 1))), conv, kind="conv2d")
    assert out.values.shape == (1, 2, 2, 1)


# ------------------------------------------------------------ batch norm

def test_batch_norm_train_mode_normalizes(rng):
    bn = BatchNorm2d("bn", 3, dtype=np.float64)
    x = rng.normal(loc=2.0, scale=3.0, size=(4, 6, 5, 3))
    out = bn.forward(T.const(x), training=True).values
    mean = out.reshape(-1, 3).mean(axis=0)
    var = out.reshape(-1, 3).var(axis=0)
    assert np.all(np.abs(mean) < 1e-5)
    assert np.all(np.abs(var - 1.0) < 1e-4)


def test_batch_norm_inference_is_affine(rng):
    bn = BatchNorm2d("bn", 2, dtype=np.float64)
    bn.forward(T.const(rng.normal(size=(8, 4, 4, 2))), training=True)
    x = rng.normal(size=(2, 4, 4, 2))
    a = bn.forward(T.const(x), training=False).values
    mid = bn.forward(T.const(np.zeros_like(x)), training=False).values
    b = bn.forward(T.const(2 * x), training=False).values
    np.testing.assert_allclose((a - mid) * 2 + mid, b, rtol=1e-9, atol=1e-12)


def test_batch_norm_running_variance_positive(rng):
    bn = BatchNorm2d("bn", 2)
    bn.forward(T.const(np.zeros((2, 3, 3, 2))), training=True)
    assert np.all(dict(bn.state())["bn/running_var"] > 0)


# ----------------------------------------------------- special operations

def test_rate_bce_anchor_values():
    """Zero LLRs score 0 (uninformative); confident correct LLRs approach -1."""
    zero = T.rate_bce(T.const(np.zeros((2, 8))),
                      np.zeros((2, 8), dtype=np.int8))
    np.testing.assert_allclose(zero.values, 0.0, atol=1e-12)
    bits = np.array([[0, 1, 1, 0]], dtype=np.int8)
    sure = T.rate_bce(T.const((2.0 * bits - 1.0) * 40.0), bits)
    np.testing.assert_allclose(sure.values, -1.0, atol=1e-12)


def test_rate_bce_gradient_matches_fd(rng):
    bits = rng.integers(0, 2, size=(2, 6)).astype(np.int8)
    v0 = rng.normal(size=(2, 6))

    def f(v):
        return float(T.rate_bce(T.const(v), bits).values)

    x = T.parameter(v0.copy())
    T.backward(T.rate_bce(x, bits))
    np.testing.assert_allclose(x.grad, fd_grad(f, v0), rtol=1e-6, atol=1e-9)


def test_papr_smoothmax_gradient(rng):
    v0 = rng.normal(size=(2, 16, 2))

    def f(v):
        return float(T.papr_smoothmax(T.const(v), tau=8.0).values)

    x = T.parameter(v0.copy())
    T.backward(T.papr_smoothmax(x, tau=8.0))
    np.testing.assert_allclose(x.grad, fd_grad(f, v0), rtol=1e-5, atol=1e-8)


def test_papr_smoothmax_bounds_true_papr(rng):
    v = rng.normal(size=(3, 32, 2))
    p = v[..., 0] ** 2 + v[..., 1] ** 2
    true_papr = (p.max(axis=-1) / p.mean(axis=-1)).mean()
    smooth = float(T.papr_smoothmax(T.const(v), tau=50.0).values)
    assert true_papr <= smooth <= true_papr * 1.2


def test_complex_linear_uses_true_adjoint(rng):
    """Gradient through a complex-linear bridge is exact for real losses."""

    def fwd(z):
        return np.fft.fft(z, norm="ortho")

    def adj(z):
        return np.fft.ifft(z, norm="ortho")

    v0 = rng.normal(size=(4, 2))
    w = rng.normal(size=(4, 2))

    def loss(v):
        out = fwd(v[..., 0] + 1j * v[..., 1])
        return float((np.stack([out.real, out.imag], -1) * w).sum())

    x = T.parameter(v0.copy())
    out = T.complex_linear(x, fwd, adj)
    T.backward(T.sum_all(T.mul(out, T.const(w))))
    np.testing.assert_allclose(x.grad, fd_grad(loss, v0), rtol=1e-7, atol=1e-10)


def test_gather_scatter_re_roundtrip(rng):
    idx = np.array([0, 3, 5, 10])
    x = T.parameter(rng.normal(size=(2, 4, 3, 2)))
    flat = T.gather_re(x, idx)
    assert flat.values.shape == (2, 4, 2)
    back = T.scatter_re(flat, idx, (4, 3))
    grid = np.zeros((2, 12, 2))
    grid[:, idx] = flat.values
    np.testing.assert_allclose(back.values.reshape(2, 12, 2), grid)
    T.backward(T.sum_all(T.mul(back, back)))
    assert np.isfinite(x.grad).all()


def test_normalize_data_power(rng):
    mask = np.zeros((4, 3), dtype=bool)
    mask[:, :2] = True  # data columns; the rest is zeroed
    x = T.const(rng.normal(size=(2, 4, 3, 2)) * 3.0)
    out = T.normalize_data_power(x, mask).values
    z = out[..., 0] + 1j * out[..., 1]
    power = np.mean(np.abs(z[:, mask]) ** 2, axis=-1)
    np.testing.assert_allclose(power, 1.0, rtol=1e-9)
    assert np.array_equal(out[:, ~mask], np.zeros_like(out[:, ~mask]))
    with pytest.raises(UsageError):
        T.normalize_data_power(x, np.zeros((4, 3), dtype=bool))


def test_gather_points_routes_gradients(rng):
    points = T.parameter(rng.normal(size=(4, 2)))
    labels = np.array([[0, 2, 2, 1]])
    out = T.gather_points(points, labels)
    T.backward(T.sum_all(out))
    # each use of a point accumulates one unit of gradient
    np.testing.assert_allclose(points.grad[:, 0], [1.0, 1.0, 2.0, 0.0])


def test_state_dict_roundtrip(rng):
    net = Seq([ResidualBlock("r", 2, 3, kernel_size=(3, 3),
                             rng=np.random.default_rng(11),
                             dtype=np.float64),
               BatchNorm2d("tail", 3, dtype=np.float64)])
    net.forward(T.const(rng.normal(size=(2, 4, 4, 2))), training=True)
    state = net.state_dict()
    net2 = Seq([ResidualBlock("r", 2, 3, kernel_size=(3, 3),
                              rng=np.random.default_rng(99),
                              dtype=np.float64),
                BatchNorm2d("tail", 3, dtype=np.float64)])
    net2.load_state_dict(state)
    x = T.const(rng.normal(size=(1, 4, 4, 2)))
    np.testing.assert_array_equal(net.forward(x).values,
                                  net2.forward(x).values)
    with pytest.raises(ConfigError):
        net2.load_state_dict({**state, "bogus/key": np.zeros(1)})
    with pytest.raises(ConfigError):
        net2.load_state_dict({k: v for k, v in list(state.items())[:2]})
