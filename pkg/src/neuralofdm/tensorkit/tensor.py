"""Reverse-mode automatic differentiation over dense real arrays.

Activations use a (batch, height, width, channels) layout where height is the
subcarrier axis and width the OFDM-symbol axis.  The graph is built eagerly by
the op functions below; ``backward`` runs one reverse sweep and then drops all
graph edges so parameter tensors can be reused for the next step.

Complex-valued signal processing (FFTs, channel convolution) enters the graph
through ``complex_linear``, which wraps a complex-linear map together with its
adjoint.  For a real-valued loss the gradient of y = T(x) pulls back through
the adjoint T^H exactly, so the surrounding physics stays in plain numpy.

Only float32/float64 are supported.  float64 is used for gradient checking.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as _sfft

from ..errors import NumericError, UsageError

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"unsupported dtype {dtype}, use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class DiffTensor:
    """Node in the autodiff graph.

    ``values`` holds the forward result.  ``grad`` is lazily materialized with
    the same shape.  Non-leaf nodes carry a backward closure plus references
    to their parent nodes; both are dropped after the backward sweep.
    """

    __slots__ = ("values", "requires_grad", "name", "_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, name=None, parents=(), backward=None):
        self.values = np.asarray(values)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self) -> None:
        self._grad = None

    def accumulate(self, g: np.ndarray, fresh: bool = False) -> None:
        """Add ``g`` into this tensor's gradient.

        ``fresh`` marks ``g`` as newly allocated and unshared, letting the
        first accumulation take ownership instead of copying.
        """
        if self._grad is None:
            self._grad = g if fresh else g.copy()
        else:
            self._grad += g

    def __repr__(self):
        kind = "leaf" if self.is_leaf() else "node"
        return f"DiffTensor({kind}, shape={self.values.shape}, dtype={self.values.dtype}, name={self.name})"


def parameter(values, name=None) -> DiffTensor:
    return DiffTensor(np.array(values, copy=True), requires_grad=True, name=name)


def const(values, name=None) -> DiffTensor:
    return DiffTensor(np.asarray(values), requires_grad=False, name=name)


def _topo_order(root: DiffTensor) -> list[DiffTensor]:
    order: list[DiffTensor] = []
    seen: set[int] = set()
    stack: list[tuple[DiffTensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: DiffTensor) -> dict[DiffTensor, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns a map from reachable leaf tensors with requires_grad to their
    accumulated gradients.  All graph edges are cleared afterwards, and
    intermediate activation gradients are released.
    """
    if loss.values.shape != ():
        raise UsageError(f"backward expects a scalar loss, got shape {loss.values.shape}")
    order = _topo_order(loss)
    loss._grad = np.ones((), dtype=loss.values.dtype)
    grads: dict[DiffTensor, np.ndarray] = {}
    for node in reversed(order):
        if node._backward is not None and node._grad is not None:
            node._backward(node._grad)
        if node.is_leaf():
            if node.requires_grad and node._grad is not None:
                grads[node] = node._grad
        else:
            node._grad = None
        node._backward = None
        node._parents = ()
    return grads


def _needs_grad(*tensors: DiffTensor) -> bool:
    return any(t.requires_grad for t in tensors)


def _node(values, parents, backward_fn, name=None) -> DiffTensor:
    req = _needs_grad(*parents)
    return DiffTensor(values, requires_grad=req, name=name,
                      parents=parents if req else (),
                      backward=backward_fn if req else None)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.values.shape != b.values.shape:
        raise UsageError(f"add shape mismatch {a.values.shape} vs {b.values.shape}")
    out_vals = a.values + b.values

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return _node(out_vals, (a, b), bwd)


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.values.shape != b.values.shape:
        raise UsageError(f"mul shape mismatch {a.values.shape} vs {b.values.shape}")
    out_vals = a.values * b.values

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * b.values, fresh=True)
        if b.requires_grad:
            b.accumulate(g * a.values, fresh=True)

    return _node(out_vals, (a, b), bwd)


def scale(x: DiffTensor, c: float) -> DiffTensor:
    c = float(c)

    def bwd(g):
        x.accumulate(g * c, fresh=True)

    return _node(x.values * np.asarray(c, dtype=x.values.dtype), (x,), bwd)


def add_const(x: DiffTensor, c) -> DiffTensor:
    c = np.asarray(c, dtype=x.values.dtype)

    def bwd(g):
        x.accumulate(g)

    return _node(x.values + c, (x,), bwd)


_relu_trace: list | None = None


def set_relu_trace(trace: list | None) -> None:
    """Install a list that collects packed relu input signs (for grad_check)."""
    global _relu_trace
    _relu_trace = trace


def relu(x: DiffTensor) -> DiffTensor:
    mask = x.values > 0
    if _relu_trace is not None:
        _relu_trace.append(np.packbits(mask.ravel()))
    out_vals = np.where(mask, x.values, np.asarray(0, dtype=x.values.dtype))

    def bwd(g):
        x.accumulate(np.where(mask, g, np.asarray(0, dtype=g.dtype)), fresh=True)

    return _node(out_vals, (x,), bwd)


def clip(x: DiffTensor, lo: float, hi: float) -> DiffTensor:
    """Hard clip; gradient is zero in the saturated regions."""
    out_vals = np.clip(x.values, lo, hi)
    inside = (x.values > lo) & (x.values < hi)

    def bwd(g):
        x.accumulate(np.where(inside, g, np.asarray(0, dtype=g.dtype)), fresh=True)

    return _node(out_vals, (x,), bwd)


def concat(tensors: Sequence[DiffTensor], axis: int = -1) -> DiffTensor:
    vals = [t.values for t in tensors]
    out_vals = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t.accumulate(np.ascontiguousarray(p), fresh=True)

    return _node(out_vals, tuple(tensors), bwd)


def sum_all(x: DiffTensor) -> DiffTensor:
    def bwd(g):
        x.accumulate(np.full_like(x.values, g), fresh=True)

    return _node(np.asarray(x.values.sum(), dtype=x.values.dtype), (x,), bwd)


def mean_all(x: DiffTensor) -> DiffTensor:
    n = x.values.size

    def bwd(g):
        x.accumulate(np.full_like(x.values, g / n), fresh=True)

    return _node(np.asarray(x.values.mean(), dtype=x.values.dtype), (x,), bwd)


def dot_const(x: DiffTensor, w) -> DiffTensor:
    """Scalar projection sum(x * w) against a fixed array; used by grad_check."""
    w = np.asarray(w, dtype=x.values.dtype)

    def bwd(g):
        x.accumulate(w * g, fresh=True)

    return _node(np.asarray(np.vdot(x.values, w), dtype=x.values.dtype), (x,), bwd)


def gather_re(x: DiffTensor, flat_idx: np.ndarray) -> DiffTensor:
    """Pick resource elements at flattened (height*width) positions.

    (B, H, W, C) -> (B, N, C).  Indices must be unique.
    """
    b, h, w, c = x.values.shape
    flat = x.values.reshape(b, h * w, c)
    out_vals = np.ascontiguousarray(flat[:, flat_idx, :])

    def bwd(g):
        buf = np.zeros((b, h * w, c), dtype=g.dtype)
        buf[:, flat_idx, :] = g
        x.accumulate(buf.reshape(b, h, w, c), fresh=True)

    return _node(out_vals, (x,), bwd)


def scatter_re(x: DiffTensor, flat_idx: np.ndarray, hw: tuple[int, int]) -> DiffTensor:
    """Place (B, N, C) entries into a zeroed (B, H, W, C) grid."""
    b, n, c = x.values.shape
    h, w = hw
    buf = np.zeros((b, h * w, c), dtype=x.values.dtype)
    buf[:, flat_idx, :] = x.values

    def bwd(g):
        gf = g.reshape(b, h * w, c)
        x.accumulate(np.ascontiguousarray(gf[:, flat_idx, :]), fresh=True)

    return _node(buf.reshape(b, h, w, c), (x,), bwd)


def gather_points(points: DiffTensor, labels: np.ndarray) -> DiffTensor:
    """Constellation lookup: points (K, 2) indexed by integer labels (...).

    Gradient scatters back with repetition handled by bincount.
    """
    k = points.values.shape[0]
    out_vals = points.values[labels]

    def bwd(g):
        flat_lab = labels.ravel()
        gf = g.reshape(-1, points.values.shape[1])
        dp = np.stack(
            [np.bincount(flat_lab, weights=gf[:, j], minlength=k) for j in range(gf.shape[1])],
            axis=1,
        ).astype(g.dtype)
        points.accumulate(dp, fresh=True)

    return _node(out_vals, (points,), bwd)


def normalize_data_power(x: DiffTensor, mask: np.ndarray, eps: float = 1e-12) -> DiffTensor:
    """Zero non-masked REs and scale so the masked-RE mean power is 1.

    x is (B, H, W, 2) with the trailing axis an (I, Q) pair; power per RE is
    the squared magnitude.  The scale is computed per batch element.
    """
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise UsageError("normalize_data_power needs a non-empty mask")
    m4 = mask[None, :, :, None]
    p = np.where(m4, x.values, 0.0)
    power = np.einsum("bhwc,bhwc->b", p, p) / n
    s = np.sqrt(power + eps).astype(x.values.dtype)
    out_vals = p / s[:, None, None, None]

    def bwd(g):
        gm = np.where(m4, g, 0.0)
        inner = np.einsum("bhwc,bhwc->b", gm, p)  # sum g*x over masked REs
        corr = inner / (n * power + n * eps)
        dx = (gm - p * corr[:, None, None, None]) / s[:, None, None, None]
        x.accumulate(dx.astype(g.dtype), fresh=True)

    return _node(out_vals, (x,), bwd)


def complex_linear(
    x: DiffTensor,
    forward_fn: Callable[[np.ndarray], np.ndarray],
    adjoint_fn: Callable[[np.ndarray], np.ndarray],
    name: str | None = None,
) -> DiffTensor:
    """Apply a complex-linear map given as (forward, adjoint) callables.

    x has a trailing (Re, Im) axis of size 2; the callables see/return complex
    arrays without that axis.  adjoint_fn must implement T^H, which makes the
    real-pair gradient exact for real-valued losses.
    """
    xc = x.values[..., 0] + 1j * x.values[..., 1]
    yc = forward_fn(xc)
    out_vals = np.stack([yc.real, yc.imag], axis=-1).astype(x.values.dtype)

    def bwd(g):
        gc = g[..., 0] + 1j * g[..., 1]
        dc = adjoint_fn(gc)
        dx = np.stack([dc.real, dc.imag], axis=-1).astype(g.dtype)
        x.accumulate(dx, fresh=True)

    return _node(out_vals, (x,), bwd, name=name)


# ---------------------------------------------------------------------------
# convolution

def _same_pad(k: int, d: int) -> int:
    eff = (k - 1) * d + 1
    if eff % 2 == 0:
        raise UsageError(f"same padding needs odd effective kernel, got {eff}")
    return (eff - 1) // 2


def conv2d(x: DiffTensor, kernel: DiffTensor, bias: DiffTensor | None,
           dilation: tuple[int, int] = (1, 1)) -> DiffTensor:
    """Dense 2D convolution, NHWC, same padding, per-axis dilation.

    Implemented as a sum of shifted (B*H*W, Cin) @ (Cin, Cout) matmuls; the
    kernel tap count is small everywhere this is used.
    """
    b, h, w, cin = x.values.shape
    kh, kw, kcin, cout = kernel.values.shape
    if kcin != cin:
        raise UsageError(f"conv2d expects {kcin} input channels, got {cin}")
    dh, dw = dilation
    ph, pw = _same_pad(kh, dh), _same_pad(kw, dw)
    xp = np.pad(x.values, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((b * h * w, cout), dtype=x.values.dtype)
    kv = kernel.values
    for i in range(kh):
        for j in range(kw):
            sl = xp[:, i * dh:i * dh + h, j * dw:j * dw + w, :]
            out += sl.reshape(-1, cin) @ kv[i, j]
    out_vals = out.reshape(b, h, w, cout)
    if bias is not None:
        out_vals = out_vals + bias.values

    def bwd(g):
        gf = g.reshape(-1, cout)
        if kernel.requires_grad:
            dk = np.empty_like(kernel.values)
            for i in range(kh):
                for j in range(kw):
                    sl = xp[:, i * dh:i * dh + h, j * dw:j * dw + w, :]
                    dk[i, j] = sl.reshape(-1, cin).T @ gf
            kernel.accumulate(dk, fresh=True)
        if bias is not None and bias.requires_grad:
            bias.accumulate(gf.sum(axis=0), fresh=True)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i * dh:i * dh + h, j * dw:j * dw + w, :] += (
                        gf @ kv[i, j].T).reshape(b, h, w, cin)
            x.accumulate(np.ascontiguousarray(dxp[:, ph:ph + h, pw:pw + w, :]), fresh=True)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _node(out_vals, parents, bwd)


def depthwise_conv2d(x: DiffTensor, kernel: DiffTensor,
                     dilation: tuple[int, int] = (1, 1)) -> DiffTensor:
    """Per-channel 2D convolution via FFT, NHWC, same padding.

    FFT over zero-padded spatial planes vectorizes across batch and channels,
    which on a single core beats explicit tap loops for the kernel sizes used
    by the receiver.  The spectrum of the padded input is cached for backward.
    """
    b, h, w, c = x.values.shape
    kh, kw, kc = kernel.values.shape
    if kc != c:
        raise UsageError(f"depthwise_conv2d expects {kc} channels, got {c}")
    dh, dw = dilation
    ph, pw = _same_pad(kh, dh), _same_pad(kw, dw)
    ekh, ekw = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    fh = _sfft.next_fast_len(h + ekh - 1)
    fw = _sfft.next_fast_len(w + ekw - 1)

    # dilated kernel image, flipped so spectral multiply implements correlation
    kd = np.zeros((ekh, ekw, c), dtype=x.values.dtype)
    kd[::dh, ::dw, :] = kernel.values
    xf = _sfft.rfft2(x.values, s=(fh, fw), axes=(1, 2))
    kf = _sfft.rfft2(kd[::-1, ::-1, :], s=(fh, fw), axes=(0, 1))
    full = _sfft.irfft2(xf * kf[None], s=(fh, fw), axes=(1, 2))
    out_vals = np.ascontiguousarray(full[:, ekh - 1 - ph:ekh - 1 - ph + h,
                                         ekw - 1 - pw:ekw - 1 - pw + w, :])

    def bwd(g):
        gp = np.zeros((b, fh, fw, c), dtype=g.dtype)
        gp[:, ph:ph + h, pw:pw + w, :] = g
        gf_ = _sfft.rfft2(gp, axes=(1, 2))
        if x.requires_grad:
            dxf = _sfft.irfft2(gf_ * np.conj(kf)[None], s=(fh, fw), axes=(1, 2))
            x.accumulate(np.ascontiguousarray(dxf[:, :h, :w, :]), fresh=True)
        if kernel.requires_grad:
            # dL/dk[t] = sum_n gp[n + t - 2p] x0[n]: correlation at lags t - 2p,
            # negative lags wrap around the (alias-free) circular buffer
            corr = _sfft.irfft2((np.conj(gf_) * xf).sum(axis=0), s=(fh, fw), axes=(0, 1))
            rows = (np.arange(kh) * dh - 2 * ph) % fh
            cols = (np.arange(kw) * dw - 2 * pw) % fw
            dk = np.ascontiguousarray(corr[np.ix_(rows, cols)])
            kernel.accumulate(dk.astype(kernel.values.dtype), fresh=True)

    return _node(out_vals, (x, kernel), bwd)


def batch_norm(x: DiffTensor, gamma: DiffTensor, beta: DiffTensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-6,
               update_stats: bool = True) -> DiffTensor:
    """Per-channel batch normalization over (B, H, W) with affine output.

    In training mode the batch statistics normalize, and running statistics
    are updated in place (unless frozen for gradient checking).  Inference
    mode is a deterministic affine map from the running statistics.
    """
    v = x.values
    axes = tuple(range(v.ndim - 1))
    if training:
        mean = v.mean(axis=axes)
        var = v.var(axis=axes)
        if update_stats:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var
            np.maximum(running_var, 1e-30, out=running_var)
    else:
        mean = running_mean.astype(v.dtype)
        var = running_var.astype(v.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mean) * inv
    out_vals = (gamma.values * xhat + beta.values).astype(v.dtype)
    n = v.size // v.shape[-1]

    def bwd(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=axes), fresh=True)
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=axes), fresh=True)
        if x.requires_grad:
            dxhat = g * gamma.values
            if training:
                s1 = dxhat.sum(axis=axes)
                s2 = (dxhat * xhat).sum(axis=axes)
                dx = (dxhat - s1 / n - xhat * (s2 / n)) * inv
            else:
                dx = dxhat * inv
            x.accumulate(dx.astype(g.dtype), fresh=True)

    return _node(out_vals, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# losses

_LN2 = math.log(2.0)


def rate_bce(llr: DiffTensor, bits: np.ndarray) -> DiffTensor:
    """Mean binary cross-entropy of LLRs against bits, in bits, minus 1.

    Positive LLR means bit 1, so the LLR is the logit of the bit.  The result
    is the (negated, shifted) per-bit achievable rate proxy used for training.
    """
    L = llr.values
    bts = np.asarray(bits, dtype=L.dtype)
    if bts.shape != L.shape:
        raise UsageError(f"bits shape {bts.shape} does not match llr {L.shape}")
    # stable BCE with logits, natural log
    bce = np.maximum(L, 0.0) - L * bts + np.log1p(np.exp(-np.abs(L)))
    out = np.asarray(bce.mean() / _LN2 - 1.0, dtype=L.dtype)
    ntot = L.size

    def bwd(g):
        sig = 1.0 / (1.0 + np.exp(-L))
        llr.accumulate(((sig - bts) * (g / (_LN2 * ntot))).astype(L.dtype), fresh=True)

    return _node(out, (llr,), bwd)


def papr_smoothmax(x_time: DiffTensor, tau: float = 10.0) -> DiffTensor:
    """Differentiable PAPR surrogate of a complex time-domain frame.

    x_time is (B, L, 2).  The peak is replaced by a log-sum-exp upper bound
    with temperature tau; the output is the batch mean of peak/mean power.
    """
    v = x_time.values
    p = v[..., 0] ** 2 + v[..., 1] ** 2  # (B, L)
    length = p.shape[-1]
    mu = p.mean(axis=-1)
    m0 = p.max(axis=-1, keepdims=True)
    e = np.exp(tau * (p - m0))
    z = e.sum(axis=-1)
    smax = m0[:, 0] + np.log(z) / tau
    papr = smax / mu
    out = np.asarray(papr.mean(), dtype=v.dtype)
    nb = p.shape[0]

    def bwd(g):
        soft = e / z[:, None]
        dp = (soft / mu[:, None] - (smax / (mu ** 2 * length))[:, None]) * (g / nb)
        dx = np.empty_like(v)
        dx[..., 0] = 2.0 * v[..., 0] * dp
        dx[..., 1] = 2.0 * v[..., 1] * dp
        x_time.accumulate(dx, fresh=True)

    return _node(out, (x_time,), bwd)
