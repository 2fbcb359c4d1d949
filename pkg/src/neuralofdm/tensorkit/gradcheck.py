"""Finite-difference verification of the analytic gradients.

The check projects the network output onto a fixed random direction to get a
scalar loss, runs one analytic backward pass, then compares a random sample
of parameter entries against central differences.  Parameters whose
perturbation flips any relu input sign are resampled: the loss is not
differentiable at a kink, so those comparisons would be meaningless, and the
crossing set has measure zero anyway.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from . import tensor as T


def _forward_loss(net, x_vals: np.ndarray, proj: np.ndarray, trace: list | None):
    T.set_relu_trace(trace)
    try:
        x = T.const(x_vals)
        out = net.forward(x, training=True, update_stats=False)
        loss = T.dot_const(out, proj)
    finally:
        T.set_relu_trace(None)
    return loss


def _traces_equal(a: list, b: list) -> bool:
    if len(a) != len(b):
        return False
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def grad_check(net, x, epsilon: float = 1e-4, num_params: int = 120,
               seed: int = 0) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    Requires the network in float64.  Samples at least ``num_params`` scalar
    parameter entries (more tensors than that exist in both architectures, so
    every parameter tensor family gets coverage).
    """
    params = list(net.params())
    if not params:
        raise UsageError("network has no parameters")
    for name, p in params:
        if p.values.dtype != np.float64:
            raise UsageError(f"grad_check requires float64 parameters ({name} is {p.values.dtype})")
    x_vals = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)

    # one clean forward to learn the output shape, then a fixed projection
    out0 = net.forward(T.const(x_vals), training=True, update_stats=False)
    proj = rng.standard_normal(out0.values.shape)

    net.zero_grad()
    base_trace = []
    loss = _forward_loss(net, x_vals, proj, base_trace)
    T.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params}

    flat_sizes = np.array([p.values.size for _, p in params])
    total = int(flat_sizes.sum())
    order = rng.permutation(total)
    offsets = np.concatenate([[0], np.cumsum(flat_sizes)])

    max_err = 0.0
    checked = 0
    attempts = 0
    for flat in order:
        if checked >= num_params:
            break
        attempts += 1
        if attempts > 8 * num_params:
            break
        ti = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, p = params[ti]
        idx = np.unravel_index(int(flat - offsets[ti]), p.values.shape)
        orig = p.values[idx]

        p.values[idx] = orig + epsilon
        tr_hi: list = []
        l_hi = _forward_loss(net, x_vals, proj, tr_hi).values
        p.values[idx] = orig - epsilon
        tr_lo: list = []
        l_lo = _forward_loss(net, x_vals, proj, tr_lo).values
        p.values[idx] = orig

        if not (_traces_equal(tr_hi, base_trace) and _traces_equal(tr_lo, base_trace)):
            continue  # relu kink crossed, excluded from the sample
        numeric = (l_hi - l_lo) / (2.0 * epsilon)
        err = abs(analytic[name][idx] - numeric) / (abs(numeric) + 1e-12)
        max_err = max(max_err, float(err))
        checked += 1

    # A single activation sitting very close to a kink can exclude many
    # upstream parameters at once; tolerate that, but fail loudly when the
    # majority of the sample is unusable.
    target = min(num_params, total)
    if checked < max(1, target // 2):
        raise UsageError(
            f"grad_check completed only {checked}/{target} comparisons; "
            "input appears to sit on relu kinks")
    return max_err
