"""Minimal reverse-mode autodiff with exactly the layers the transceiver needs."""

from .tensor import (
    DiffTensor,
    add,
    add_const,
    backward,
    batch_norm,
    clip,
    complex_linear,
    concat,
    const,
    conv2d,
    default_dtype,
    depthwise_conv2d,
    dot_const,
    gather_points,
    gather_re,
    mean_all,
    mul,
    normalize_data_power,
    papr_smoothmax,
    parameter,
    rate_bce,
    relu,
    scale,
    scatter_re,
    set_default_dtype,
    sum_all,
)
from .layers import (
    BatchNorm2d,
    Conv2d,
    Layer,
    Network,
    ReLU,
    ResidualBlock,
    SeparableConv2d,
    forward_layer,
)
from .gradcheck import grad_check

__all__ = [
    "DiffTensor", "add", "add_const", "backward", "batch_norm", "clip",
    "complex_linear", "concat", "const", "conv2d", "default_dtype",
    "depthwise_conv2d", "dot_const", "gather_points", "gather_re", "mean_all",
    "mul", "normalize_data_power", "papr_smoothmax", "parameter", "rate_bce",
    "relu", "scale", "scatter_re", "set_default_dtype", "sum_all",
    "BatchNorm2d", "Conv2d", "Layer", "Network", "ReLU", "ResidualBlock",
    "SeparableConv2d", "forward_layer", "grad_check",
]
