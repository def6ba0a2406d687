"""Minimal dense-tensor kernels with reverse-mode gradients."""

from . import ops
from .gradcheck import GradCheckError, GradCheckReport, grad_check
from .module import LayerNorm, Linear, Module, Parameter, normal_init, uniform_init
from .ops import (
    concat, conv1d, conv_transpose1d, dropout, exp, gelu, layer_norm, linear, log,
    log_softmax, matmul, max_pool1d, rms_norm, softmax, softmax_rows, sqrt, stack,
)
from .optim import Adam, AdamState, adam_step
from .random import RngTree
from .tensor import DimensionError, GradTape, Tensor, as_tensor, make_op

__all__ = [
    "Adam", "AdamState", "DimensionError", "GradCheckError", "GradCheckReport", "GradTape",
    "LayerNorm", "Linear", "Module", "Parameter", "RngTree", "Tensor", "adam_step", "as_tensor",
    "concat", "conv1d", "conv_transpose1d", "dropout", "exp", "gelu", "grad_check", "layer_norm",
    "linear", "log", "log_softmax", "make_op", "matmul", "max_pool1d", "normal_init", "ops",
    "rms_norm", "softmax", "softmax_rows", "sqrt", "stack", "uniform_init",
]
