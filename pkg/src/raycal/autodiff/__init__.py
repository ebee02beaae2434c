"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from .gradcheck import GradCheckReport, grad_check
from .ops import (add, add_bias, as_tensor, concat, conv2d, cross, div, elementwise,
                  getitem, linear, matmul, mean_axis, mul, neg, pad2d, reduce, relu,
                  reshape, scale_rows, sin, sqrt, square, stack, sub, sum_axis, tanh, transpose)
from .optim import AdamState, adam_step, grad_norm, xavier_bound, xavier_init
from .tensor import Tape, Tensor, active_tape, backward, debug_enabled, set_debug

__all__ = [
    "Tensor", "Tape", "backward", "active_tape", "set_debug", "debug_enabled",
    "add", "sub", "mul", "div", "neg", "relu", "square", "sqrt", "sin", "tanh", "elementwise",
    "matmul", "linear", "add_bias", "scale_rows", "cross", "reduce", "sum_axis",
    "mean_axis", "reshape", "transpose", "getitem", "concat", "stack", "pad2d",
    "conv2d", "as_tensor", "AdamState", "adam_step", "xavier_init", "xavier_bound",
    "grad_norm", "grad_check", "GradCheckReport",
]
