"""Minimal differentiable-computation substrate: tensors, layers, Adam,
checkpoint container, and finite-difference gradient verification."""

from .tensor import Tensor, Parameter, custom_op, concat, stack, softmax, log_softmax
from .layers import (Module, ModuleList, Linear, Conv1d, LayerNorm,
                     MultiHeadSelfAttention, FeedForward, trunc_normal)
from .optim import ParamGroup, Adam, NonFiniteLossError, forward_backward, groups_from_model
from .gradcheck import GradCheckReport, grad_check, numeric_gradient
from . import checkpoint

__all__ = [
    "Tensor", "Parameter", "custom_op", "concat", "stack", "softmax", "log_softmax",
    "Module", "ModuleList", "Linear", "Conv1d", "LayerNorm",
    "MultiHeadSelfAttention", "FeedForward", "trunc_normal",
    "ParamGroup", "Adam", "NonFiniteLossError", "forward_backward", "groups_from_model",
    "GradCheckReport", "grad_check", "numeric_gradient",
    "checkpoint",
]
