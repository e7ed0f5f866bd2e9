"""Hand-rolled numpy autodiff: tensors, fused ops, modules, optimizer."""

from . import complexops, functional
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .module import Module, ModuleList, fan_in_uniform, uniform_init
from .optim import AdamW
from .tensor import (Parameter, Tensor, add, concat, constant, getitem, glu,
                     linear, matmul, mul, neg, pad_last, prelu, reciprocal,
                     relu, reshape, sigmoid, sub, tabs, tlog, tmean, tsqrt,
                     tsum, ttanh, transpose)

__all__ = [
    "Tensor", "Parameter", "constant",
    "add", "sub", "mul", "neg", "reciprocal", "matmul",
    "tsum", "tmean", "tabs", "tlog", "tsqrt", "ttanh",
    "sigmoid", "relu", "prelu", "glu", "linear",
    "reshape", "transpose", "getitem", "pad_last", "concat",
    "Module", "ModuleList", "uniform_init", "fan_in_uniform",
    "AdamW", "grad_check",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
    "functional", "complexops",
]
