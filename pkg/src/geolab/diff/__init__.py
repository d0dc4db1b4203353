"""Minimal reverse-mode differentiable tensor engine."""
from .tensor import Parameter, Tensor
from .layers import (
    add, mul, scale, tsum, tmean, take, slice_cols, reshape, concat, relu, tanh, linear,
    conv3x3, batchnorm, depth_concat, flatten, avgpool2x2,
    location_aware_max_pool, rank_constraint_layer, frobenius_normalize_layer,
    mse_loss, huber_loss, sed_loss,
)
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Parameter", "Tensor",
    "add", "mul", "scale", "tsum", "tmean", "take", "slice_cols", "reshape", "concat",
    "relu", "tanh", "linear", "conv3x3", "batchnorm", "depth_concat",
    "flatten", "avgpool2x2", "location_aware_max_pool",
    "rank_constraint_layer", "frobenius_normalize_layer",
    "mse_loss", "huber_loss", "sed_loss",
    "AdamState", "adam_step", "grad_check",
    "load_checkpoint", "save_checkpoint",
]
