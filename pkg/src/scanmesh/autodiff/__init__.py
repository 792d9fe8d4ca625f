"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import MLP, BatchNorm, Conv3d, Dropout, Linear, Module, Parameter
from .optim import Adam, adam_step
from .tensor import ShapeError, Tape, Tensor, backward, no_grad

__all__ = [
    "Adam", "BatchNorm", "Conv3d", "Dropout", "Linear", "MLP", "Module", "Parameter",
    "ShapeError", "Tape", "Tensor", "adam_step", "backward", "load_checkpoint", "no_grad",
    "ops", "save_checkpoint",
]
