"""Numeric core: autodiff tensors, layers, optimizer, checkpoints."""

from . import tensor
from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .layers import (
    Attention,
    Conv1d,
    GraphConv,
    GRUCell,
    LayerNorm,
    Linear,
    Module,
    flops,
    gru_flops,
    run_gru,
    uniform_init,
)
from .optim import Adam, adam_step
from .tensor import Tensor, no_grad, op_counter, recording

__all__ = [
    "Adam",
    "Attention",
    "Conv1d",
    "FORMAT_VERSION",
    "GraphConv",
    "GRUCell",
    "LayerNorm",
    "Linear",
    "Module",
    "Tensor",
    "adam_step",
    "flops",
    "gru_flops",
    "load_checkpoint",
    "no_grad",
    "op_counter",
    "recording",
    "run_gru",
    "save_checkpoint",
    "tensor",
    "uniform_init",
]
