"""Minimal float64 differentiable core used by the GAN networks."""

from .adam import AdamState, adam_step
from .autodiff import Var, grad, value_and_grad
from .layers import (
    LstmCellParams,
    bilstm_forward,
    bilstm_stack,
    dense,
    lstm_cell_forward,
    lstm_sequence,
    sample_noise,
    sigmoid,
)
from .params import CheckpointError, ParameterStore, load_params, save_params

__all__ = [
    "AdamState",
    "CheckpointError",
    "LstmCellParams",
    "ParameterStore",
    "Var",
    "adam_step",
    "bilstm_forward",
    "bilstm_stack",
    "dense",
    "grad",
    "load_params",
    "lstm_cell_forward",
    "lstm_sequence",
    "sample_noise",
    "save_params",
    "sigmoid",
    "value_and_grad",
]
