"""From-scratch recurrent network core (NumPy only)."""

from .layers import (LstmCellParams, LstmState, bilstm_forward, dense_forward, lstm_cell_forward,
                     lstm_layer_forward, sigmoid, softmax)
from .losses import binary_cross_entropy, categorical_cross_entropy
from .model import ModelConfig, ModelParams, forward, init_params, loss_and_grad, loss_value
from .optim import AdamState, adam_step, clip_by_global_norm, global_norm

__all__ = [
    "LstmCellParams", "LstmState", "bilstm_forward", "dense_forward", "lstm_cell_forward",
    "lstm_layer_forward", "sigmoid", "softmax", "binary_cross_entropy", "categorical_cross_entropy",
    "ModelConfig", "ModelParams", "forward", "init_params", "loss_and_grad", "loss_value",
    "AdamState", "adam_step", "clip_by_global_norm", "global_norm",
]
