"""Minimal tensor, layer, loss and optimizer engine."""
from dfr.nn.grad import backward, finite_diff_grad, numerical_grad
from dfr.nn.layers import LayerSpec, Sequential
from dfr.nn.optim import Adam, AdamState, adam_step
from dfr.nn.tensor import Tensor, conv2d, dense, flatten, mae_loss, maxpool2d, relu

__all__ = [
    "Adam",
    "AdamState",
    "LayerSpec",
    "Sequential",
    "Tensor",
    "adam_step",
    "backward",
    "conv2d",
    "dense",
    "finite_diff_grad",
    "flatten",
    "mae_loss",
    "maxpool2d",
    "numerical_grad",
    "relu",
]
