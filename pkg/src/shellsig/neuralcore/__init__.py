"""Minimal numpy neural stack: tensors, layers with manual backward, optimizers."""

from .checkpoint import load_state, read_checkpoint, save_checkpoint, to_bytes
from .layers import (
    BatchNorm,
    Conv1d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    L2Normalize,
    MaxPool,
    Module,
    Parallel,
    ReLU,
    ResidualBlock1d,
    Sequential,
    conv1d_forward,
    conv2d_forward,
    maxpool_forward,
)
from .optim import OptimizerState, optimizer_step
from .tensor import Tensor
