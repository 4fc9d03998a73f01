"""SGD, momentum and Adam updates.

The update rules follow the textbook forms exactly:

    SGD:       w <- w - lr * g
    Momentum:  v <- beta * v + (1 - beta) * g;   w <- w - lr * v
    Adam:      m <- b1 * m + (1 - b1) * g;  v <- b2 * v + (1 - b2) * g^2
               w <- w - lr * m / (sqrt(v) + eps)

Adam applies no bias correction unless ``bias_correction=True``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class OptimizerState:
    kind: str = "sgd"
    lr: float = 0.001
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bias_correction: bool = False
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def optimizer_step(params: list[Tensor], state: OptimizerState, grads=None) -> None:
    """Update ``params`` in place from their ``.grad`` (or explicit ``grads``)."""
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    if len(grads) != len(params):
        raise ShapeMismatch("one gradient per parameter required")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise ShapeMismatch(f"gradient {np.shape(g)} does not match parameter {p.shape}")
    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p.data -= state.lr * g
        return
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        if state.kind == "adam":
            state.v = [np.zeros_like(p.data) for p in params]
    if state.kind == "momentum":
        b = state.beta
        for p, g, v in zip(params, grads, state.m):
            v *= b
            v += (1 - b) * g
            p.data -= state.lr * v
        return
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if state.bias_correction:
            mh = m / (1 - b1**state.step)
            vh = v / (1 - b2**state.step)
        else:
            mh, vh = m, v
        p.data -= state.lr * mh / (np.sqrt(vh) + state.eps)
