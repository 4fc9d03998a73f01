from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

DTYPE = np.float64


class Tensor:
    """A numeric array with an optional gradient accumulator of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None, dtype=DTYPE):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        if grad is not None:
            self.accumulate(grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g) -> None:
        g = np.asarray(g, dtype=self.data.dtype)
        if g.shape != self.data.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.grad is not None else 'no'})"
