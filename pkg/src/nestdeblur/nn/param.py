from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Param:
    """A named parameter tensor with its gradient accumulator."""

    name: str
    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    @property
    def size(self):
        return int(self.value.size)

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = np.zeros_like(self.value)
