from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def moments_for(self, p):
        if p.name not in self.m:
            self.m[p.name] = np.zeros_like(p.value)
            self.v[p.name] = np.zeros_like(p.value)
        return self.m[p.name], self.v[p.name]


def adam_step(params, state):
    """Apply one bias-corrected Adam update in place and zero the gradients.

    The whole step is rejected, before any parameter moves, if a gradient
    contains NaN or Inf.
    """
    trainable = [p for p in params if p.trainable]
    for p in trainable:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {p.name!r}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p in trainable:
        m, v = state.moments_for(p)
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.value -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.value.dtype)
        p.zero_grad()
    return params, state
