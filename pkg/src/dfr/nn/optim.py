"""Adam optimizer."""
from dataclasses import dataclass, field

import numpy as np

from dfr.errors import DimensionError


@dataclass
class AdamState:
    """Moment estimates for a list of parameter arrays.

    ``m`` and ``v`` are created lazily on the first step so they match the
    parameter shapes exactly.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """Apply one bias-corrected Adam update to ``params`` in place.

    Returns ``(params, state)``; ``state.t`` is incremented.
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise DimensionError(f"parameter shape {p.shape} vs gradient {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """Binds an :class:`AdamState` to a fixed list of Tensor parameters."""

    def __init__(self, tensors, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in self.tensors]
        adam_step([t.data for t in self.tensors], grads, self.state)

    def zero_grad(self):
        for t in self.tensors:
            t.zero_grad()
