"""Adam with bias correction over a flat list of parameter arrays."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation


@dataclass
class AdamState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are untouched."""
    if not state.m:
        state = AdamState.for_params(params, lr=state.lr, beta1=state.beta1,
                                     beta2=state.beta2, eps=state.eps)
    if not (len(params) == len(grads) == len(state.m)):
        raise ContractViolation("params, grads and moment lists differ in length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not (p.shape == g.shape == m.shape):
            raise ContractViolation(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)
