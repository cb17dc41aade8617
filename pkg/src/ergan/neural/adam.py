"""Adam with bias-corrected moment estimates, as a pure function."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .params import ParameterStore


@dataclass(frozen=True)
class AdamState:
    m: ParameterStore
    v: ParameterStore
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterStore, **hyper) -> AdamState:
        return cls(m=params.zeros_like(), v=params.zeros_like(), **hyper)


def adam_step(params: ParameterStore, grads: ParameterStore, state: AdamState):
    """Return ``(new_params, new_state)``; inputs are left untouched."""
    if params.shapes() != grads.shapes() or params.shapes() != state.m.shapes():
        raise ValueError("params, grads and optimizer state disagree on shapes")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for name, p in params.items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append((name, p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)))
        new_m.append((name, m))
        new_v.append((name, v))
    return ParameterStore(new_p), replace(
        state, m=ParameterStore(new_m), v=ParameterStore(new_v), t=t
    )
