"""Central finite differences for checking reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import grad, value_of
from .params import ParameterStore


def numeric_grad(loss_fn, params: ParameterStore, step: float = 1e-5) -> ParameterStore:
    """Perturb every entry by ``±step`` and difference the scalar loss."""
    x = params.flat()
    out = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += step
        down[i] -= step
        f_up = float(value_of(loss_fn(params.from_flat(up))))
        f_down = float(value_of(loss_fn(params.from_flat(down))))
        out[i] = (f_up - f_down) / (2.0 * step)
    return params.from_flat(out)


def max_relative_error(loss_fn, params: ParameterStore, step: float = 1e-5,
                       floor: float = 1e-8) -> float:
    """Largest ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``."""
    a = grad(loss_fn, params).flat()
    n = numeric_grad(loss_fn, params, step).flat()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
