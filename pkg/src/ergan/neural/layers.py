"""LSTM building blocks, weight initialisation and noise sampling.

Gate blocks are stacked in the order input, forget, cell candidate, output
(``i, f, g, o``) along the first axis of ``W`` (4H x I), ``U`` (4H x H) and
``b`` (4H). Stacked bidirectional layers feed the concatenated
``[forward, backward]`` per-step states (width 2H) into the next layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, as_var, stable_sigmoid
from .params import ParameterStore


def sigmoid(x):
    """Elementwise logistic function, stable for large ``|x|``."""
    if isinstance(x, Var):
        return ad.sigmoid(x)
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("sigmoid input must be finite")
    out = stable_sigmoid(arr)
    return out if out.ndim else float(out)


def dense(x, weights, bias):
    """Affine layer ``weights @ x + bias``; returns an array for array inputs."""
    if any(isinstance(a, Var) for a in (x, weights, bias)):
        return ad.dense(x, weights, bias)
    return ad.dense(x, weights, bias).value


@dataclass(frozen=True)
class LstmCellParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def inputs(self) -> int:
        return self.W.shape[1]

    def __post_init__(self):
        h = self.U.shape[1]
        if self.U.shape != (4 * h, h) or self.W.shape[0] != 4 * h or self.b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )


def lstm_cell_forward(x_t, h_prev, c_prev, params: LstmCellParams):
    """One LSTM step. Works on single vectors or on a leading batch axis."""
    x_t, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev))
    for name, arr in (("x_t", x_t), ("h_prev", h_prev), ("c_prev", c_prev)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite {name}")
    H = params.hidden
    z = x_t @ params.W.T + h_prev @ params.U.T + params.b
    i = stable_sigmoid(z[..., :H])
    f = stable_sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = stable_sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_sequence(x, W, U, b, reverse: bool = False) -> Var:
    """Run one LSTM direction over ``x`` of shape (B, T, I) from zero state.

    Returns the (B, T, H) hidden states indexed by original time position,
    so for ``reverse=True`` row ``t`` holds the state after consuming
    steps ``T-1 .. t``.
    """
    x, W, U, b = as_var(x), as_var(W), as_var(U), as_var(b)
    xv, Wv, Uv, bv = x.value, W.value, U.value, b.value
    B, T, _ = xv.shape
    H = Uv.shape[1]
    steps = range(T - 1, -1, -1) if reverse else range(T)

    # time-major buffers keep each step's slice contiguous
    xw = np.ascontiguousarray((xv @ Wv.T + bv).transpose(1, 0, 2))
    gates = np.empty((T, B, 4 * H))
    cells = np.empty((T, B, H))
    tanh_c = np.empty((T, B, H))
    hs = np.empty((T, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    UT = Uv.T
    scale = np.full(4 * H, 0.5)
    scale[2 * H:3 * H] = 1.0
    shift = np.full(4 * H, 0.5)
    shift[2 * H:3 * H] = 0.0
    for t in steps:
        a = gates[t]
        np.matmul(h, UT, out=a)
        a += xw[t]
        # sigmoid(z) = (1 + tanh(z/2)) / 2 for the i, f, o blocks; tanh for g
        a *= scale
        np.tanh(a, out=a)
        a *= scale
        a += shift
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        tc = tanh_c[t]
        np.tanh(c, out=tc)
        cells[t] = c
        h = hs[t]
        np.multiply(a[:, 3 * H:], tc, out=h)
    out = hs.transpose(1, 0, 2).copy()

    def backward(g_out):
        g_tm = np.ascontiguousarray(g_out.transpose(1, 0, 2))
        # states entering each step, in original time positions
        h_prev = np.zeros_like(hs)
        c_prev = np.zeros_like(cells)
        if reverse:
            h_prev[:-1], c_prev[:-1] = hs[1:], cells[1:]
        else:
            h_prev[1:], c_prev[1:] = hs[:-1], cells[:-1]
        gi, gf = gates[..., :H], gates[..., H:2 * H]
        gg, go = gates[..., 2 * H:3 * H], gates[..., 3 * H:]
        dc_from_h = go * (1.0 - tanh_c * tanh_c)
        dz_from_c = np.concatenate(
            [gg * gi * (1.0 - gi), c_prev * gf * (1.0 - gf), gi * (1.0 - gg * gg)], axis=-1
        )
        dz_from_h = tanh_c * go * (1.0 - go)
        dz_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(steps):
            dh = g_tm[t] + dh_next
            dc = dc_next + dh * dc_from_h[t]
            dz = dz_all[t]
            np.multiply(np.tile(dc, 3), dz_from_c[t], out=dz[:, :3 * H])
            np.multiply(dh, dz_from_h[t], out=dz[:, 3 * H:])
            dc_next = dc * gf[t]
            dh_next = dz @ Uv
        dU = dz_all.reshape(T * B, 4 * H).T @ h_prev.reshape(T * B, H)
        dz_bt = dz_all.transpose(1, 0, 2)
        flat = dz_all.reshape(T * B, 4 * H)
        x_tm = xv.transpose(1, 0, 2).reshape(T * B, -1)
        ad._accumulate(x, dz_bt @ Wv)
        ad._accumulate(W, flat.T @ x_tm)
        ad._accumulate(U, dU)
        ad._accumulate(b, flat.sum(axis=0))

    return ad._node(out, (x, W, U, b), backward)


def layer_names(prefix: str, layer: int, direction: str) -> tuple[str, str, str]:
    base = f"{prefix}lstm{layer}_{direction}_"
    return base + "W", base + "U", base + "b"


def bilstm_stack(x, params, prefix: str, layers: int):
    """Differentiable stacked Bi-LSTM over (B, T, I).

    Returns ``(per_step, final_forward, final_backward)`` for the last layer.
    """
    h = as_var(x)
    for layer in range(layers):
        fw = lstm_sequence(h, *(params[n] for n in layer_names(prefix, layer, "fw")))
        bw = lstm_sequence(h, *(params[n] for n in layer_names(prefix, layer, "bw")), reverse=True)
        h = ad.concat([fw, bw], axis=-1)
    T = h.value.shape[1]
    return h, fw[:, T - 1, :], bw[:, 0, :]


def bilstm_forward(sequence, layers: list[tuple[LstmCellParams, LstmCellParams]]):
    """Plain-array stacked Bi-LSTM.

    ``sequence`` is (T, I) or (B, T, I). Returns the last layer's per-step
    ``[forward, backward]`` states, the final forward state (after step T)
    and the final backward state (after step 1).
    """
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.shape[1] == 0:
        raise ValueError("empty sequence")
    if not np.all(np.isfinite(seq)):
        raise ValueError("non-finite input sequence")
    store = {}
    for layer, (fw, bw) in enumerate(layers):
        for direction, p in (("fw", fw), ("bw", bw)):
            for name, arr in zip(layer_names("", layer, direction), (p.W, p.U, p.b)):
                store[name] = arr
    per_step, last_f, last_b = bilstm_stack(seq, store, "", len(layers))
    per_step, last_f, last_b = per_step.value, last_f.value, last_b.value
    if single:
        return per_step[0], last_f[0], last_b[0]
    return per_step, last_f, last_b


def init_bilstm(rng: np.random.Generator, prefix: str, inputs: int, hidden: int, layers: int):
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias set to 1."""
    bound = 1.0 / np.sqrt(hidden)
    entries = []
    for layer in range(layers):
        width = inputs if layer == 0 else 2 * hidden
        for direction in ("fw", "bw"):
            nW, nU, nb = layer_names(prefix, layer, direction)
            entries.append((nW, rng.uniform(-bound, bound, (4 * hidden, width))))
            entries.append((nU, rng.uniform(-bound, bound, (4 * hidden, hidden))))
            bias = rng.uniform(-bound, bound, 4 * hidden)
            bias[hidden:2 * hidden] = 1.0
            entries.append((nb, bias))
    return entries


def init_dense(rng: np.random.Generator, prefix: str, inputs: int, outputs: int):
    bound = 1.0 / np.sqrt(inputs)
    return [
        (prefix + "dense_W", rng.uniform(-bound, bound, (outputs, inputs))),
        (prefix + "dense_b", rng.uniform(-bound, bound, outputs)),
    ]


def cell_params(store: ParameterStore, prefix: str, layer: int, direction: str) -> LstmCellParams:
    return LstmCellParams(*(store[n] for n in layer_names(prefix, layer, direction)))


def sample_noise(T: int, batch: int, rng) -> np.ndarray:
    """Standard-normal noise of shape (batch, T, 1).

    ``rng`` is a seed or a ``numpy.random.Generator`` (advanced in place).
    """
    if T <= 0 or batch <= 0:
        raise ValueError("T and batch must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.standard_normal((batch, T, 1))
