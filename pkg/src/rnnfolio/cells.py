"""Layer primitives: vanilla RNN, LSTM, GRU, Dense and Dropout.

Every forward pass returns a cache holding the intermediates its exact
analytic backward pass needs.  Inputs may be single vectors (shape ``(d,)``)
or batches (shape ``(B, d)``); parameter gradients are summed over the
batch axis.  All functions are pure: parameters are never mutated.

GRU gate/candidate weights act on the concatenation ``[h_prev, x_t]``; the
candidate additionally resets the hidden part through the reset gate.  The
LSTM follows the standard formulation with separate recurrent (``W``) and
input (``U``) weights per gate and a carried cell state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Rng, glorot_init, sigmoid, tanh_act


@dataclass
class GruParams:
    W_r: np.ndarray  # (h, h+x)
    W_z: np.ndarray  # (h, h+x)
    W: np.ndarray    # (h, h+x)
    b_r: np.ndarray  # (h,)
    b_z: np.ndarray  # (h,)
    b: np.ndarray    # (h,)

    @property
    def hidden_size(self) -> int:
        return self.W_r.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_r.shape[1] - self.W_r.shape[0]


@dataclass
class LstmParams:
    W_f: np.ndarray  # (h, h)
    U_f: np.ndarray  # (h, x)
    b_f: np.ndarray
    W_i: np.ndarray
    U_i: np.ndarray
    b_i: np.ndarray
    W_c: np.ndarray
    U_c: np.ndarray
    b_c: np.ndarray
    W_o: np.ndarray
    U_o: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.U_f.shape[1]


@dataclass
class RnnParams:
    W: np.ndarray  # (h, h)
    U: np.ndarray  # (h, x)
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @property
    def input_size(self) -> int:
        return self.U.shape[1]


@dataclass
class DenseParams:
    W: np.ndarray  # (out, in)
    b: np.ndarray
    activation: str = "linear"  # one of {"relu", "linear"}

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ConfigError(f"unknown dense activation {self.activation!r}")


def init_gru_params(hidden: int, inputs: int, rng: Rng) -> GruParams:
    hx = hidden + inputs
    return GruParams(
        W_r=glorot_init(hidden, hx, rng), W_z=glorot_init(hidden, hx, rng),
        W=glorot_init(hidden, hx, rng),
        b_r=np.zeros(hidden), b_z=np.zeros(hidden), b=np.zeros(hidden),
    )


def init_lstm_params(hidden: int, inputs: int, rng: Rng) -> LstmParams:
    def w():
        return glorot_init(hidden, hidden, rng)

    def u():
        return glorot_init(hidden, inputs, rng)

    z = np.zeros(hidden)
    return LstmParams(
        W_f=w(), U_f=u(), b_f=z.copy(),
        W_i=w(), U_i=u(), b_i=z.copy(),
        W_c=w(), U_c=u(), b_c=z.copy(),
        W_o=w(), U_o=u(), b_o=z.copy(),
    )


def init_rnn_params(hidden: int, inputs: int, rng: Rng) -> RnnParams:
    return RnnParams(
        W=glorot_init(hidden, hidden, rng),
        U=glorot_init(hidden, inputs, rng),
        b=np.zeros(hidden),
    )


def init_dense_params(out: int, inputs: int, rng: Rng, activation: str = "linear") -> DenseParams:
    return DenseParams(W=glorot_init(out, inputs, rng), b=np.zeros(out), activation=activation)


def _as_batch(*arrays):
    """Promote 1-D vectors to single-row batches; report whether to squeeze."""
    squeeze = arrays[0].ndim == 1
    if squeeze:
        return [np.atleast_2d(a) for a in arrays], True
    return list(arrays), False


def _maybe_squeeze(squeeze: bool, *arrays):
    out = [a[0] if squeeze else a for a in arrays]
    return out[0] if len(out) == 1 else tuple(out)


# ---------------------------------------------------------------------------
# GRU


def gru_forward(x_t: np.ndarray, h_prev: np.ndarray, p: GruParams):
    (x2, h2), squeeze = _as_batch(np.asarray(x_t, float), np.asarray(h_prev, float))
    h, xi = p.hidden_size, p.input_size
    if x2.shape[1] != xi or h2.shape[1] != h:
        raise DimensionError(
            f"gru_forward: x {x2.shape} / h_prev {h2.shape} incompatible with "
            f"params (h={h}, x={xi})")
    concat = np.concatenate([h2, x2], axis=1)
    r = sigmoid(concat @ p.W_r.T + p.b_r)
    z = sigmoid(concat @ p.W_z.T + p.b_z)
    concat_c = np.concatenate([r * h2, x2], axis=1)
    h_cand = tanh_act(concat_c @ p.W.T + p.b)
    h_t = (1.0 - z) * h2 + z * h_cand
    cache = {"concat": concat, "concat_c": concat_c, "r": r, "z": z,
             "h_cand": h_cand, "h_prev": h2, "squeeze": squeeze}
    return _maybe_squeeze(squeeze, h_t), cache


def gru_backward(dh_t: np.ndarray, cache: dict, p: GruParams):
    (dh,), _ = _as_batch(np.asarray(dh_t, float))
    h = p.hidden_size
    r, z, hc, h_prev = cache["r"], cache["z"], cache["h_cand"], cache["h_prev"]
    if dh.shape != h_prev.shape:
        raise DimensionError(f"gru_backward: dh {dh.shape} vs cache {h_prev.shape}")

    dz = dh * (hc - h_prev)
    dhc = dh * z
    dh_prev = dh * (1.0 - z)

    da_c = dhc * (1.0 - hc * hc)
    dW = da_c.T @ cache["concat_c"]
    db = da_c.sum(axis=0)
    dconcat_c = da_c @ p.W
    drh, dx = dconcat_c[:, :h], dconcat_c[:, h:].copy()
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)
    dW_r = da_r.T @ cache["concat"]
    dW_z = da_z.T @ cache["concat"]
    dconcat = da_r @ p.W_r + da_z @ p.W_z
    dh_prev = dh_prev + dconcat[:, :h]
    dx += dconcat[:, h:]

    grads = GruParams(W_r=dW_r, W_z=dW_z, W=dW,
                      b_r=da_r.sum(axis=0), b_z=da_z.sum(axis=0), b=db)
    sq = cache["squeeze"]
    return grads, _maybe_squeeze(sq, dh_prev), _maybe_squeeze(sq, dx)


# ---------------------------------------------------------------------------
# LSTM


def lstm_forward(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmParams):
    (x2, h2, c2), squeeze = _as_batch(
        np.asarray(x_t, float), np.asarray(h_prev, float), np.asarray(c_prev, float))
    h, xi = p.hidden_size, p.input_size
    if x2.shape[1] != xi or h2.shape[1] != h or c2.shape[1] != h:
        raise DimensionError(
            f"lstm_forward: x {x2.shape} / h {h2.shape} / c {c2.shape} vs (h={h}, x={xi})")
    f = sigmoid(h2 @ p.W_f.T + x2 @ p.U_f.T + p.b_f)
    i = sigmoid(h2 @ p.W_i.T + x2 @ p.U_i.T + p.b_i)
    o = sigmoid(h2 @ p.W_o.T + x2 @ p.U_o.T + p.b_o)
    g = tanh_act(h2 @ p.W_c.T + x2 @ p.U_c.T + p.b_c)
    c_t = f * c2 + i * g
    tc = tanh_act(c_t)
    h_t = o * tc
    cache = {"x": x2, "h_prev": h2, "c_prev": c2, "f": f, "i": i, "o": o,
             "g": g, "c_t": c_t, "tc": tc, "squeeze": squeeze}
    return _maybe_squeeze(squeeze, h_t), _maybe_squeeze(squeeze, c_t), cache


def lstm_backward(dh_t: np.ndarray, dc_t: np.ndarray, cache: dict, p: LstmParams):
    (dh, dc), _ = _as_batch(np.asarray(dh_t, float), np.asarray(dc_t, float))
    f, i, o, g = cache["f"], cache["i"], cache["o"], cache["g"]
    tc, c_prev, h_prev, x = cache["tc"], cache["c_prev"], cache["h_prev"], cache["x"]
    if dh.shape != h_prev.shape:
        raise DimensionError(f"lstm_backward: dh {dh.shape} vs cache {h_prev.shape}")

    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    df = dct * c_prev
    di = dct * g
    dg = dct * i
    dc_prev = dct * f

    da_f = df * f * (1.0 - f)
    da_i = di * i * (1.0 - i)
    da_o = do * o * (1.0 - o)
    da_g = dg * (1.0 - g * g)

    grads = LstmParams(
        W_f=da_f.T @ h_prev, U_f=da_f.T @ x, b_f=da_f.sum(axis=0),
        W_i=da_i.T @ h_prev, U_i=da_i.T @ x, b_i=da_i.sum(axis=0),
        W_c=da_g.T @ h_prev, U_c=da_g.T @ x, b_c=da_g.sum(axis=0),
        W_o=da_o.T @ h_prev, U_o=da_o.T @ x, b_o=da_o.sum(axis=0),
    )
    dh_prev = da_f @ p.W_f + da_i @ p.W_i + da_g @ p.W_c + da_o @ p.W_o
    dx = da_f @ p.U_f + da_i @ p.U_i + da_g @ p.U_c + da_o @ p.U_o
    sq = cache["squeeze"]
    return grads, _maybe_squeeze(sq, dh_prev), _maybe_squeeze(sq, dc_prev), _maybe_squeeze(sq, dx)


# ---------------------------------------------------------------------------
# Vanilla RNN


def rnn_forward(x_t: np.ndarray, h_prev: np.ndarray, p: RnnParams):
    (x2, h2), squeeze = _as_batch(np.asarray(x_t, float), np.asarray(h_prev, float))
    if x2.shape[1] != p.input_size or h2.shape[1] != p.hidden_size:
        raise DimensionError(
            f"rnn_forward: x {x2.shape} / h {h2.shape} vs "
            f"(h={p.hidden_size}, x={p.input_size})")
    h_t = tanh_act(h2 @ p.W.T + x2 @ p.U.T + p.b)
    cache = {"x": x2, "h_prev": h2, "h_t": h_t, "squeeze": squeeze}
    return _maybe_squeeze(squeeze, h_t), cache


def rnn_backward(dh_t: np.ndarray, cache: dict, p: RnnParams):
    (dh,), _ = _as_batch(np.asarray(dh_t, float))
    h_t, h_prev, x = cache["h_t"], cache["h_prev"], cache["x"]
    if dh.shape != h_t.shape:
        raise DimensionError(f"rnn_backward: dh {dh.shape} vs cache {h_t.shape}")
    da = dh * (1.0 - h_t * h_t)
    grads = RnnParams(W=da.T @ h_prev, U=da.T @ x, b=da.sum(axis=0))
    sq = cache["squeeze"]
    return grads, _maybe_squeeze(sq, da @ p.W), _maybe_squeeze(sq, da @ p.U)


# ---------------------------------------------------------------------------
# Dense


def dense_forward(x: np.ndarray, p: DenseParams):
    (x2,), squeeze = _as_batch(np.asarray(x, float))
    if x2.shape[1] != p.W.shape[1]:
        raise DimensionError(f"dense_forward: x {x2.shape} vs W {p.W.shape}")
    pre = x2 @ p.W.T + p.b
    y = np.maximum(pre, 0.0) if p.activation == "relu" else pre
    cache = {"x": x2, "pre": pre, "squeeze": squeeze}
    return _maybe_squeeze(squeeze, y), cache


def dense_backward(dy: np.ndarray, cache: dict, p: DenseParams):
    (dy2,), _ = _as_batch(np.asarray(dy, float))
    x, pre = cache["x"], cache["pre"]
    if dy2.shape != pre.shape:
        raise DimensionError(f"dense_backward: dy {dy2.shape} vs pre {pre.shape}")
    # relu'(0) = 0 by convention
    da = dy2 * (pre > 0.0) if p.activation == "relu" else dy2
    grads = DenseParams(W=da.T @ x, b=da.sum(axis=0), activation=p.activation)
    return grads, _maybe_squeeze(cache["squeeze"], da @ p.W)


# ---------------------------------------------------------------------------
# Dropout (inverted: inference is the identity map)


def dropout(x: np.ndarray, rate: float, mode: str, rng: Rng | None = None):
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, float)
    if mode == "infer" or rate == 0.0:
        mask = np.ones_like(x)
        return x.copy(), mask
    if rng is None:
        raise ConfigError("dropout in train mode requires an Rng")
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask
