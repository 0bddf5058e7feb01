"""Global, local-m and local-p attention, output combination and input feeding.

Encoder positions are 1-based in everything that talks about alignment
(window bounds, the predicted centre ``p_t``); array indices stay 0-based.
All functions take batched tensors (``enc_top`` ``[B, T, H]``, ``d_t``
``[B, d]``) and also accept a single unbatched sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .layers import uniform
from .tensor import Tensor

DEFAULT_WINDOW = 3


@dataclass
class AttentionParams:
    w1: Tensor    # [a, H] encoder-state projection
    w2: Tensor    # [a, d] decoder-state projection
    b_a: Tensor   # [a]
    v: Tensor     # [a]
    w_p: Tensor | None = None  # [a, d], local-p only
    v_p: Tensor | None = None  # [a], local-p only
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        a = self.v.shape[0]
        if a <= 0 or self.window < 1:
            raise DimensionError("attention size must be positive and window >= 1")
        if self.w1.shape[0] != a or self.w2.shape[0] != a or self.b_a.shape != (a,):
            raise DimensionError("attention parameter shapes disagree on the attention size")

    @property
    def sigma(self) -> float:
        return self.window / 2.0

    @classmethod
    def init(cls, rng, enc_dim: int, dec_dim: int, size: int, window: int = DEFAULT_WINDOW,
             predictive: bool = False) -> "AttentionParams":
        def p(shape):
            return Tensor(uniform(rng, shape), requires_grad=True)

        w_p = v_p = None
        parts = [p((size, enc_dim)), p((size, dec_dim)), p((size,)), p((size,))]
        if predictive:
            w_p, v_p = p((size, dec_dim)), p((size,))
        return cls(*parts, w_p=w_p, v_p=v_p, window=window)


@dataclass
class AttentionStep:
    weights: Tensor           # [B, T]; zero outside the support
    context: Tensor           # [B, H]
    support: np.ndarray       # bool [B, T]
    center: np.ndarray | None = None  # [B] predicted/assumed centre p_t (local variants)


def _lift(enc_top: Tensor, d_t: Tensor, lengths):
    if enc_top.ndim == 2:
        enc_top = enc_top.reshape(1, *enc_top.shape)
        d_t = d_t.reshape(1, -1)
        single = True
    else:
        single = False
    B, steps = enc_top.shape[0], enc_top.shape[1]
    if steps == 0:
        raise ContractError("attention over an empty encoder sequence")
    lengths = np.full(B, steps) if lengths is None else np.asarray(lengths, dtype=np.int64)
    return enc_top, d_t, lengths, single


def _unlift(step: AttentionStep, single: bool) -> AttentionStep:
    if not single:
        return step
    center = None if step.center is None else step.center[0]
    return AttentionStep(step.weights[0], step.context[0], step.support[0], center)


def encoder_keys(enc_top: Tensor, params: AttentionParams) -> Tensor:
    """``W1 h_i`` for every position; depends only on the encoder, so callers cache it."""
    if enc_top.ndim == 2:
        enc_top = enc_top.reshape(1, *enc_top.shape)
    return T.linear(enc_top, params.w1)


def scores(enc_top: Tensor, d_t: Tensor, params: AttentionParams, keys: Tensor | None = None) -> Tensor:
    """``u_i = v . tanh(W1 h_i + W2 d_t + b_a)`` for all positions, shape ``[B, T]``."""
    if keys is None:
        keys = encoder_keys(enc_top, params)
    B, steps, a = keys.shape
    query = T.linear(d_t, params.w2, params.b_a).reshape(B, 1, a)
    hidden = T.tanh(keys + query)
    return T.linear(hidden, params.v.reshape(1, a)).reshape(B, steps)


def _valid(lengths: np.ndarray, steps: int) -> np.ndarray:
    return np.arange(steps)[None, :] < lengths[:, None]


def _context(weights: Tensor, enc_top: Tensor) -> Tensor:
    B, steps = weights.shape
    return (weights.reshape(B, steps, 1) * enc_top).sum(axis=1)


def window_support(lo: np.ndarray, hi: np.ndarray, lengths: np.ndarray, steps: int) -> np.ndarray:
    """Positions ``i`` (1-based) with ``lo <= i <= hi`` inside each sequence."""
    pos = np.arange(1, steps + 1)[None, :]
    return (pos >= lo[:, None]) & (pos <= hi[:, None]) & _valid(lengths, steps)


def global_attend(enc_top: Tensor, d_t: Tensor, params: AttentionParams, lengths=None,
                  keys: Tensor | None = None) -> AttentionStep:
    enc_top, d_t, lengths, single = _lift(enc_top, d_t, lengths)
    support = _valid(lengths, enc_top.shape[1])
    weights = T.softmax(scores(enc_top, d_t, params, keys), mask=support)
    return _unlift(AttentionStep(weights, _context(weights, enc_top), support), single)


def local_m_attend(enc_top: Tensor, d_t: Tensor, t: int, params: AttentionParams, lengths=None,
                   keys: Tensor | None = None) -> AttentionStep:
    """Monotonic local attention at decoder step ``t`` (1-based).

    The centre is ``min(t, T_g)`` so steps past the end of the word keep a
    valid window on the last positions.
    """
    if t < 1:
        raise ContractError(f"decoder step index is 1-based, got {t}")
    enc_top, d_t, lengths, single = _lift(enc_top, d_t, lengths)
    center = np.minimum(t, lengths)
    D = params.window
    support = window_support(center - D, center + D, lengths, enc_top.shape[1])
    weights = T.softmax(scores(enc_top, d_t, params, keys), mask=support)
    step = AttentionStep(weights, _context(weights, enc_top), support, center.astype(np.float64))
    return _unlift(step, single)


def predict_center(d_t: Tensor, params: AttentionParams, lengths: np.ndarray) -> Tensor:
    """``p_t = T_g * sigmoid(v_p . tanh(W_p d_t))`` as a ``[B, 1]`` tensor."""
    if params.w_p is None or params.v_p is None:
        raise ContractError("local-p attention needs w_p and v_p")
    a = params.v_p.shape[0]
    s = T.linear(T.tanh(T.linear(d_t, params.w_p)), params.v_p.reshape(1, a))
    return T.sigmoid(s) * Tensor(lengths.astype(d_t.dtype).reshape(-1, 1))


def local_p_attend(enc_top: Tensor, d_t: Tensor, params: AttentionParams, lengths=None,
                   keys: Tensor | None = None) -> AttentionStep:
    """Predictive local attention with Gaussian reweighting (sigma = D/2).

    The window is ``[ceil(p_t) - D, floor(p_t) + D]``; the reweighted weights
    are used as they are, without renormalising.
    """
    enc_top, d_t, lengths, single = _lift(enc_top, d_t, lengths)
    steps = enc_top.shape[1]
    p = predict_center(d_t, params, lengths)
    pc = p.data[:, 0].astype(np.float64)
    D = params.window
    support = window_support(np.ceil(pc) - D, np.floor(pc) + D, lengths, steps)
    alpha = T.softmax(scores(enc_top, d_t, params, keys), mask=support)
    pos = Tensor(np.arange(1, steps + 1, dtype=d_t.dtype)[None, :])
    diff = pos - p
    gauss = T.exp(T.scale(diff * diff, -1.0 / (2.0 * params.sigma ** 2)))
    weights = alpha * gauss
    step = AttentionStep(weights, _context(weights, enc_top), support, pc)
    return _unlift(step, single)


def gaussian_factor(i: float, center: float, window: int = DEFAULT_WINDOW) -> float:
    sigma = window / 2.0
    return math.exp(-((i - center) ** 2) / (2.0 * sigma * sigma))


def combine_output(c_t: Tensor, d_t: Tensor, w_s: Tensor, b_s: Tensor) -> Tensor:
    """Logits ``W_s [c_t; d_t] + b_s``."""
    if w_s.shape[1] != c_t.shape[-1] + d_t.shape[-1]:
        raise DimensionError(f"W_s has {w_s.shape[1]} columns, context+state give "
                             f"{c_t.shape[-1] + d_t.shape[-1]}")
    return T.linear(T.concat([c_t, d_t], axis=-1), w_s, b_s)


def input_feed(y_embed: Tensor, c_prev: Tensor | None, enabled: bool = True,
               context_dim: int | None = None) -> Tensor:
    """Decoder input: previous phoneme embedding, then the previous context.

    At the first step ``c_prev`` is None and a zero vector of ``context_dim``
    is fed instead.
    """
    if not enabled:
        return y_embed
    if c_prev is None:
        if context_dim is None:
            raise ContractError("first-step input feeding needs context_dim")
        c_prev = Tensor(np.zeros(y_embed.shape[:-1] + (context_dim,), dtype=y_embed.dtype))
    return T.concat([y_embed, c_prev], axis=-1)
