"""
Event encoder
=============
Maps (token id, timestamp) pairs to hidden vectors:

    h_i = E_f[id_i] + P[i] + f_decay(t_i) + f_periodic(t_i)

f_decay(t)    = W_d (1 - tanh((W_t t - b_t)^2)) - b_d
f_periodic(t) = W_p [sin(2 pi t / omega); cos(2 pi t / omega)] + b_p

Padding positions are embedded like any other token; attention masks them out.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict

import numpy as np

from autograd import ops
from autograd.tensor import Tensor
from utils.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass
class EncoderParams:
    E_f: Tensor   # |E| x d
    P: Tensor     # (N+1) x d
    W_t: Tensor   # m_decay x 1
    b_t: Tensor   # m_decay
    W_d: Tensor   # d x m_decay
    b_d: Tensor   # d
    W_p: Tensor   # d x 2
    b_p: Tensor   # d
    period: float

    @property
    def d_model(self) -> int:
        return self.E_f.shape[1]

    @property
    def max_positions(self) -> int:
        return self.P.shape[0]

    def named(self) -> Dict[str, Tensor]:
        return OrderedDict(
            (name, getattr(self, name)) for name in ("E_f", "P", "W_t", "b_t", "W_d", "b_d", "W_p", "b_p")
        )


def init_encoder(
    rng: np.random.Generator,
    vocab_size: int,
    d_model: int,
    max_len: int,
    m_decay: int,
    period: float,
    init_std: float,
) -> EncoderParams:
    """Weights ~ N(0, init_std^2), biases zero; draw order is fixed"""
    def weight(name, *shape):
        return Tensor(rng.normal(0.0, init_std, size=shape), requires_grad=True, name=f"encoder.{name}")

    def bias(name, n):
        return Tensor(np.zeros(n), requires_grad=True, name=f"encoder.{name}")

    return EncoderParams(
        E_f=weight("E_f", vocab_size, d_model),
        P=weight("P", max_len + 1, d_model),
        W_t=weight("W_t", m_decay, 1),
        b_t=bias("b_t", m_decay),
        W_d=weight("W_d", d_model, m_decay),
        b_d=bias("b_d", d_model),
        W_p=weight("W_p", d_model, 2),
        b_p=bias("b_p", d_model),
        period=float(period),
    )


def code_embed(params: EncoderParams, token_ids: np.ndarray) -> Tensor:
    """E_f[id] + P[position]; token ids [B, L] -> [B, L, d]"""
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if token_ids.ndim != 2 or token_ids.shape[1] > params.max_positions:
        raise DimensionError("code_embed", token_ids.shape, params.P.shape)
    positions = ops.embedding(params.P, np.arange(token_ids.shape[1]))
    return ops.add(ops.embedding(params.E_f, token_ids), positions)


def _time_column(times: np.ndarray) -> Tensor:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 2:
        raise DimensionError("time_embed", times.shape)
    return Tensor(times[..., None])


def decay_embed(params: EncoderParams, times: np.ndarray) -> Tensor:
    """Recency feature; peaks where W_t t = b_t and flattens to -b_d as |t| grows"""
    t = _time_column(times)                                        # [B, L, 1]
    shifted = ops.sub(ops.matmul(t, ops.transpose(params.W_t)), params.b_t)
    inner = ops.sub(1.0, ops.tanh(ops.square(shifted)))            # [B, L, m]
    return ops.sub(ops.matmul(inner, ops.transpose(params.W_d)), params.b_d)


def periodic_embed(params: EncoderParams, times: np.ndarray) -> Tensor:
    """Single-period sin/cos feature; f(t) == f(t + period)"""
    angle = ops.scale(_time_column(times), 2.0 * math.pi / params.period)
    features = ops.concat([ops.sin(angle), ops.cos(angle)])       # [B, L, 2]
    return ops.add(ops.matmul(features, ops.transpose(params.W_p)), params.b_p)


def encode_events(
    params: EncoderParams,
    token_ids: np.ndarray,
    times: np.ndarray,
    disable_decay: bool = False,
    disable_periodic: bool = False,
) -> Tensor:
    """
    h = code_embed + decay_embed + periodic_embed.

    The ablation flags drop the decay term (w/o D), the periodic term (w/o P)
    or both (w/o DP); dropped terms are not computed at all.
    """
    token_ids = np.asarray(token_ids)
    times = np.asarray(times)
    if token_ids.shape != times.shape:
        raise DimensionError("encode_events", token_ids.shape, times.shape)

    hidden = code_embed(params, token_ids)
    if not disable_decay:
        hidden = ops.add(hidden, decay_embed(params, times))
    if not disable_periodic:
        hidden = ops.add(hidden, periodic_embed(params, times))
    return hidden
