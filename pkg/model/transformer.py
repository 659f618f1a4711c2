"""
Time-aware Transformer layers
=============================
Post-LN Transformer layers whose attention logits are gated elementwise by a
learned per-layer matrix Z (shared across heads and batch):

    head_i = softmax((Q_i K_i^T * Z) / sqrt(d/h)) V_i
    attn   = Concat(head_1 .. head_h) W_O

Padding keys get probability exactly 0 after the Z gate, so Z cannot bring a
padding position back. With Z fixed to all-ones a layer is a plain Transformer
layer.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from autograd import ops
from autograd.tensor import Tensor
from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


@dataclass
class LayerParams:
    W_q: List[Tensor]   # h x (d x d/h)
    W_k: List[Tensor]
    W_v: List[Tensor]
    W_o: Tensor         # d x d
    Z: Tensor           # (N+1) x (N+1)
    W_1: Tensor         # d x d_ff
    b_1: Tensor
    W_2: Tensor         # d_ff x d
    b_2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    @property
    def n_heads(self) -> int:
        return len(self.W_q)

    def named(self, prefix: str) -> Dict[str, Tensor]:
        named = OrderedDict()
        for kind in ("W_q", "W_k", "W_v"):
            for i, tensor in enumerate(getattr(self, kind)):
                named[f"{prefix}.{kind}.{i}"] = tensor
        for name in ("W_o", "Z", "W_1", "b_1", "W_2", "b_2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"):
            named[f"{prefix}.{name}"] = getattr(self, name)
        return named


def init_layer(
    rng: np.random.Generator,
    index: int,
    d_model: int,
    n_heads: int,
    d_ff: int,
    max_len: int,
    init_std: float,
    z_low: float,
    z_high: float,
    freeze_z: bool = False,
) -> LayerParams:
    """
    Z ~ U[z_low, z_high] so every gate starts wide open; with freeze_z it is
    the all-ones matrix and never trained.
    """
    if d_model % n_heads != 0:
        raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
    d_head = d_model // n_heads
    prefix = f"layers.{index}"

    def weight(name, *shape):
        return Tensor(rng.normal(0.0, init_std, size=shape), requires_grad=True, name=f"{prefix}.{name}")

    def const(name, value, n):
        return Tensor(np.full(n, value, dtype=np.float64), requires_grad=True, name=f"{prefix}.{name}")

    W_q = [weight(f"W_q.{i}", d_model, d_head) for i in range(n_heads)]
    W_k = [weight(f"W_k.{i}", d_model, d_head) for i in range(n_heads)]
    W_v = [weight(f"W_v.{i}", d_model, d_head) for i in range(n_heads)]
    W_o = weight("W_o", d_model, d_model)

    z_shape = (max_len + 1, max_len + 1)
    # drawn even when frozen: the remaining weights then match across ablation variants
    z_values = rng.uniform(z_low, z_high, size=z_shape)
    if freeze_z:
        z_values = np.ones(z_shape)
    Z = Tensor(z_values, requires_grad=not freeze_z, name=f"{prefix}.Z")

    return LayerParams(
        W_q=W_q,
        W_k=W_k,
        W_v=W_v,
        W_o=W_o,
        Z=Z,
        W_1=weight("W_1", d_model, d_ff),
        b_1=const("b_1", 0.0, d_ff),
        W_2=weight("W_2", d_ff, d_model),
        b_2=const("b_2", 0.0, d_model),
        ln1_gain=const("ln1_gain", 1.0, d_model),
        ln1_bias=const("ln1_bias", 0.0, d_model),
        ln2_gain=const("ln2_gain", 1.0, d_model),
        ln2_bias=const("ln2_bias", 0.0, d_model),
    )


def _attention(
    H: Tensor,
    params: LayerParams,
    Z: Tensor,
    pad_mask: np.ndarray,
) -> Tuple[Tensor, List[Tensor]]:
    if H.ndim != 3:
        raise DimensionError("masked_attention", H.shape)
    batch, length, d_model = H.shape
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if pad_mask.shape != (batch, length):
        raise DimensionError("masked_attention", H.shape, pad_mask.shape)
    if d_model % params.n_heads != 0:
        raise ConfigError(f"d_model={d_model} is not divisible by n_heads={params.n_heads}")

    d_head = d_model // params.n_heads
    gate = ops.crop(Z, length, length) if Z.shape != (length, length) else Z
    key_mask = pad_mask[:, None, :]
    inv_sqrt = 1.0 / math.sqrt(d_head)

    heads, weights = [], []
    for W_q, W_k, W_v in zip(params.W_q, params.W_k, params.W_v):
        Q = ops.matmul(H, W_q)
        K = ops.matmul(H, W_k)
        V = ops.matmul(H, W_v)
        logits = ops.scale(ops.mul(ops.matmul(Q, ops.transpose(K)), gate), inv_sqrt)
        A = ops.softmax_rows(logits, key_mask)
        heads.append(ops.matmul(A, V))
        weights.append(A)

    return ops.matmul(ops.concat(heads), params.W_o), weights


def masked_attention(H: Tensor, params: LayerParams, Z: Tensor, pad_mask: np.ndarray) -> Tensor:
    """Multi-head attention with the Z gate; Z is cropped to the active L x L block"""
    out, _ = _attention(H, params, Z, pad_mask)
    return out


def _ffn(x: Tensor, params: LayerParams) -> Tensor:
    hidden = ops.gelu(ops.add(ops.matmul(x, params.W_1), params.b_1))
    return ops.add(ops.matmul(hidden, params.W_2), params.b_2)


def transformer_layer(
    H: Tensor,
    params: LayerParams,
    pad_mask: np.ndarray,
    Z: Optional[Tensor] = None,
) -> Tensor:
    """H' = LN(H + attn(H)); out = LN(H' + FFN(H')). Z defaults to the layer's own gate."""
    gate = params.Z if Z is None else Z
    attended = masked_attention(H, params, gate, pad_mask)
    H1 = ops.layer_norm(ops.add(H, attended), params.ln1_gain, params.ln1_bias)
    return ops.layer_norm(ops.add(H1, _ffn(H1, params)), params.ln2_gain, params.ln2_bias)


def ones_gate(params: LayerParams) -> Tensor:
    """Constant all-ones gate: reduces the layer to standard scaled dot-product attention"""
    return Tensor(np.ones(params.Z.shape))


def encode_stack(
    H: Tensor,
    layers: Sequence[LayerParams],
    pad_mask: np.ndarray,
    use_gate: bool = True,
) -> Tensor:
    if not layers:
        raise ConfigError("encode_stack needs at least one layer")
    for params in layers:
        H = transformer_layer(H, params, pad_mask, None if use_gate else ones_gate(params))
    return H


def attention_weights(
    H: Tensor,
    layers: Sequence[LayerParams],
    pad_mask: np.ndarray,
    use_gate: bool = True,
) -> List[np.ndarray]:
    """Per-layer attention maps, each [B, h, L, L]"""
    maps = []
    for params in layers:
        gate = params.Z if use_gate else ones_gate(params)
        _, weights = _attention(H, params, gate, pad_mask)
        maps.append(np.stack([w.data for w in weights], axis=1))
        H = transformer_layer(H, params, pad_mask, gate)
    return maps


def denoise_loss(layers: Sequence[LayerParams]) -> Tensor:
    """Sum over layers of the Frobenius norm of the full Z matrix"""
    total = Tensor(0.0)
    for params in layers:
        total = ops.add(total, ops.frobenius_norm(params.Z))
    return total
