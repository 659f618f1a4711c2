"""
Nowcast head and training objective
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict

import numpy as np

from autograd import ops
from autograd.tensor import Tensor, as_tensor
from utils.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


@dataclass
class HeadParams:
    W_out: Tensor  # |labels| x d
    b_out: Tensor  # |labels|

    def named(self) -> Dict[str, Tensor]:
        return OrderedDict([("head.W_out", self.W_out), ("head.b_out", self.b_out)])


def init_head(rng: np.random.Generator, num_labels: int, d_model: int, init_std: float) -> HeadParams:
    return HeadParams(
        W_out=Tensor(rng.normal(0.0, init_std, size=(num_labels, d_model)), requires_grad=True, name="head.W_out"),
        b_out=Tensor(np.zeros(num_labels), requires_grad=True, name="head.b_out"),
    )


def predict(H: Tensor, mask_positions: np.ndarray, params: HeadParams) -> Tensor:
    """sigmoid(W_out h_mask + b_out) from the mask token's final hidden state -> [B, |labels|]"""
    h_mask = ops.take_positions(H, mask_positions)
    logits = ops.add(ops.matmul(h_mask, ops.transpose(params.W_out)), params.b_out)
    return ops.sigmoid(logits)


def ce_loss(probs: Tensor, labels) -> Tensor:
    """
    Binary cross-entropy summed over labels and averaged over the batch.
    Probabilities are clamped at 1e-12 before the log.
    """
    labels = as_tensor(labels)
    if probs.shape != labels.shape or probs.ndim != 2:
        raise DimensionError("ce_loss", probs.shape, labels.shape)

    log_p = ops.log_clamped(probs, PROB_CLAMP)
    log_not_p = ops.log_clamped(ops.sub(1.0, probs), PROB_CLAMP)
    per_entry = ops.add(ops.mul(log_p, labels), ops.mul(log_not_p, ops.sub(1.0, labels)))
    return ops.scale(ops.sum(per_entry), -1.0 / probs.shape[0])


def final_loss(ce: Tensor, denoise: Tensor, lam: float) -> Tensor:
    """ce + lam * denoise"""
    if lam < 0:
        raise ContractError(f"denoise weight must be >= 0, got {lam}")
    return ops.add(ce, ops.scale(denoise, lam))
