"""
Central finite-difference gradient checking
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from autograd.tensor import Tape, Tensor, backward, no_tape

logger = logging.getLogger(__name__)


def numerical_grad(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar fn() w.r.t. every element of tensor"""
    original = tensor.data.copy()
    grad = np.zeros_like(original)
    with no_tape():
        for idx in np.ndindex(original.shape):
            bumped = original.copy()
            bumped[idx] += eps
            tensor.data = bumped
            plus = fn().item()

            bumped = original.copy()
            bumped[idx] -= eps
            tensor.data = bumped
            minus = fn().item()

            grad[idx] = (plus - minus) / (2.0 * eps)
    tensor.data = original
    return grad


def tape_grads(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    """Gradients of fn() from one recorded pass; unreachable tensors get zeros"""
    for t in tensors:
        t.requires_grad = True
        t.zero_grad()
    with Tape():
        loss = fn()
        backward(loss)
    return {id(t): t.grad.copy() for t in tensors}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish"""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error over `tensors` between tape and finite-difference gradients"""
    analytic = tape_grads(fn, tensors)
    worst = 0.0
    for t in tensors:
        err = relative_error(analytic[id(t)], numerical_grad(fn, t, eps))
        if err > worst:
            worst = err
        logger.debug("gradcheck %s: rel err %.3e", t.name or t.shape, err)
    return worst
