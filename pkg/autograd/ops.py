"""
Differentiable operations
=========================
Only the op set the nowcasting model needs. Binary ops support exactly three
operand layouts: equal shapes, a scalar second operand, or a second operand
whose shape equals the trailing dimensions of the first (row broadcast).
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf, expit

from autograd.tensor import Tensor, as_tensor, make_result
from utils.errors import ContractError, DimensionError, VocabularyError

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5
LOG_CLAMP = 1e-12
_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == tuple(shape):
        return grad
    if int(np.prod(shape)) == 1:
        return np.full(shape, grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or b.size == 1 and b.ndim <= 1:
        return
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise DimensionError(op, a.shape, b.shape)


def _ordered(op: str, a, b):
    a, b = as_tensor(a), as_tensor(b)
    # the broadcast operand always goes second
    if b.ndim > a.ndim or (b.ndim == a.ndim and b.size > a.size):
        a, b = b, a
        swapped = True
    else:
        swapped = False
    _check_broadcast(op, a, b)
    return a, b, swapped


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b, _ = _ordered("add", a, b)

    def backward_fn(g):
        return g, _reduce_to(g, b.shape)

    return make_result("add", a.data + b.data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim > a.ndim or (b.ndim == a.ndim and b.size > a.size):
        return add(scale(b, -1.0), a)
    _check_broadcast("sub", a, b)

    def backward_fn(g):
        return g, -_reduce_to(g, b.shape)

    return make_result("sub", a.data - b.data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b, _ = _ordered("mul", a, b)

    def backward_fn(g):
        return g * b.data, _reduce_to(g * a.data, b.shape)

    return make_result("mul", a.data * b.data, (a, b), backward_fn)


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return make_result("scale", x.data * c, (x,), lambda g: (g * c,))


def _unary(op: str, x, forward, derivative) -> Tensor:
    x = as_tensor(x)
    out = forward(x.data)

    def backward_fn(g):
        return (g * derivative(x.data, out),)

    return make_result(op, out, (x,), backward_fn)


def tanh(x) -> Tensor:
    return _unary("tanh", x, np.tanh, lambda v, y: 1.0 - y * y)


def sin(x) -> Tensor:
    return _unary("sin", x, np.sin, lambda v, y: np.cos(v))


def cos(x) -> Tensor:
    return _unary("cos", x, np.cos, lambda v, y: -np.sin(v))


def square(x) -> Tensor:
    return _unary("square", x, np.square, lambda v, y: 2.0 * v)


def sigmoid(x) -> Tensor:
    return _unary("sigmoid", x, expit, lambda v, y: y * (1.0 - y))


def gelu(x) -> Tensor:
    """Exact GELU: x * Phi(x)"""
    def forward(v):
        return 0.5 * v * (1.0 + erf(v * _INV_SQRT2))

    def derivative(v, y):
        return 0.5 * (1.0 + erf(v * _INV_SQRT2)) + v * np.exp(-0.5 * v * v) * _INV_SQRT_2PI

    return _unary("gelu", x, forward, derivative)


def log_clamped(x, eps: float = LOG_CLAMP) -> Tensor:
    """log(max(x, eps)); zero gradient inside the clamped region"""
    x = as_tensor(x)
    clipped = np.maximum(x.data, eps)

    def backward_fn(g):
        return (np.where(x.data > eps, g / clipped, 0.0),)

    return make_result("log_clamped", np.log(clipped), (x,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra / shape
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """
    a[..., m, k] @ b[k, n]   (shared right operand), or
    a[..., m, k] @ b[..., k, n] with identical leading dimensions.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError("matmul", a.shape, b.shape)

    def backward_fn(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.swapaxes(a.data, -1, -2) @ g
        return grad_a, grad_b

    return make_result("matmul", a.data @ b.data, (a, b), backward_fn)


def transpose(x) -> Tensor:
    """Swap the last two axes"""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError("transpose", x.shape)
    return make_result(
        "transpose",
        np.swapaxes(x.data, -1, -2),
        (x,),
        lambda g: (np.swapaxes(g, -1, -2),),
    )


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis"""
    tensors = tuple(as_tensor(t) for t in tensors)
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError("concat", tensors[0].shape, t.shape)
    widths = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, widths, axis=-1))

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=-1), tensors, backward_fn)


def crop(x, rows: int, cols: int) -> Tensor:
    """Top-left rows x cols block of a 2-D tensor"""
    x = as_tensor(x)
    if x.ndim != 2 or rows > x.shape[0] or cols > x.shape[1]:
        raise DimensionError("crop", x.shape, (rows, cols))

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[:rows, :cols] = g
        return (full,)

    return make_result("crop", x.data[:rows, :cols], (x,), backward_fn)


def embedding(table, ids) -> Tensor:
    """Row lookup table[ids]; gradient scatter-adds into the table"""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = int(ids.max()) if ids.max() >= table.shape[0] else int(ids.min())
        raise VocabularyError(f"token id {bad} outside table of {table.shape[0]} rows")

    def backward_fn(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return make_result("embedding", table.data[ids], (table,), backward_fn)


def take_positions(x, positions) -> Tensor:
    """Gather x[b, positions[b], :] for every batch row"""
    x = as_tensor(x)
    positions = np.asarray(positions, dtype=np.int64)
    if x.ndim != 3 or positions.shape != (x.shape[0],):
        raise DimensionError("take_positions", x.shape, positions.shape)
    if positions.size and (positions.min() < 0 or positions.max() >= x.shape[1]):
        raise ContractError(f"mask position outside sequence length {x.shape[1]}: {positions.tolist()}")
    rows = np.arange(x.shape[0])

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        grad[rows, positions] = g
        return (grad,)

    return make_result("take_positions", x.data[rows, positions], (x,), backward_fn)


# ---------------------------------------------------------------------------
# reductions / normalisation
# ---------------------------------------------------------------------------

def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return make_result("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    return make_result("mean", np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, float(g) / n),))


def frobenius_norm(x) -> Tensor:
    """sqrt(sum(x^2)); gradient x/||x||, defined as 0 at the zero matrix"""
    x = as_tensor(x)
    norm = float(np.sqrt(np.square(x.data).sum()))

    def backward_fn(g):
        if norm == 0.0:
            return (np.zeros_like(x.data),)
        return (float(g) * x.data / norm,)

    return make_result("frobenius_norm", np.array(norm), (x,), backward_fn)


def softmax_rows(x, key_mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the trailing axis with max subtraction.

    `key_mask` (bool, broadcastable to x) marks admissible entries; the rest
    get probability exactly 0, as with an additive -inf.
    """
    x = as_tensor(x)
    logits = x.data
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        try:
            mask = np.broadcast_to(key_mask, x.shape)
        except ValueError:
            raise DimensionError("softmax_rows", x.shape, key_mask.shape)
        if not mask.any(axis=-1).all():
            raise ContractError("softmax_rows: a row has no admissible entries")
        logits = np.where(mask, logits, -np.inf)

    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result("softmax_rows", out, (x,), backward_fn)


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Per-row normalisation over the last axis followed by gain/bias"""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm", x.shape, gain.shape, bias.shape)

    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.square(centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std

    def backward_fn(g):
        g_hat = g * gain.data
        grad_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        grad_gain = (g * x_hat).reshape(-1, d).sum(axis=0)
        grad_bias = g.reshape(-1, d).sum(axis=0)
        return grad_x, grad_gain, grad_bias

    return make_result("layer_norm", x_hat * gain.data + bias.data, (x, gain, bias), backward_fn)
