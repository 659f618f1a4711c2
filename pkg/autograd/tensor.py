"""
Dense Tensor and define-by-run gradient Tape
============================================
A Tensor wraps a float64 numpy array. Operations executed while a Tape is
active append one Node per op; `backward` walks the nodes in reverse append
order and accumulates gradients into the leaf tensors that require them.

The active tape lives in a context variable, so a tape and its tensors stay
confined to the execution context that opened it.
"""

import contextvars
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ContractError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class Tensor:
    """Dense row-major float64 array with optional gradient buffer"""

    __slots__ = ("data", "grad", "requires_grad", "name", "_tape", "_node")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        # tape-id: handle of the node that produced this tensor (None for leaves)
        self._tape: Optional["Tape"] = None
        self._node: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the op functions are the source of truth.
    def __add__(self, other):
        from autograd import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from autograd import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from autograd import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from autograd import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from autograd import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from autograd import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from autograd import ops
        return ops.scale(self, -1.0)


def as_tensor(value) -> Tensor:
    """Wrap constants (floats, arrays) as non-trainable tensors"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Node:
    """One recorded op: kind, input handles and the closure holding saved activations"""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


class Tape:
    """
    Ordered record of ops for one forward pass.

    Usage:
        with Tape() as tape:
            loss = model_loss(...)
            backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        output._tape = self
        output._node = len(self.nodes)
        output.requires_grad = True
        self.nodes.append(Node(op, inputs, output, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Reverse-mode sweep from `loss`; each node is visited at most once"""
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

        for node in reversed(self.nodes[: loss._node + 1]):
            upstream = grads.pop(id(node.output), None)
            if upstream is None:
                continue

            input_grads = node.backward_fn(upstream)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.shape:
                    raise ContractError(
                        f"{node.op}: gradient shape {grad.shape} does not match input shape {tensor.shape}"
                    )
                if tensor.is_leaf:
                    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
                else:
                    key = id(tensor)
                    grads[key] = grad if key not in grads else grads[key] + grad


class no_tape:
    """Context manager that disables recording (evaluation / inference)"""

    def __enter__(self):
        self._token = _active_tape.set(None)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def make_result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op's forward value and record it when a tape is active and any input needs grad"""
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad on every leaf reachable from a scalar loss"""
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")

    if loss.is_leaf:
        if not loss.requires_grad:
            raise ContractError("backward() called on a loss that is not on the active tape")
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return

    loss._tape.backward(loss)
