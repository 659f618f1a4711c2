"""
Minimal tensor library with reverse-mode differentiation
"""

from autograd.tensor import Tape, Tensor, active_tape, as_tensor, backward, no_tape

__all__ = ["Tape", "Tensor", "active_tape", "as_tensor", "backward", "no_tape"]
