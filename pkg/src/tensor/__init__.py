"""
Tensor Core

Dense float64 arrays with a tape-based reverse-mode autodiff.
"""

from src.tensor import ops
from src.tensor.gradcheck import gradient_check
from src.tensor.node import DTYPE, Node, Tensor, as_node, backward, grad_enabled, no_grad

__all__ = [
    "DTYPE",
    "Node",
    "Tensor",
    "as_node",
    "backward",
    "grad_enabled",
    "gradient_check",
    "no_grad",
    "ops",
]
