"""
Finite-difference gradient verification
"""

from typing import Callable, Dict, Sequence

import numpy as np

from src.tensor.node import Node, backward, no_grad


def gradient_check(fn: Callable[[], Node], leaves: Sequence[Node], h: float = 1e-5) -> Dict[int, float]:
    """
    Compare analytic gradients of a scalar function against central differences.

    Args:
        fn: closure recomputing the scalar loss from the current leaf values
        leaves: requires-grad leaves to check
        h: finite-difference step

    Returns:
        Dict mapping leaf position -> norm-wise relative error
        ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12)
    """
    for leaf in leaves:
        leaf.zero_grad()
    backward(fn())
    analytic = [np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad.copy() for leaf in leaves]

    errors = {}
    with no_grad():
        for index, leaf in enumerate(leaves):
            numeric = np.zeros_like(leaf.value)
            for k in np.ndindex(leaf.value.shape):
                original = leaf.value[k]
                leaf.value[k] = original + h
                plus = float(fn().value)
                leaf.value[k] = original - h
                minus = float(fn().value)
                leaf.value[k] = original
                numeric[k] = (plus - minus) / (2.0 * h)
            diff = np.linalg.norm(analytic[index] - numeric)
            scale = max(np.linalg.norm(analytic[index]) + np.linalg.norm(numeric), 1e-12)
            errors[index] = float(diff / scale)
    return errors
