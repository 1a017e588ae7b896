"""
Adam over a fixed list of leaves
"""

from typing import List, Sequence

import numpy as np

from src.tensor import Node


class Adam:
    """
    Adam with optional decoupled weight decay.

    Only the leaves passed at construction are ever written; step() skips
    leaves without a gradient.
    """

    def __init__(
        self,
        params: Sequence[Node],
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params: List[Node] = list(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * p.grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * p.grad ** 2
            update = (self.m[i] / bias1) / (np.sqrt(self.v[i] / bias2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value -= lr * update


def clip_grad_norm(params: Sequence[Node], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most max_norm; returns the norm before clipping."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g ** 2)) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total
