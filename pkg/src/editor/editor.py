"""
Low-rank representation editor

    psi(x) = x + U^T (W x + b - U x)

U (rank x dim) has orthonormal rows. It is never stored directly: an
unconstrained raw_U is kept as the trainable leaf and orthonormalized by a
differentiable Gram-Schmidt pass on every forward, so the orthonormality
invariant holds exactly after any optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from src.errors import ConfigError, DegeneracyError, DimensionError
from src.tensor import Node, no_grad, ops

PIVOT_TOLERANCE = 1e-10

Seed = Union[int, Sequence[int]]


@dataclass
class EditorParams:
    """One editor: subspace raw_U, projection W and bias, all trainable leaves."""

    rank: int
    dim: int
    raw_U: Node
    W: Node
    bias: Node

    def leaves(self) -> List[Node]:
        return [self.raw_U, self.W, self.bias]

    def subspace(self) -> np.ndarray:
        """Current orthonormal U as a plain array."""
        with no_grad():
            return orthonormalize(self.raw_U).value

    def set_identity(self) -> None:
        """Configure W == U and bias == 0, which makes the editor an exact no-op."""
        self.W.value[...] = self.subspace()
        self.bias.value[...] = 0.0

    def copy(self) -> "EditorParams":
        return EditorParams(
            rank=self.rank,
            dim=self.dim,
            raw_U=Node(self.raw_U.value.copy(), requires_grad=True, name=self.raw_U.name),
            W=Node(self.W.value.copy(), requires_grad=True, name=self.W.name),
            bias=Node(self.bias.value.copy(), requires_grad=True, name=self.bias.name),
        )


def init_editor(rank: int, dim: int, seed: Seed) -> EditorParams:
    """
    Create an editor with orthogonally initialized raw_U and small-uniform W, bias.

    W and bias follow the usual linear-layer init: U(-1/sqrt(dim), 1/sqrt(dim)).

    Raises:
        ConfigError: if rank is not in [1, dim]
    """
    if rank < 1 or rank > dim:
        raise ConfigError(f"editor rank must lie in [1, dim={dim}], got rank={rank}")

    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, rank)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    raw_u = (q * signs).T

    bound = 1.0 / np.sqrt(dim)
    w = rng.uniform(-bound, bound, size=(rank, dim))
    bias = rng.uniform(-bound, bound, size=(rank,))
    return EditorParams(
        rank=rank,
        dim=dim,
        raw_U=Node(raw_u, requires_grad=True, name="raw_U"),
        W=Node(w, requires_grad=True, name="W"),
        bias=Node(bias, requires_grad=True, name="bias"),
    )


def orthonormalize(raw: Union[Node, np.ndarray]) -> Node:
    """
    Differentiable modified Gram-Schmidt (with one re-orthogonalization pass).

    Rows of the result are orthonormal and span the row space of raw.

    Raises:
        DegeneracyError: if a row's residual norm falls below 1e-10
    """
    raw = raw if isinstance(raw, Node) else Node(raw)
    if raw.ndim != 2:
        raise DimensionError(f"orthonormalize expects a 2-D matrix, got shape {raw.shape}")

    rows: List[Node] = []
    for i in range(raw.shape[0]):
        v = ops.take(raw, (slice(i, i + 1), slice(None)))
        for _ in range(2):
            for q in rows:
                v = ops.sub(v, ops.mul(ops.sum(ops.mul(v, q)), q))
        norm = ops.sqrt(ops.sum(ops.mul(v, v)))
        if not float(norm.value) >= PIVOT_TOLERANCE:
            raise DegeneracyError(row=i, pivot_norm=float(norm.value))
        rows.append(ops.div(v, norm))
    return ops.concat(rows, axis=0)


def apply_editor(editor: EditorParams, x: Union[Node, np.ndarray], mask: Optional[np.ndarray] = None) -> Node:
    """
    Apply psi to every vector along the trailing axis of x.

    Args:
        editor: editor parameters
        x: (..., dim) hidden states
        mask: optional (...) array; positions with 0 keep x exactly

    Raises:
        DimensionError: if x's trailing axis differs from editor.dim
    """
    x = x if isinstance(x, Node) else Node(x)
    if x.ndim == 0 or x.shape[-1] != editor.dim:
        raise DimensionError(f"editor expects trailing dim {editor.dim}, got input shape {x.shape}")
    if x.ndim == 1:
        single = ops.reshape(x, (1, editor.dim))
        mask = None if mask is None else np.reshape(mask, (1,))
        return ops.reshape(apply_editor(editor, single, mask), (editor.dim,))

    u = orthonormalize(editor.raw_U)
    target = ops.add(ops.matmul(x, ops.transpose(editor.W)), editor.bias)
    correction = ops.sub(target, ops.matmul(x, ops.transpose(u)))
    delta = ops.matmul(correction, u)
    if mask is not None:
        delta = ops.mul(delta, np.asarray(mask, dtype=np.float64)[..., None])
    return ops.add(x, delta)


def param_count(editor: EditorParams) -> int:
    """|raw_U| + |W| + |bias| = rank * (2 * dim + 1)."""
    return editor.rank * (2 * editor.dim + 1)
