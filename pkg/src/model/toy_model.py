"""
Toy multimodal transformer with editor attachment points

    image -> patches -> vision encoder (edited per layer) -> readout
          -> projector (edited) -> concat with token embeddings
          -> causal decoder (prefix / suffix / infix / control edits) -> logits

Hidden states are always batched: (B, T, d). The base weights are constants
on the tape unless the model is built with trainable_base=True (pretraining).
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.data.datasets import Batch, collate
from src.editor import EditorBank, Site, apply_editor
from src.errors import ConfigError, DimensionError
from src.model.config import EditPlan, ToyModelConfig
from src.model.weights import FrozenWeights
from src.tensor import Node, no_grad, ops

logger = logging.getLogger(__name__)

_MASK_VALUE = -1e9

_DECODER_SITES = (Site.PREFIX, Site.INFIX, Site.SUFFIX, Site.CONTROL_TARGET)


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """(B, H, W) -> (B, m, patch_size**2), patches in row-major order."""
    b, h, w = images.shape
    g_h, g_w = h // patch_size, w // patch_size
    patches = images.reshape(b, g_h, patch_size, g_w, patch_size).transpose(0, 1, 3, 2, 4)
    return patches.reshape(b, g_h * g_w, patch_size * patch_size)


def causal_mask(length: int) -> np.ndarray:
    """Additive mask, -1e9 above the diagonal."""
    return np.triu(np.full((length, length), _MASK_VALUE), k=1)


def span_masks(plan: EditPlan, num_visual: int, prompt_lens: Sequence[int], total_len: int) -> Dict[Site, np.ndarray]:
    """
    Per-site (B, T) position masks over the fused sequence.

    Prefix covers [m, m+a), suffix [m+n-s, m+n), infix the positions between
    them; n is each sample's prompt length. The control site covers m+index.

    Raises:
        ConfigError: if prefix and suffix overlap or the control index is past the prompt
    """
    prompt_lens = np.asarray(prompt_lens, dtype=np.int64)
    masks = {site: np.zeros((len(prompt_lens), total_len)) for site in _DECODER_SITES}
    m, a, s = num_visual, plan.prefix_len, plan.suffix_len
    for row, n in enumerate(prompt_lens):
        if plan.control_token_index is not None:
            if plan.control_token_index >= n:
                raise ConfigError(
                    f"control_token_index={plan.control_token_index} is outside a prompt of length {n}"
                )
            masks[Site.CONTROL_TARGET][row, m + plan.control_token_index] = 1.0
            continue
        if a + s > n:
            raise ConfigError(f"prefix_len + suffix_len = {a + s} exceeds the prompt length n={n}")
        masks[Site.PREFIX][row, m:m + a] = 1.0
        masks[Site.SUFFIX][row, m + n - s:m + n] = 1.0
        masks[Site.INFIX][row, m + a:m + n - s] = 1.0
    return masks


class ToyMultimodalModel:
    """
    Frozen base plus the forward passes the editors hook into.

    Usage:
        model = ToyMultimodalModel(config, weights)
        loss = model.forward_loss(batch, bank, plan)
        answers = model.generate(images, prompts, bank, plan, max_new=3)
    """

    def __init__(self, config: ToyModelConfig, weights: FrozenWeights, trainable_base: bool = False):
        weights.check_shapes(config)
        self.config = config
        self.weights = weights
        self.trainable_base = trainable_base
        if trainable_base:
            self.params = {
                name: Node(np.array(array), requires_grad=True, name=name) for name, array in weights.items()
            }
        else:
            self.params = {name: Node(array, name=name) for name, array in weights.items()}

    def base_leaves(self) -> List[Node]:
        return list(self.params.values())

    def _p(self, name: str) -> Node:
        return self.params[name]

    # --- transformer pieces -------------------------------------------------

    def _attention(self, x: Node, prefix: str, mask: Optional[np.ndarray]) -> Node:
        b, t, d = x.shape
        heads = self.config.heads
        head_dim = d // heads

        def split(name: str) -> Node:
            y = ops.add(ops.matmul(x, self._p(f"{prefix}.attn.w{name}")), self._p(f"{prefix}.attn.b{name}"))
            return ops.transpose(ops.reshape(y, (b, t, heads, head_dim)), (0, 2, 1, 3))

        q, k, v = split("q"), split("k"), split("v")
        scores = ops.div(ops.matmul(q, ops.transpose(k)), math.sqrt(head_dim))
        if mask is not None:
            scores = ops.add(scores, mask)
        context = ops.matmul(ops.softmax(scores, axis=-1), v)
        merged = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (b, t, d))
        return ops.add(ops.matmul(merged, self._p(f"{prefix}.attn.wo")), self._p(f"{prefix}.attn.bo"))

    def _mlp(self, x: Node, prefix: str) -> Node:
        hidden = ops.gelu(ops.add(ops.matmul(x, self._p(f"{prefix}.mlp.w1")), self._p(f"{prefix}.mlp.b1")))
        return ops.add(ops.matmul(hidden, self._p(f"{prefix}.mlp.w2")), self._p(f"{prefix}.mlp.b2"))

    def _block(self, x: Node, prefix: str, mask: Optional[np.ndarray]) -> Node:
        eps = self.config.ln_eps
        h = ops.layernorm(x, self._p(f"{prefix}.ln1.gain"), self._p(f"{prefix}.ln1.bias"), eps)
        x = ops.add(x, self._attention(h, prefix, mask))
        h = ops.layernorm(x, self._p(f"{prefix}.ln2.gain"), self._p(f"{prefix}.ln2.bias"), eps)
        return ops.add(x, self._mlp(h, prefix))

    # --- pipeline stages ------------------------------------------------------

    def encode_image(
        self,
        images: np.ndarray,
        editors: Optional[EditorBank] = None,
        plan: Optional[EditPlan] = None,
        roi_mask: Optional[np.ndarray] = None,
    ) -> Node:
        """
        Visual tokens T_v from the second to last encoder layer.

        Args:
            images: (H, W) or (B, H, W) grayscale
            editors: bank holding the visual editors
            plan: edit plan (visual_layers, roi_only)
            roi_mask: (B, m) RoI indicator, required when plan.roi_only

        Returns:
            (m, d_v) or (B, m, d_v) node

        Raises:
            ConfigError: if the plan edits the final vision layer
            DimensionError: if the image does not match the patch grid
        """
        images = np.asarray(images, dtype=np.float64)
        single = images.ndim == 2
        if single:
            images = images[None]
            roi_mask = None if roi_mask is None else np.asarray(roi_mask)[None]
        size = self.config.image_size
        if images.ndim != 3 or images.shape[1:] != (size, size):
            raise DimensionError(f"images must be ({size}, {size}) or (B, {size}, {size}), got {images.shape}")
        editors, plan = editors or EditorBank(), plan or EditPlan.none()
        plan.validate_for(self.config)
        visual_mask = self._roi_mask(plan, roi_mask)

        patches = patchify(images, self.config.patch_size)
        x = ops.add(ops.matmul(patches, self._p("vision.patch_embed.weight")), self._p("vision.patch_embed.bias"))
        x = ops.add(x, self._p("vision.pos_embed"))
        for layer in range(1, self.config.readout_layer + 1):
            x = self._block(x, f"vision.layers.{layer}", None)
            editor = editors.get(Site.VISUAL, layer) if layer in plan.visual_layers else None
            if editor is not None:
                x = apply_editor(editor, x, visual_mask)
        return ops.reshape(x, x.shape[1:]) if single else x

    def project_cross_modality(
        self,
        visual: Node,
        editors: Optional[EditorBank] = None,
        plan: Optional[EditPlan] = None,
        roi_mask: Optional[np.ndarray] = None,
    ) -> Node:
        """Linear projection d_v -> d_t followed by the optional cross-modality editor."""
        visual = visual if isinstance(visual, Node) else Node(visual)
        editors, plan = editors or EditorBank(), plan or EditPlan.none()
        single = visual.ndim == 2
        if single:
            roi_mask = None if roi_mask is None else np.asarray(roi_mask)[None]
            visual = ops.reshape(visual, (1,) + visual.shape)
        x = ops.add(ops.matmul(visual, self._p("projector.weight")), self._p("projector.bias"))
        editor = editors.get(Site.CROSS_MODALITY, 0) if plan.cross_modality else None
        if editor is not None:
            x = apply_editor(editor, x, self._roi_mask(plan, roi_mask))
        return ops.reshape(x, x.shape[1:]) if single else x

    def fuse_and_decode(
        self,
        projected: Node,
        token_ids: np.ndarray,
        prompt_lens: Sequence[int],
        editors: Optional[EditorBank] = None,
        plan: Optional[EditPlan] = None,
    ) -> Node:
        """
        Logits over the fused sequence Concat(X_v, X_t).

        Args:
            projected: (B, m, d_t) projected visual tokens
            token_ids: (B, L) right-padded text ids
            prompt_lens: per-sample prompt length n, which anchors the edit spans

        Returns:
            (B, m + L, V) logits

        Raises:
            ConfigError: if the edit spans do not fit a prompt
            DimensionError: if the fused sequence exceeds max_seq
        """
        token_ids = np.asarray(token_ids, dtype=np.int64)
        editors, plan = editors or EditorBank(), plan or EditPlan.none()
        m = projected.shape[1]
        total = m + token_ids.shape[1]
        if total > self.config.max_seq:
            raise DimensionError(f"fused sequence length {total} exceeds max_seq={self.config.max_seq}")

        text = ops.embedding(self._p("decoder.token_embed"), token_ids)
        x = ops.concat([projected, text], axis=1)
        x = ops.add(x, ops.take(self._p("decoder.pos_embed"), (slice(0, total), slice(None))))

        masks = span_masks(plan, m, prompt_lens, total) if plan.decoder_layers else {}
        attn_mask = causal_mask(total)
        for layer in range(1, self.config.decoder_layers + 1):
            x = self._block(x, f"decoder.layers.{layer}", attn_mask)
            if layer not in plan.decoder_layers:
                continue
            for site in _DECODER_SITES:
                editor = editors.get(site, layer)
                if editor is not None:
                    x = apply_editor(editor, x, masks[site])

        x = ops.layernorm(x, self._p("decoder.ln_f.gain"), self._p("decoder.ln_f.bias"), self.config.ln_eps)
        return ops.add(ops.matmul(x, self._p("decoder.head.weight")), self._p("decoder.head.bias"))

    def _roi_mask(self, plan: EditPlan, roi_mask: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if not plan.roi_only:
            return None
        if roi_mask is None:
            raise ConfigError("plan.roi_only is set but no RoI mask was given")
        return np.asarray(roi_mask, dtype=np.float64)

    # --- end to end -------------------------------------------------------------

    def forward(self, batch: Batch, editors: Optional[EditorBank] = None, plan: Optional[EditPlan] = None) -> Node:
        """(B, m + L, V) logits for a collated batch."""
        visual = self.encode_image(batch.images, editors, plan, batch.roi_mask)
        projected = self.project_cross_modality(visual, editors, plan, batch.roi_mask)
        return self.fuse_and_decode(projected, batch.token_ids, batch.prompt_lens, editors, plan)

    def forward_loss(self, batch: Batch, editors: Optional[EditorBank] = None, plan: Optional[EditPlan] = None) -> Node:
        """
        Next-token cross-entropy over the supervised (response) positions.

        Raises:
            NumericError: if the batch has no supervised position
        """
        logits = self.forward(batch, editors, plan)
        m = self.config.num_patches
        length = batch.token_ids.shape[1]
        predicted = ops.take(logits, (slice(None), slice(m - 1, m - 1 + length)))
        return ops.cross_entropy(predicted, batch.token_ids, batch.loss_mask)

    def generate(
        self,
        images: np.ndarray,
        prompts: Sequence[Sequence[int]],
        editors: Optional[EditorBank] = None,
        plan: Optional[EditPlan] = None,
        max_new: int = 4,
        eos_id: int = 1,
        pad_id: int = 0,
        roi_mask: Optional[np.ndarray] = None,
    ) -> List[List[int]]:
        """
        Greedy decoding for a batch of prompts.

        Stops per sample at eos_id, at max_new tokens or when the fused
        sequence is full. The returned tokens exclude eos_id.
        """
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None]
            roi_mask = None if roi_mask is None else np.asarray(roi_mask)[None]
        prompt_lens = [len(p) for p in prompts]
        sequences = [list(p) for p in prompts]
        outputs: List[List[int]] = [[] for _ in prompts]
        finished = [False] * len(prompts)
        room = self.config.max_seq - self.config.num_patches
        m = self.config.num_patches

        with no_grad():
            visual = self.encode_image(images, editors, plan, roi_mask)
            projected = self.project_cross_modality(visual, editors, plan, roi_mask)
            for _ in range(max_new):
                active = [i for i, done in enumerate(finished) if not done and len(sequences[i]) < room]
                if not active:
                    break
                width = max(len(s) for s in sequences)
                ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
                for i, seq in enumerate(sequences):
                    ids[i, :len(seq)] = seq
                logits = self.fuse_and_decode(projected, ids, prompt_lens, editors, plan).value
                for i in active:
                    token = int(np.argmax(logits[i, m + len(sequences[i]) - 1]))
                    if token == eos_id:
                        finished[i] = True
                        continue
                    sequences[i].append(token)
                    outputs[i].append(token)
        return outputs


def dataset_loss(
    model: ToyMultimodalModel,
    editors: Optional[EditorBank],
    plan: Optional[EditPlan],
    samples: Sequence,
    batch_size: int = 32,
) -> float:
    """Token-weighted mean loss over samples, computed without a tape."""
    total, count = 0.0, 0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = collate(samples[start:start + batch_size])
            tokens = int(np.asarray(batch.loss_mask).sum())
            total += float(model.forward_loss(batch, editors, plan).value) * tokens
            count += tokens
    return total / max(count, 1)


def trainable_fraction(model: ToyMultimodalModel, editors: EditorBank) -> float:
    """Editor parameters / (base + editor parameters)."""
    edit = editors.param_count()
    return edit / (model.weights.param_count() + edit)
