"""
Dense numpy reference implementations for micro-model checks

Written per sample and per head with explicit loops, independently of the
tape-based model, so agreement means the batched forward is right.
"""

import math
from typing import Optional

import numpy as np

from src.editor import EditorBank, Site
from src.model import EditPlan, ToyModelConfig


def micro_config(**overrides) -> ToyModelConfig:
    """Smallest config that still exercises every editor site."""
    settings = dict(
        d_v=8, d_t=8, vision_layers=2, decoder_layers=1, heads=2, patch_grid=2, patch_size=4,
        vocab_size=64, max_seq=24, mlp_ratio=2, init_std=0.3,
    )
    settings.update(overrides)
    return ToyModelConfig(**settings)


def micro_plan(**overrides) -> EditPlan:
    settings = dict(
        visual_layers=[1], visual_rank=2, cross_modality=True, decoder_layers=[1],
        multimodal_rank=2, prefix_len=2, suffix_len=2,
    )
    settings.update(overrides)
    return EditPlan(**settings)


def gram_schmidt(raw: np.ndarray) -> np.ndarray:
    rows = []
    for v in np.array(raw, dtype=np.float64):
        for _ in range(2):
            for q in rows:
                v = v - np.dot(v, q) * q
        rows.append(v / np.linalg.norm(v))
    return np.array(rows)


def editor(x: np.ndarray, raw_u: np.ndarray, w: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    u = gram_schmidt(raw_u)
    out = x.copy()
    for t in range(x.shape[0]):
        if mask is not None and mask[t] == 0:
            continue
        out[t] = x[t] + u.T @ (w @ x[t] + b - u @ x[t])
    return out


def bank_editor(bank: EditorBank, site: Site, layer: int, x: np.ndarray, mask=None) -> np.ndarray:
    e = bank.get(site, layer)
    if e is None:
        return x
    return editor(x, e.raw_U.value, e.W.value, e.bias.value, mask)


def layernorm(x, gain, bias, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def attention(x, w, prefix, heads, causal):
    t, d = x.shape
    dh = d // heads
    q = x @ w[f"{prefix}.attn.wq"] + w[f"{prefix}.attn.bq"]
    k = x @ w[f"{prefix}.attn.wk"] + w[f"{prefix}.attn.bk"]
    v = x @ w[f"{prefix}.attn.wv"] + w[f"{prefix}.attn.bv"]
    out = np.zeros((t, d))
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        for i in range(t):
            scores = np.array([q[i, cols] @ k[j, cols] / math.sqrt(dh) for j in range(t)])
            if causal:
                scores[i + 1:] = -np.inf
            p = np.exp(scores - scores.max())
            p /= p.sum()
            out[i, cols] = p @ v[:, cols]
    return out @ w[f"{prefix}.attn.wo"] + w[f"{prefix}.attn.bo"]


def block(x, w, prefix, heads, eps, causal):
    h = layernorm(x, w[f"{prefix}.ln1.gain"], w[f"{prefix}.ln1.bias"], eps)
    x = x + attention(h, w, prefix, heads, causal)
    h = layernorm(x, w[f"{prefix}.ln2.gain"], w[f"{prefix}.ln2.bias"], eps)
    hidden = gelu(h @ w[f"{prefix}.mlp.w1"] + w[f"{prefix}.mlp.b1"])
    return x + hidden @ w[f"{prefix}.mlp.w2"] + w[f"{prefix}.mlp.b2"]


def encode(config: ToyModelConfig, w, bank: EditorBank, plan: EditPlan, image: np.ndarray, roi=None) -> np.ndarray:
    p, g = config.patch_size, config.patch_grid
    patches = np.array([image[r * p:(r + 1) * p, c * p:(c + 1) * p].ravel() for r in range(g) for c in range(g)])
    x = patches @ w["vision.patch_embed.weight"] + w["vision.patch_embed.bias"] + w["vision.pos_embed"]
    mask = roi if plan.roi_only else None
    for layer in range(1, config.vision_layers):
        x = block(x, w, f"vision.layers.{layer}", config.heads, config.ln_eps, causal=False)
        if layer in plan.visual_layers:
            x = bank_editor(bank, Site.VISUAL, layer, x, mask)
    return x


def project(config: ToyModelConfig, w, bank: EditorBank, plan: EditPlan, visual: np.ndarray, roi=None) -> np.ndarray:
    x = visual @ w["projector.weight"] + w["projector.bias"]
    if plan.cross_modality:
        x = bank_editor(bank, Site.CROSS_MODALITY, 0, x, roi if plan.roi_only else None)
    return x


def decode(config: ToyModelConfig, w, bank: EditorBank, plan: EditPlan, projected: np.ndarray, token_ids, prompt_len: int) -> np.ndarray:
    m = projected.shape[0]
    x = np.concatenate([projected, w["decoder.token_embed"][np.asarray(token_ids)]], axis=0)
    total = x.shape[0]
    x = x + w["decoder.pos_embed"][:total]
    n, a, s = prompt_len, plan.prefix_len, plan.suffix_len
    spans = {
        Site.PREFIX: [1.0 if m <= t < m + a else 0.0 for t in range(total)],
        Site.SUFFIX: [1.0 if m + n - s <= t < m + n else 0.0 for t in range(total)],
        Site.INFIX: [1.0 if m + a <= t < m + n - s else 0.0 for t in range(total)],
        Site.CONTROL_TARGET: [
            1.0 if plan.control_token_index is not None and t == m + plan.control_token_index else 0.0
            for t in range(total)
        ],
    }
    for layer in range(1, config.decoder_layers + 1):
        x = block(x, w, f"decoder.layers.{layer}", config.heads, config.ln_eps, causal=True)
        if layer in plan.decoder_layers:
            for site in (Site.PREFIX, Site.INFIX, Site.SUFFIX, Site.CONTROL_TARGET):
                x = bank_editor(bank, site, layer, x, np.array(spans[site]))
    x = layernorm(x, w["decoder.ln_f.gain"], w["decoder.ln_f.bias"], config.ln_eps)
    return x @ w["decoder.head.weight"] + w["decoder.head.bias"]


def forward(config, w, bank, plan, image, token_ids, prompt_len, roi=None) -> np.ndarray:
    visual = encode(config, w, bank, plan, image, roi)
    return decode(config, w, bank, plan, project(config, w, bank, plan, visual, roi), token_ids, prompt_len)


def sample_loss(config, w, bank, plan, sample) -> float:
    """Mean next-token NLL over the response tokens of one sample."""
    logits = forward(config, w, bank, plan, sample.image.pixels, sample.token_ids, sample.prompt_len,
                     sample.image.roi_mask())
    m = config.num_patches
    nll = []
    for t in range(sample.prompt_len, len(sample.token_ids)):
        row = logits[m + t - 1]
        log_z = row.max() + np.log(np.exp(row - row.max()).sum())
        nll.append(log_z - row[sample.token_ids[t]])
    return float(np.mean(nll))
