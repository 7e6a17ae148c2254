"""Reflection-context encoder: past (image, feedback) pairs -> extra conditioning.

Each context item contributes a fixed-width slot of 16 pooled vision tokens
followed by its feedback embeddings (interleaved V_i then E_i). Slots are
physically padded for batching; rotary positions count only valid tokens,
so inserting PAD never shifts or changes any real token's output.

The conditioning sequence handed to cross-attention is physically
[null-token column | prompt embeddings | M'], where the null column is
unmasked only when conditioning is dropped (classifier-free guidance); for
normal examples the attended sequence is exactly prompt followed by M'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..rng import SeededRng
from ..shapeworld.vocab import MAX_TOKENS, PAD_ID, TokenSeq
from . import nn
from .dit import ConditioningBundle, DiTConfig, encode_prompt, patchify


@dataclass(frozen=True)
class ContextItem:
    image: np.ndarray  # (32, 32, 3) float32 in [0, 1]
    feedback: TokenSeq
    provenance: int  # iteration index the pair came from


@dataclass(frozen=True)
class ReflectionContext:
    """Ordered (image, feedback) pairs, at most ``capacity`` at use sites."""

    items: tuple[ContextItem, ...]
    capacity: int

    def __post_init__(self):
        idx = [it.provenance for it in self.items]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("context iteration indices must strictly increase")

    def __len__(self) -> int:
        return len(self.items)


class ContextCapacityError(ValueError):
    """More context items than the declared capacity."""


def init_context_params(cfg: DiTConfig, rng: SeededRng,
                        frozen_seed: int) -> dict[str, Tensor]:
    """Frozen vision projection plus the trained projector and transformer."""
    p: dict[str, Tensor] = {}
    c = cfg.width
    frozen = SeededRng(frozen_seed).normal((cfg.patch_dim, c)) / np.sqrt(
        cfg.patch_dim).astype(np.float32)
    p["ctx.frozen.w"] = Tensor(frozen, requires_grad=False)
    nn.init_linear(p, rng, "ctx.proj.w1", c, c)
    nn.init_linear(p, rng, "ctx.proj.w2", c, c)
    nn.init_rmsnorm(p, "ctx.norm", c)
    for i in range(cfg.ctx_depth):
        base = f"ctx.b{i}"
        nn.init_rmsnorm(p, f"{base}.norm1", c)
        nn.init_attention(p, rng, f"{base}.attn", c)
        nn.init_rmsnorm(p, f"{base}.norm2", c)
        nn.init_ffn(p, rng, f"{base}.ffn", c, cfg.ffn_mult)
    return p


FROZEN_PARAMS = ("ctx.frozen.w",)


def encode_image(params: dict, cfg: DiTConfig, images: Tensor) -> Tensor:
    """(B, 32, 32, 3) in [0, 1] -> (B, 16, C) visual tokens.

    Frozen patch projection gives an 8x8 feature map; average pooling
    (window 2) brings it to 4x4; the trained two-layer GELU projector and
    an RMSNorm produce the tokens.
    """
    b = images.shape[0]
    scaled = ad.add(ad.scale(images, 2.0), Tensor(np.float32(-1.0)))
    feats = ad.matmul(ad.reshape(patchify(scaled, cfg), (-1, cfg.patch_dim)),
                      params["ctx.frozen.w"])
    g = cfg.tokens_per_side
    feats = ad.reshape(feats, (b, g, g, cfg.width))
    feats = ad.transpose(feats, (0, 3, 1, 2))
    pooled = ad.mean_pool2d(feats, cfg.pool_window)
    side = g // cfg.pool_window
    tokens = ad.transpose(ad.reshape(pooled, (b, cfg.width, side * side)), (0, 2, 1))
    proj = nn.linear(params, "ctx.proj.w2",
                     ad.gelu(nn.linear(params, "ctx.proj.w1", tokens)))
    return nn.rms_norm(params, "ctx.norm", proj)


def encode_feedback(params: dict, ids: np.ndarray) -> Tensor:
    """Embedding lookup for feedback ids; PAD rows are masked downstream.

    |E| (the valid length) counts every non-PAD token, including the
    sequence markers.
    """
    return ad.embed_lookup(params["embed.table"], ids)


def context_transform(params: dict, cfg: DiTConfig,
                      contexts: list[ReflectionContext]
                      ) -> tuple[Tensor | None, np.ndarray | None]:
    """Encode a batch of contexts into (M', valid) with fixed-width slots.

    Returns (None, None) when every context is empty. Output sequence
    length is max_items * (vision_tokens + MAX_TOKENS); ``valid`` marks the
    real interleaved [V_1, E_1, V_2, E_2, ...] tokens.
    """
    for ctx in contexts:
        if len(ctx.items) > ctx.capacity:
            raise ContextCapacityError(
                f"{len(ctx.items)} context items exceed capacity {ctx.capacity}")
    counts = [len(ctx.items) for ctx in contexts]
    k_max = max(counts, default=0)
    if k_max == 0:
        return None, None

    items = [it for ctx in contexts for it in ctx.items]
    images = Tensor(np.stack([it.image for it in items]).astype(np.float32))
    ids = np.stack([it.feedback.array() for it in items])
    v_all = encode_image(params, cfg, images)  # (N, 16, C)
    e_all = encode_feedback(params, ids)  # (N, 32, C)
    slots = ad.concat([v_all, e_all], axis=1)  # (N, slot, C): V_i then E_i

    slot = cfg.context_slot
    seq_len = k_max * slot
    rows: list[Tensor] = []
    valid = np.zeros((len(contexts), seq_len), dtype=bool)
    offset = 0
    for b, ctx in enumerate(contexts):
        k = counts[b]
        if k:
            mine = ad.reshape(ad.slice_axis(slots, 0, offset, offset + k),
                              (k * slot, cfg.width))
            offset += k
            if k < k_max:
                pad = Tensor(np.zeros(((k_max - k) * slot, cfg.width), dtype=np.float32))
                mine = ad.concat([mine, pad], axis=0)
        else:
            mine = Tensor(np.zeros((seq_len, cfg.width), dtype=np.float32))
        rows.append(ad.reshape(mine, (1, seq_len, cfg.width)))
        for s, item in enumerate(ctx.items):
            start = s * slot
            valid[b, start:start + cfg.vision_tokens] = True
            fb = item.feedback
            valid[b, start + cfg.vision_tokens:start + cfg.vision_tokens + MAX_TOKENS] = (
                fb.array() != PAD_ID)
    m = ad.concat(rows, axis=0) if len(rows) > 1 else rows[0]

    # rotary positions: index among the valid tokens of each example
    positions = np.maximum(np.cumsum(valid, axis=1) - 1, 0)
    rope = nn.rope_tables(positions, cfg.width // cfg.heads)
    mask = nn.key_padding_mask(valid)
    h = m
    for i in range(cfg.ctx_depth):
        base = f"ctx.b{i}"
        z = nn.rms_norm(params, f"{base}.norm1", h)
        h = ad.add(h, nn.attention(params, f"{base}.attn", z, z,
                                   cfg.heads, mask=mask, rope=rope))
        h = ad.add(h, nn.ffn(params, f"{base}.ffn",
                             nn.rms_norm(params, f"{base}.norm2", h)))
    return h, valid


def null_conditioning(params: dict, batch: int) -> ConditioningBundle:
    """Empty-conditioning bundle: only the learned null token is visible."""
    c = params["uncond.token"].shape[-1]
    base = Tensor(np.zeros((batch, 1, c), dtype=np.float32))
    seq = ad.add(base, ad.reshape(params["uncond.token"], (1, 1, c)))
    return ConditioningBundle(seq, np.ones((batch, 1), dtype=bool),
                              np.zeros(batch, dtype=np.int64))


def build_conditioning(params: dict, prompt_emb: Tensor, prompt_valid: np.ndarray,
                       mprime: Tensor | None = None,
                       ctx_valid: np.ndarray | None = None,
                       drop: np.ndarray | None = None) -> ConditioningBundle:
    """Assemble [prompt || M'] (plus the null-token column for CFG dropout).

    ``drop`` marks examples whose conditioning is replaced by the null
    token. The attended sequence of a kept example is exactly the valid
    prompt tokens followed by the valid M' rows.
    """
    if mprime is not None and mprime.shape[-1] != prompt_emb.shape[-1]:
        raise ad.ShapeMismatch(
            f"context width {mprime.shape[-1]} != prompt width {prompt_emb.shape[-1]}")
    b = prompt_emb.shape[0]
    if drop is None:
        drop = np.zeros(b, dtype=bool)
    null = null_conditioning(params, b)
    parts = [null.seq, prompt_emb]
    keep = ~drop
    valid_parts = [drop[:, None], prompt_valid & keep[:, None]]
    if mprime is not None:
        parts.append(mprime)
        valid_parts.append(ctx_valid & keep[:, None])
    seq = ad.concat(parts, axis=1)
    valid = np.concatenate(valid_parts, axis=1)
    boundary = (prompt_valid & keep[:, None]).sum(axis=1).astype(np.int64)
    return ConditioningBundle(seq, valid, boundary)


def conditioning_for_batch(params: dict, cfg: DiTConfig,
                           prompt_seqs: list[TokenSeq],
                           contexts: list[ReflectionContext] | None = None,
                           drop: np.ndarray | None = None) -> ConditioningBundle:
    """Tokenized prompts (+ optional contexts) -> one conditioning bundle."""
    lmax = max(s.length for s in prompt_seqs)
    ids = np.stack([np.asarray(s.ids[:lmax], dtype=np.int64) for s in prompt_seqs])
    valid = np.arange(lmax)[None, :] < np.array([s.length for s in prompt_seqs])[:, None]
    prompt_emb = encode_prompt(params, cfg, ids, valid)
    if contexts is None or all(len(c) == 0 for c in contexts):
        return build_conditioning(params, prompt_emb, valid, drop=drop)
    mprime, ctx_valid = context_transform(params, cfg, contexts)
    return build_conditioning(params, prompt_emb, valid, mprime, ctx_valid, drop=drop)
