"""Transformer building blocks on top of the autodiff kernels.

Parameters live in a flat name->Tensor dict so checkpointing, freezing and
optimizer bookkeeping stay trivial. Forward helpers are pure functions of
(params, inputs).
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..rng import SeededRng

ROPE_BASE = 10000.0


def init_linear(params: dict, rng: SeededRng, name: str, n_in: int, n_out: int,
                zero: bool = False) -> None:
    if zero:
        w = np.zeros((n_in, n_out), dtype=np.float32)
    else:
        w = rng.normal((n_in, n_out)) / np.sqrt(n_in).astype(np.float32)
    params[f"{name}.w"] = Tensor(w, requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True)


def init_rmsnorm(params: dict, name: str, width: int) -> None:
    params[f"{name}.g"] = Tensor(np.ones(width, dtype=np.float32), requires_grad=True)


def init_attention(params: dict, rng: SeededRng, name: str, width: int) -> None:
    for proj in ("q", "k", "v", "o"):
        init_linear(params, rng, f"{name}.{proj}", width, width)


def init_ffn(params: dict, rng: SeededRng, name: str, width: int, mult: int) -> None:
    init_linear(params, rng, f"{name}.w1", width, width * mult)
    init_linear(params, rng, f"{name}.w2", width * mult, width)


def linear(params: dict, name: str, x: Tensor) -> Tensor:
    w, b = params[f"{name}.w"], params[f"{name}.b"]
    lead = x.shape[:-1]
    flat = ad.reshape(x, (-1, x.shape[-1]))
    out = ad.add(ad.matmul(flat, w), b)
    return ad.reshape(out, (*lead, w.shape[1]))


def ffn(params: dict, name: str, x: Tensor) -> Tensor:
    return linear(params, f"{name}.w2", ad.gelu(linear(params, f"{name}.w1", x)))


def rms_norm(params: dict, name: str, x: Tensor) -> Tensor:
    return ad.rms_norm(x, params[f"{name}.g"])


def split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, c = x.shape
    return ad.transpose(ad.reshape(x, (b, t, heads, c // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, t, d = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, t, h * d))


def rope_tables(positions: np.ndarray, head_dim: int) -> tuple[Tensor, Tensor]:
    """cos/sin tables for rotary embedding at the given integer positions.

    ``positions`` is (T,) or (B, T); output shapes broadcast against
    (B, H, T, head_dim/2).
    """
    half = head_dim // 2
    freqs = ROPE_BASE ** (-np.arange(half, dtype=np.float64) / half)
    angles = np.asarray(positions, dtype=np.float64)[..., None] * freqs
    cos = np.cos(angles).astype(np.float32)
    sin = np.sin(angles).astype(np.float32)
    if cos.ndim == 2:  # (T, half) -> (1, 1, T, half)
        cos, sin = cos[None, None], sin[None, None]
    else:  # (B, T, half) -> (B, 1, T, half)
        cos, sin = cos[:, None], sin[:, None]
    return Tensor(cos), Tensor(sin)


def apply_rope(x: Tensor, cos: Tensor, sin: Tensor) -> Tensor:
    """Rotate head-dimension halves: (x1, x2) -> (x1 c - x2 s, x2 c + x1 s)."""
    half = x.shape[-1] // 2
    x1 = ad.slice_axis(x, x.ndim - 1, 0, half)
    x2 = ad.slice_axis(x, x.ndim - 1, half, x.shape[-1])
    rot1 = ad.add(ad.mul(x1, cos), ad.scale(ad.mul(x2, sin), -1.0))
    rot2 = ad.add(ad.mul(x2, cos), ad.mul(x1, sin))
    return ad.concat([rot1, rot2], axis=x.ndim - 1)


def attention(params: dict, name: str, x: Tensor, kv: Tensor, heads: int,
              mask: Tensor | None = None,
              rope: tuple[Tensor, Tensor] | None = None) -> Tensor:
    """Multi-head attention; self-attention when ``kv is x``.

    ``mask`` is an additive (B, 1, 1, S) or (B, 1, T, S) tensor; ``rope``
    rotates queries and keys (self-attention only).
    """
    q = split_heads(linear(params, f"{name}.q", x), heads)
    k = split_heads(linear(params, f"{name}.k", kv), heads)
    v = split_heads(linear(params, f"{name}.v", kv), heads)
    if rope is not None:
        cos, sin = rope
        q = apply_rope(q, cos, sin)
        k = apply_rope(k, cos, sin)
    out = ad.scaled_dot_attention(q, k, v, mask=mask)
    return linear(params, f"{name}.o", merge_heads(out))


def key_padding_mask(valid: np.ndarray) -> Tensor:
    """(B, S) boolean validity -> additive (B, 1, 1, S) attention mask."""
    m = np.where(valid[:, None, None, :], 0.0, -1e9).astype(np.float32)
    return Tensor(m)


def timestep_embedding(t: np.ndarray, dim: int) -> Tensor:
    """Sinusoidal features of continuous t in [0, 1] (scaled by 1000)."""
    half = dim // 2
    freqs = np.exp(-np.log(ROPE_BASE) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * 1000.0 * freqs
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1).astype(np.float32)
    return Tensor(emb)
