"""The tiny diffusion transformer: patch I/O, modulated blocks, velocity head.

Blocks follow the DiT pattern: timestep-modulated self-attention over the
64 image tokens, cross-attention into the conditioning sequence (prompt
embeddings, optionally followed by encoded reflection context), then a
feed-forward network. Modulation (shift/scale/gate) comes from a small MLP
over a sinusoidal embedding of t; gates and the output head start at zero
so an untrained model predicts the zero velocity field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..rng import SeededRng
from ..shapeworld.vocab import VOCAB, MAX_TOKENS
from . import nn


@dataclass(frozen=True)
class DiTConfig:
    image_size: int = 32
    patch: int = 4
    width: int = 128
    heads: int = 4
    depth: int = 6
    ffn_mult: int = 4
    prompt_depth: int = 1
    cond_width: int = 128
    # reflection-context encoder geometry
    pool_window: int = 2
    ctx_depth: int = 2
    max_context: int = 3

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.image_size % self.patch:
            raise ValueError(f"patch {self.patch} does not divide image {self.image_size}")
        feat = self.image_size // self.patch
        if feat % self.pool_window:
            raise ValueError(f"pool window {self.pool_window} does not divide "
                             f"the {feat}x{feat} feature map")
        if self.cond_width != self.width:
            raise ValueError("conditioning width must match model width")

    @property
    def tokens_per_side(self) -> int:
        return self.image_size // self.patch

    @property
    def n_tokens(self) -> int:
        return self.tokens_per_side ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * 3

    @property
    def vision_tokens(self) -> int:
        return (self.tokens_per_side // self.pool_window) ** 2

    @property
    def context_slot(self) -> int:
        # fixed-width context slot: vision tokens plus padded feedback
        return self.vision_tokens + MAX_TOKENS

    def to_json(self) -> dict:
        return dict(vars(self))

    @staticmethod
    def from_json(doc: dict) -> "DiTConfig":
        return DiTConfig(**doc)


@dataclass
class ConditioningBundle:
    """Combined cross-attention sequence: prompt embeddings then context M'.

    ``valid`` marks real tokens; ``boundary`` is the per-example prompt
    length, recording where M' begins.
    """

    seq: Tensor  # (B, S, C)
    valid: np.ndarray  # (B, S) bool
    boundary: np.ndarray  # (B,) int

    @property
    def mask(self) -> Tensor:
        return nn.key_padding_mask(self.valid)


def init_base_params(cfg: DiTConfig, rng: SeededRng) -> dict[str, Tensor]:
    """Embedding table, prompt encoder, null token, and the DiT itself."""
    p: dict[str, Tensor] = {}
    c = cfg.width
    p["embed.table"] = Tensor(rng.normal((len(VOCAB), c)) * 0.02, requires_grad=True)
    p["uncond.token"] = Tensor(rng.normal((1, c)) * 0.02, requires_grad=True)
    for i in range(cfg.prompt_depth):
        base = f"penc.b{i}"
        nn.init_rmsnorm(p, f"{base}.norm1", c)
        nn.init_attention(p, rng, f"{base}.attn", c)
        nn.init_rmsnorm(p, f"{base}.norm2", c)
        nn.init_ffn(p, rng, f"{base}.ffn", c, cfg.ffn_mult)
    nn.init_linear(p, rng, "dit.patch", cfg.patch_dim, c)
    p["dit.pos"] = Tensor(rng.normal((cfg.n_tokens, c)) * 0.02, requires_grad=True)
    nn.init_linear(p, rng, "dit.tmlp.w1", c, c * 2)
    nn.init_linear(p, rng, "dit.tmlp.w2", c * 2, c)
    for i in range(cfg.depth):
        base = f"dit.b{i}"
        nn.init_linear(p, rng, f"{base}.ada", c, 6 * c, zero=True)
        nn.init_rmsnorm(p, f"{base}.norm_sa", c)
        nn.init_attention(p, rng, f"{base}.attn", c)
        nn.init_rmsnorm(p, f"{base}.norm_ca", c)
        nn.init_attention(p, rng, f"{base}.cross", c)
        nn.init_rmsnorm(p, f"{base}.norm_ff", c)
        nn.init_ffn(p, rng, f"{base}.ffn", c, cfg.ffn_mult)
    nn.init_rmsnorm(p, "dit.final.norm", c)
    nn.init_linear(p, rng, "dit.final.ada", c, 2 * c, zero=True)
    nn.init_linear(p, rng, "dit.head", c, cfg.patch_dim, zero=True)
    return p


def patchify(x: Tensor, cfg: DiTConfig) -> Tensor:
    """(B, 32, 32, 3) -> (B, 64, 48): non-overlapping 4x4 patches, row-major."""
    b = x.shape[0]
    if x.shape[1:] != (cfg.image_size, cfg.image_size, 3):
        raise ad.ShapeMismatch(f"expected (B, {cfg.image_size}, {cfg.image_size}, 3), "
                               f"got {x.shape}")
    g, s = cfg.tokens_per_side, cfg.patch
    x = ad.reshape(x, (b, g, s, g, s, 3))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (b, g * g, s * s * 3))


def unpatchify(tokens: Tensor, cfg: DiTConfig) -> Tensor:
    b = tokens.shape[0]
    g, s = cfg.tokens_per_side, cfg.patch
    x = ad.reshape(tokens, (b, g, g, s, s, 3))
    x = ad.transpose(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (b, g * s, g * s, 3))


def _modulate(x: Tensor, shift: Tensor, scl: Tensor) -> Tensor:
    return ad.add(ad.mul(x, ad.add(scl, Tensor(np.ones((), dtype=np.float32)))), shift)


def _ada_chunks(params: dict, name: str, temb: Tensor, n: int) -> list[Tensor]:
    b = temb.shape[0]
    c = temb.shape[-1]
    out = nn.linear(params, name, temb)  # (B, n*C)
    out = ad.reshape(out, (b, n, c))
    return [ad.reshape(ad.slice_axis(out, 1, i, i + 1), (b, 1, c)) for i in range(n)]


def encode_prompt(params: dict, cfg: DiTConfig, ids: np.ndarray,
                  valid: np.ndarray) -> Tensor:
    """Token embedding plus the small prompt transformer; PADs stay masked."""
    h = ad.embed_lookup(params["embed.table"], ids)
    mask = nn.key_padding_mask(valid)
    rope = nn.rope_tables(np.arange(ids.shape[1]), cfg.width // cfg.heads)
    for i in range(cfg.prompt_depth):
        base = f"penc.b{i}"
        z = nn.rms_norm(params, f"{base}.norm1", h)
        h = ad.add(h, nn.attention(params, f"{base}.attn", z, z,
                                   cfg.heads, mask=mask, rope=rope))
        h = ad.add(h, nn.ffn(params, f"{base}.ffn",
                             nn.rms_norm(params, f"{base}.norm2", h)))
    return h


def dit_forward(params: dict, cfg: DiTConfig, x: Tensor, t: np.ndarray,
                cond: ConditioningBundle) -> Tensor:
    """Velocity prediction: same shape as the image input."""
    if cond.seq.shape[-1] != cfg.width:
        raise ad.ShapeMismatch(f"conditioning width {cond.seq.shape[-1]} != "
                               f"model width {cfg.width}")
    b = x.shape[0]
    h = ad.add(nn.linear(params, "dit.patch", patchify(x, cfg)), params["dit.pos"])
    temb = nn.linear(params, "dit.tmlp.w2",
                     ad.gelu(nn.linear(params, "dit.tmlp.w1",
                                       nn.timestep_embedding(t, cfg.width))))
    cmask = cond.mask
    for i in range(cfg.depth):
        base = f"dit.b{i}"
        sa_sh, sa_sc, sa_g, ff_sh, ff_sc, ff_g = _ada_chunks(params, f"{base}.ada", temb, 6)
        z = _modulate(nn.rms_norm(params, f"{base}.norm_sa", h), sa_sh, sa_sc)
        h = ad.add(h, ad.mul(sa_g, nn.attention(params, f"{base}.attn", z, z, cfg.heads)))
        z = nn.rms_norm(params, f"{base}.norm_ca", h)
        h = ad.add(h, nn.attention(params, f"{base}.cross", z, cond.seq,
                                   cfg.heads, mask=cmask))
        z = _modulate(nn.rms_norm(params, f"{base}.norm_ff", h), ff_sh, ff_sc)
        h = ad.add(h, ad.mul(ff_g, nn.ffn(params, f"{base}.ffn", z)))
    f_sh, f_sc = _ada_chunks(params, "dit.final.ada", temb, 2)
    h = _modulate(nn.rms_norm(params, "dit.final.norm", h), f_sh, f_sc)
    return unpatchify(nn.linear(params, "dit.head", h), cfg)
