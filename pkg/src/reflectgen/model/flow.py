"""Flow matching: linear interpolant, training loss, Euler sampler with CFG."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..rng import SeededRng, sample_logit_normal
from . import nn
from .context import ConditioningBundle, null_conditioning
from .dit import DiTConfig, dit_forward


@dataclass(frozen=True)
class FlowSample:
    """One training draw: x_t = (1 - t) x_w + t eps, exactly."""

    t: np.ndarray  # (B,)
    eps: np.ndarray  # like x_w
    x_w: np.ndarray  # clean image in [-1, 1]
    x_t: np.ndarray

    @staticmethod
    def draw(x_w: np.ndarray, rng: SeededRng, t: np.ndarray | None = None) -> "FlowSample":
        b = x_w.shape[0]
        if t is None:
            t = sample_logit_normal(rng, (b,))
        eps = rng.normal(x_w.shape)
        tb = t.reshape(b, 1, 1, 1).astype(np.float32)
        x_t = (1.0 - tb) * x_w + tb * eps
        return FlowSample(t=t, eps=eps, x_w=x_w, x_t=x_t)


def logit_normal_pdf(t: np.ndarray) -> np.ndarray:
    """Density of sigmoid(Z), Z ~ N(0,1); the weighting-mode loss weight."""
    t = np.asarray(t, dtype=np.float64)
    z = np.log(t / (1.0 - t))
    return (np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) / (t * (1.0 - t))).astype(np.float32)


def flow_loss(params: dict, cfg: DiTConfig, x_w: np.ndarray,
              cond: ConditioningBundle, rng: SeededRng,
              weighting: str = "sample", sample: FlowSample | None = None,
              forward=dit_forward) -> Tensor:
    """Mean squared residual between the predicted velocity and eps - x_w.

    ``weighting='sample'`` draws t logit-normally with unit weight (the
    default); ``weighting='uniform'`` draws t uniformly and weights the
    per-example loss by the logit-normal density. Both estimate the same
    objective up to normalization. ``sample``/``forward`` exist so tests
    can pin the draw or substitute an oracle predictor.
    """
    if weighting not in ("sample", "uniform"):
        raise ValueError(f"unknown weighting mode {weighting!r}")
    b = x_w.shape[0]
    if sample is not None:
        fs = sample
    else:
        if weighting == "uniform":
            t = rng.uniform(1e-4, 1.0 - 1e-4, (b,)).astype(np.float32)
        else:
            t = None
        fs = FlowSample.draw(x_w, rng, t=t)
    pred = forward(params, cfg, Tensor(fs.x_t), fs.t, cond)
    resid = ad.add(pred, Tensor(fs.x_w - fs.eps))
    sq = ad.mul(resid, resid)
    if weighting == "uniform":
        w = logit_normal_pdf(fs.t).reshape(b, 1, 1, 1)
        sq = ad.mul(sq, Tensor(np.broadcast_to(w, sq.shape).copy()))
    return ad.mean(sq)


def euler_sample(params: dict, cfg: DiTConfig, cond: ConditioningBundle,
                 steps: int, guidance_scale: float, rng: SeededRng,
                 forward=dit_forward) -> np.ndarray:
    """Integrate the learned velocity field from noise (t=1) down to t=0.

    Uniform descending grid; per step x <- x - dt * v_hat with
    v_hat = v_uncond + s (v_cond - v_uncond). s=0 degenerates to the
    unconditional field, s=1 to the conditional one; otherwise both
    branches run in a single stacked forward pass. Output is affinely
    mapped to [0, 1] and clamped.
    """
    if steps < 1:
        raise ValueError("euler_sample needs steps >= 1")
    if guidance_scale < 0:
        raise ValueError("guidance_scale must be >= 0")
    b = cond.seq.shape[0]
    x = rng.normal((b, cfg.image_size, cfg.image_size, 3))
    dt = 1.0 / steps
    with ad.no_grad():
        uncond = null_conditioning(params, b)
        both = None
        if guidance_scale not in (0.0, 1.0):
            both = _stack_bundles(cond, uncond)
        for k in range(steps):
            t_k = 1.0 - k * dt
            if guidance_scale == 0.0:
                v = forward(params, cfg, Tensor(x), np.full(b, t_k, np.float32),
                            uncond).data
            elif guidance_scale == 1.0:
                v = forward(params, cfg, Tensor(x), np.full(b, t_k, np.float32),
                            cond).data
            else:
                xx = np.concatenate([x, x], axis=0)
                vv = forward(params, cfg, Tensor(xx), np.full(2 * b, t_k, np.float32),
                             both).data
                v_c, v_u = vv[:b], vv[b:]
                v = v_u + guidance_scale * (v_c - v_u)
            x = x - dt * v
    return np.clip((x + 1.0) * 0.5, 0.0, 1.0).astype(np.float32)


def _stack_bundles(a: ConditioningBundle, b: ConditioningBundle) -> ConditioningBundle:
    """Stack two bundles along the batch axis, padding to a common length."""
    s = max(a.seq.shape[1], b.seq.shape[1])
    sa, va = _pad_bundle(a, s)
    sb, vb = _pad_bundle(b, s)
    return ConditioningBundle(ad.concat([sa, sb], axis=0),
                              np.concatenate([va, vb], axis=0),
                              np.concatenate([a.boundary, b.boundary]))


def _pad_bundle(bundle: ConditioningBundle, s: int):
    cur = bundle.seq.shape[1]
    if cur == s:
        return bundle.seq, bundle.valid
    bsz, _, c = bundle.seq.shape
    pad = Tensor(np.zeros((bsz, s - cur, c), dtype=np.float32))
    seq = ad.concat([bundle.seq, pad], axis=1)
    valid = np.concatenate(
        [bundle.valid, np.zeros((bsz, s - cur), dtype=bool)], axis=1)
    return seq, valid
