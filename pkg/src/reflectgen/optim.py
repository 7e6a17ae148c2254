"""AdamW with decoupled weight decay, plus the linear-warmup schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError, Tensor


@dataclass
class AdamWState:
    """Per-parameter moment buffers and the shared hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure(self, name: str, shape) -> None:
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=np.float32)
            self.v[name] = np.zeros(shape, dtype=np.float32)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
               state: AdamWState, lr: float | None = None) -> AdamWState:
    """One AdamW update in place: bias-corrected moments, decoupled decay.

    ``lr`` overrides the stored learning rate for this step (warmup). A
    non-finite gradient rejects the whole step so the caller can skip the
    batch.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {params[name].shape} for '{name}'")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for '{name}': step rejected")

    state.step += 1
    t = state.step
    eff_lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        state.ensure(name, p.shape)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.data -= np.float32(eff_lr * state.weight_decay) * p.data
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (eff_lr * mhat / (np.sqrt(vhat) + state.eps)).astype(np.float32)
    return state


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear warmup to ``base_lr`` over ``warmup_steps``, then constant."""
    if warmup_steps <= 0 or step >= warmup_steps:
        return base_lr
    return base_lr * step / warmup_steps
