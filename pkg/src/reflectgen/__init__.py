"""Reflection-conditioned diffusion on a synthetic shape world.

A small numpy library: a tape-based autodiff core, a deterministic
shape-world domain with an exact oracle judge, a tiny diffusion
transformer trained with flow matching, a context encoder that turns past
(image, feedback) pairs into extra conditioning, and the
verification-reflection inference loop with its evaluation harness.
"""

from .autodiff import Tensor, backward, no_grad
from .rng import SeededRng, sample_logit_normal
from .optim import AdamWState, adamw_step, warmup_lr
from .gradcheck import finite_diff_check

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "SeededRng",
    "sample_logit_normal",
    "AdamWState",
    "adamw_step",
    "warmup_lr",
    "finite_diff_check",
]

__version__ = "0.1.0"
