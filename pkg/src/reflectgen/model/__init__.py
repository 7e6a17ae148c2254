"""Model stack: DiT, reflection-context encoder, flow-matching objective."""

from .dit import (
    ConditioningBundle,
    DiTConfig,
    dit_forward,
    encode_prompt,
    init_base_params,
    patchify,
    unpatchify,
)
from .context import (
    FROZEN_PARAMS,
    ContextCapacityError,
    ContextItem,
    ReflectionContext,
    build_conditioning,
    conditioning_for_batch,
    context_transform,
    encode_feedback,
    encode_image,
    init_context_params,
    null_conditioning,
)
from .flow import FlowSample, euler_sample, flow_loss, logit_normal_pdf

__all__ = [
    "ConditioningBundle", "DiTConfig", "dit_forward", "encode_prompt",
    "init_base_params", "patchify", "unpatchify",
    "FROZEN_PARAMS", "ContextCapacityError", "ContextItem", "ReflectionContext",
    "build_conditioning", "conditioning_for_batch", "context_transform",
    "encode_feedback", "encode_image", "init_context_params", "null_conditioning",
    "FlowSample", "euler_sample", "flow_loss", "logit_normal_pdf",
]
