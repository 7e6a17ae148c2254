"""Synthetic shape-world domain: grammar, scenes, renderer, oracle judge."""

from .grammar import (
    CATEGORIES,
    COLORS,
    COUNTS,
    RELATIONS,
    SHAPES,
    GrammarError,
    PromptSpec,
    category_capacity,
    enumerate_category,
    sample_prompt,
)
from .scene import (
    GRID,
    MAX_OBJECTS,
    SceneError,
    SceneGraph,
    SceneObject,
    sample_scene,
    scene_satisfies,
)
from .render import IMAGE_SIZE, PALETTE, render, read_ppm, write_ppm
from .detect import detect
from .judge import NULL_FEEDBACK, FeedbackRecord, Violation, judge_feedback, score_prompt
from .vocab import MAX_TOKENS, TokenSeq, VocabError, VOCAB, detokenize, tokenize

__all__ = [
    "CATEGORIES", "COLORS", "COUNTS", "RELATIONS", "SHAPES",
    "GrammarError", "PromptSpec", "category_capacity", "enumerate_category",
    "sample_prompt",
    "GRID", "MAX_OBJECTS", "SceneError", "SceneGraph", "SceneObject",
    "sample_scene", "scene_satisfies",
    "IMAGE_SIZE", "PALETTE", "render", "read_ppm", "write_ppm",
    "detect",
    "NULL_FEEDBACK", "FeedbackRecord", "Violation", "judge_feedback", "score_prompt",
    "MAX_TOKENS", "TokenSeq", "VocabError", "VOCAB", "detokenize", "tokenize",
]
