"""Prompt grammar: six compositional categories over a tiny closed world.

Surface text is a pure function of the constraints, so prompt identity is
the hash of (category, constraints). Category capacities are small (the
world has 4 shapes x 4 colors); pool builders sample with replacement but
keep train/eval id sets disjoint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from ..rng import SeededRng

SHAPES = ("circle", "square", "triangle", "cross")
COLORS = ("red", "green", "blue", "yellow")
COUNTS = (1, 2, 3, 4)
RELATIONS = ("left_of", "right_of", "above", "below")
CATEGORIES = ("single", "two", "counting", "color", "position", "attribution")

COUNT_WORDS = {1: "one", 2: "two", 3: "three", 4: "four"}
RELATION_TEXT = {"left_of": "left of", "right_of": "right of",
                 "above": "above", "below": "below"}
PLURALS = {"circle": "circles", "square": "squares",
           "triangle": "triangles", "cross": "crosses"}


class GrammarError(ValueError):
    """Constraints outside the closed world."""


@dataclass(frozen=True)
class PromptSpec:
    """One prompt: a category plus its structured demands.

    ``objects`` holds (shape, color-or-None) in surface order; ``count``
    and ``relation`` are set only for the categories that use them.
    """

    category: str
    objects: tuple[tuple[str, str | None], ...]
    count: int | None = None
    relation: str | None = None

    def __post_init__(self):
        validate_spec(self)

    @property
    def text(self) -> str:
        return render_text(self)

    @property
    def id(self) -> str:
        key = repr((self.category, self.objects, self.count, self.relation))
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def validate_spec(spec: PromptSpec) -> None:
    if spec.category not in CATEGORIES:
        raise GrammarError(f"unknown category {spec.category!r}")
    for shape, color in spec.objects:
        if shape not in SHAPES:
            raise GrammarError(f"unknown shape {shape!r}")
        if color is not None and color not in COLORS:
            raise GrammarError(f"unknown color {color!r}")
    cat = spec.category
    n_obj = len(spec.objects)
    if cat in ("single", "color", "counting"):
        if n_obj != 1 or spec.objects[0][1] is None:
            raise GrammarError(f"{cat} needs exactly one colored object")
    if cat == "counting":
        if spec.count not in COUNTS:
            raise GrammarError(f"counting needs count in {COUNTS}, got {spec.count}")
    elif spec.count is not None:
        raise GrammarError(f"{cat} does not take a count")
    if cat == "two":
        if n_obj != 2 or any(c is not None for _, c in spec.objects):
            raise GrammarError("two needs exactly two colorless objects")
        if spec.objects[0][0] == spec.objects[1][0]:
            raise GrammarError("two needs distinct shapes")
    if cat == "attribution":
        if n_obj != 2 or any(c is None for _, c in spec.objects):
            raise GrammarError("attribution needs two colored objects")
        if spec.objects[0][0] == spec.objects[1][0]:
            raise GrammarError("attribution needs distinct shapes")
    if cat == "position":
        if n_obj != 2 or any(c is None for _, c in spec.objects):
            raise GrammarError("position needs two colored objects")
        if spec.objects[0] == spec.objects[1]:
            raise GrammarError("position needs distinguishable objects")
        if spec.relation not in RELATIONS:
            raise GrammarError(f"position needs relation in {RELATIONS}")
    elif spec.relation is not None:
        raise GrammarError(f"{cat} does not take a relation")


def obj_phrase(shape: str, color: str | None) -> str:
    return f"{color} {shape}" if color else shape


def render_text(spec: PromptSpec) -> str:
    """Canonical surface form; the tokenizer vocabulary covers every output."""
    cat = spec.category
    if cat == "single":
        shape, color = spec.objects[0]
        return f"a {color} {shape}"
    if cat == "color":
        shape, color = spec.objects[0]
        return f"a {shape} that is {color}"
    if cat == "counting":
        shape, color = spec.objects[0]
        noun = PLURALS[shape] if spec.count > 1 else shape
        return f"{COUNT_WORDS[spec.count]} {color} {noun}"
    if cat == "two":
        (sa, _), (sb, _) = spec.objects
        return f"a {sa} and a {sb}"
    if cat == "attribution":
        (sa, ca), (sb, cb) = spec.objects
        return f"a {ca} {sa} and a {cb} {sb}"
    (sa, ca), (sb, cb) = spec.objects
    return f"a {ca} {sa} {RELATION_TEXT[spec.relation]} a {cb} {sb}"


@lru_cache(maxsize=None)
def enumerate_category(category: str) -> tuple[PromptSpec, ...]:
    """Every legal spec of a category, in a fixed deterministic order."""
    out: list[PromptSpec] = []
    if category in ("single", "color"):
        for s in SHAPES:
            for c in COLORS:
                out.append(PromptSpec(category, ((s, c),)))
    elif category == "counting":
        for n in COUNTS:
            for s in SHAPES:
                for c in COLORS:
                    out.append(PromptSpec(category, ((s, c),), count=n))
    elif category == "two":
        for sa in SHAPES:
            for sb in SHAPES:
                if sa != sb:
                    out.append(PromptSpec(category, ((sa, None), (sb, None))))
    elif category == "attribution":
        for sa in SHAPES:
            for sb in SHAPES:
                if sa == sb:
                    continue
                for ca in COLORS:
                    for cb in COLORS:
                        out.append(PromptSpec(category, ((sa, ca), (sb, cb))))
    elif category == "position":
        combos = [(s, c) for s in SHAPES for c in COLORS]
        for a in combos:
            for b in combos:
                if a == b:
                    continue
                for rel in RELATIONS:
                    out.append(PromptSpec(category, (a, b), relation=rel))
    else:
        raise GrammarError(f"unknown category {category!r}")
    return tuple(out)


def category_capacity(category: str) -> int:
    return len(enumerate_category(category))


def sample_prompt(category: str, rng: SeededRng) -> PromptSpec:
    """Uniform draw from the category's legal constraint space."""
    space = enumerate_category(category)
    return space[rng.integers(0, len(space))]
