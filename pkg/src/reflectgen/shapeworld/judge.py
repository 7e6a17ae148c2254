"""Exact oracle judge: structured violations rendered through fixed templates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect import detect
from .grammar import RELATION_TEXT, GrammarError, PromptSpec, obj_phrase
from .scene import SceneGraph, _relation_holds, scene_satisfies

NULL_FEEDBACK = "This image is correct."
MAX_VIOLATIONS = 2

_KIND_ORDER = {"missing": 0, "count": 1, "color": 2, "position": 3}


@dataclass(frozen=True)
class Violation:
    kind: str  # missing | count | color | position
    subject: str  # object phrase the violation is about
    expected: str | int | None = None
    found: str | int | None = None
    relation: str | None = None
    other: str | None = None

    def render(self) -> str:
        if self.kind == "missing":
            return f"There is no {self.subject} in the image."
        if self.kind == "count":
            return (f"There should be {self.expected} {self.subject} in the image, "
                    f"but only {self.found} exist.")
        if self.kind == "color":
            return f"The {self.subject} should be {self.expected}, but it is {self.found}."
        if self.kind == "position":
            rel = RELATION_TEXT[self.relation]
            return f"The {self.subject} should be {rel} the {self.other}."
        raise ValueError(f"unknown violation kind {self.kind!r}")


@dataclass(frozen=True)
class FeedbackRecord:
    """Judge output: ordered violations plus their templated surface text."""

    violations: tuple[Violation, ...]
    text: str

    @property
    def is_null(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "is_null": self.is_null,
            "violations": [
                {k: v for k, v in vars(viol).items() if v is not None}
                for viol in self.violations
            ],
        }


def _make_record(violations: list[Violation]) -> FeedbackRecord:
    ordered = sorted(violations, key=lambda v: _KIND_ORDER[v.kind])[:MAX_VIOLATIONS]
    if not ordered:
        return FeedbackRecord((), NULL_FEEDBACK)
    return FeedbackRecord(tuple(ordered), " ".join(v.render() for v in ordered))


def _violations_for(spec: PromptSpec, scene: SceneGraph) -> list[Violation]:
    objs = scene.objects
    cat = spec.category
    out: list[Violation] = []
    if cat in ("single", "attribution"):
        for shape, color in spec.objects:
            if not any(o.shape == shape and o.color == color for o in objs):
                out.append(Violation("missing", obj_phrase(shape, color)))
    elif cat == "two":
        for shape, _ in spec.objects:
            if not any(o.shape == shape for o in objs):
                out.append(Violation("missing", shape))
    elif cat == "counting":
        shape, color = spec.objects[0]
        k = sum(1 for o in objs if o.shape == shape and o.color == color)
        if k == 0:
            out.append(Violation("missing", obj_phrase(shape, color)))
        elif k != spec.count:
            out.append(Violation("count", obj_phrase(shape, color),
                                 expected=spec.count, found=k))
    elif cat == "color":
        shape, color = spec.objects[0]
        same_shape = [o for o in objs if o.shape == shape]
        if not same_shape:
            out.append(Violation("missing", shape))
        elif not any(o.color == color for o in same_shape):
            out.append(Violation("color", shape, expected=color,
                                 found=same_shape[0].color))
    elif cat == "position":
        (sa, ca), (sb, cb) = spec.objects
        first = [o for o in objs if o.shape == sa and o.color == ca]
        second = [o for o in objs if o.shape == sb and o.color == cb]
        if not first:
            out.append(Violation("missing", obj_phrase(sa, ca)))
        if not second:
            out.append(Violation("missing", obj_phrase(sb, cb)))
        if first and second and not any(
            _relation_holds(a, b, spec.relation) for a in first for b in second
        ):
            out.append(Violation("position", obj_phrase(sa, ca),
                                 relation=spec.relation, other=obj_phrase(sb, cb)))
    else:
        raise GrammarError(f"unknown category {cat!r}")
    return out


def judge_feedback(spec: PromptSpec, image: np.ndarray) -> FeedbackRecord:
    """Detect, compare against the prompt's constraints, render templates."""
    return _make_record(_violations_for(spec, detect(image)))


def score_prompt(spec: PromptSpec, image: np.ndarray) -> bool:
    """Pass/fail for the benchmark: the detected scene meets every constraint."""
    return scene_satisfies(spec, detect(image))
