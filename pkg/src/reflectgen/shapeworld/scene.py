"""Symbolic scenes: ground truth behind the oracle judge, plus samplers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from ..rng import SeededRng
from .grammar import COLORS, SHAPES, GrammarError, PromptSpec, validate_spec

GRID = 4
MAX_OBJECTS = 6
DISTRACTOR_PROB = 0.3


class SceneObject(NamedTuple):
    shape: str
    color: str
    cell: tuple[int, int]  # (row, col) on the 4x4 grid


class SceneError(ValueError):
    """Scene violates the world invariants."""


@dataclass(frozen=True)
class SceneGraph:
    """Objects in pairwise-distinct cells over a fixed background.

    Objects are stored in canonical order (cell-major), so two scenes with
    the same content compare equal regardless of construction order.
    """

    objects: tuple[SceneObject, ...]
    background: str = "black"

    def __post_init__(self):
        objs = tuple(sorted(SceneObject(*o) for o in self.objects))
        object.__setattr__(self, "objects", objs)
        if len(objs) > MAX_OBJECTS:
            raise SceneError(f"{len(objs)} objects exceed the limit of {MAX_OBJECTS}")
        cells = [o.cell for o in objs]
        if len(set(cells)) != len(cells):
            raise SceneError("objects must occupy pairwise-distinct cells")
        for o in objs:
            if o.shape not in SHAPES or o.color not in COLORS:
                raise SceneError(f"unknown shape/color {o.shape!r}/{o.color!r}")
            if not (0 <= o.cell[0] < GRID and 0 <= o.cell[1] < GRID):
                raise SceneError(f"cell {o.cell} outside the {GRID}x{GRID} grid")
        if self.background != "black":
            raise SceneError(f"unsupported background {self.background!r}")

    def to_json(self) -> dict:
        return {
            "objects": [[o.shape, o.color, list(o.cell)] for o in self.objects],
            "background": self.background,
        }

    @staticmethod
    def from_json(doc: dict) -> "SceneGraph":
        objs = tuple(SceneObject(s, c, (cell[0], cell[1])) for s, c, cell in doc["objects"])
        return SceneGraph(objs, doc.get("background", "black"))


def _relation_holds(a: SceneObject, b: SceneObject, relation: str) -> bool:
    from .render import object_centroid  # mask centroids live with the rasterizer

    ay, ax = object_centroid(a.shape, a.cell)
    by, bx = object_centroid(b.shape, b.cell)
    if relation == "left_of":
        return ax < bx
    if relation == "right_of":
        return ax > bx
    if relation == "above":
        return ay < by
    if relation == "below":
        return ay > by
    raise GrammarError(f"unknown relation {relation!r}")


def scene_satisfies(spec: PromptSpec, scene: SceneGraph) -> bool:
    """Direct constraint check on a symbolic scene.

    This is the scoring path: exact count for counting, presence for
    two/attribution, color binding where demanded, strict centroid
    comparison for relations.
    """
    objs = scene.objects
    cat = spec.category
    if cat == "single":
        shape, color = spec.objects[0]
        return any(o.shape == shape and o.color == color for o in objs)
    if cat == "color":
        shape, color = spec.objects[0]
        return any(o.shape == shape and o.color == color for o in objs)
    if cat == "counting":
        shape, color = spec.objects[0]
        return sum(1 for o in objs if o.shape == shape and o.color == color) == spec.count
    if cat == "two":
        return all(any(o.shape == s for o in objs) for s, _ in spec.objects)
    if cat == "attribution":
        return all(any(o.shape == s and o.color == c for o in objs)
                   for s, c in spec.objects)
    if cat == "position":
        (sa, ca), (sb, cb) = spec.objects
        first = [o for o in objs if o.shape == sa and o.color == ca]
        second = [o for o in objs if o.shape == sb and o.color == cb]
        return any(_relation_holds(a, b, spec.relation) for a in first for b in second)
    raise GrammarError(f"unknown category {cat!r}")


def _free_cells(taken: set[tuple[int, int]]) -> list[tuple[int, int]]:
    return [(r, c) for r in range(GRID) for c in range(GRID) if (r, c) not in taken]


def _pick_cell(rng: SeededRng, taken: set[tuple[int, int]]) -> tuple[int, int]:
    free = _free_cells(taken)
    cell = free[rng.integers(0, len(free))]
    taken.add(cell)
    return cell


def _distractor_exclusions(spec: PromptSpec) -> set[tuple[str, str]]:
    # only exact-count constraints can be broken by adding an object
    if spec.category == "counting":
        return {spec.objects[0]}
    return set()


def _maybe_add_distractors(spec: PromptSpec, rng: SeededRng,
                           objs: list[SceneObject], taken: set) -> None:
    if rng.random() >= DISTRACTOR_PROB or len(objs) >= MAX_OBJECTS:
        return
    excluded = _distractor_exclusions(spec)
    options = [(s, c) for s in SHAPES for c in COLORS if (s, c) not in excluded]
    shape, color = options[rng.integers(0, len(options))]
    objs.append(SceneObject(shape, color, _pick_cell(rng, taken)))


def _satisfying_scene(spec: PromptSpec, rng: SeededRng) -> SceneGraph:
    objs: list[SceneObject] = []
    taken: set[tuple[int, int]] = set()
    cat = spec.category
    if cat in ("single", "color"):
        shape, color = spec.objects[0]
        objs.append(SceneObject(shape, color, _pick_cell(rng, taken)))
    elif cat == "counting":
        shape, color = spec.objects[0]
        for _ in range(spec.count):
            objs.append(SceneObject(shape, color, _pick_cell(rng, taken)))
    elif cat in ("two", "attribution"):
        for shape, color in spec.objects:
            chosen = color if color is not None else COLORS[rng.integers(0, len(COLORS))]
            objs.append(SceneObject(shape, chosen, _pick_cell(rng, taken)))
    elif cat == "position":
        (sa, ca), (sb, cb) = spec.objects
        cell_b = _pick_cell(rng, taken)
        allowed = [cell for cell in _free_cells(taken)
                   if _relation_holds(SceneObject(sa, ca, cell),
                                      SceneObject(sb, cb, cell_b), spec.relation)]
        if not allowed:  # re-roll b; some corner cells admit no partner
            return _satisfying_scene(spec, rng)
        cell_a = allowed[rng.integers(0, len(allowed))]
        taken.add(cell_a)
        objs.append(SceneObject(sa, ca, cell_a))
        objs.append(SceneObject(sb, cb, cell_b))
    _maybe_add_distractors(spec, rng, objs, taken)
    return SceneGraph(tuple(objs))


def _violating_scene(spec: PromptSpec, rng: SeededRng) -> SceneGraph:
    objs: list[SceneObject] = []
    taken: set[tuple[int, int]] = set()
    cat = spec.category
    if cat in ("single", "color", "attribution", "two"):
        # drop or corrupt one demanded object
        demanded = list(spec.objects)
        victim = rng.integers(0, len(demanded))
        for i, (shape, color) in enumerate(demanded):
            if i == victim:
                mode = rng.integers(0, 2)
                if mode == 0:
                    continue  # omit entirely
                wrong_shapes = [s for s in SHAPES if s != shape]
                wrong = wrong_shapes[rng.integers(0, len(wrong_shapes))]
                chosen = color if color is not None else COLORS[rng.integers(0, 4)]
                if color is not None and rng.random() < 0.5:
                    wrong_colors = [c for c in COLORS if c != color]
                    objs.append(SceneObject(shape, wrong_colors[rng.integers(0, 3)],
                                            _pick_cell(rng, taken)))
                else:
                    objs.append(SceneObject(wrong, chosen, _pick_cell(rng, taken)))
            else:
                chosen = color if color is not None else COLORS[rng.integers(0, 4)]
                objs.append(SceneObject(shape, chosen, _pick_cell(rng, taken)))
    elif cat == "counting":
        shape, color = spec.objects[0]
        wrong_counts = [k for k in range(0, 5) if k != spec.count]
        k = wrong_counts[rng.integers(0, len(wrong_counts))]
        for _ in range(k):
            objs.append(SceneObject(shape, color, _pick_cell(rng, taken)))
    elif cat == "position":
        (sa, ca), (sb, cb) = spec.objects
        cell_b = _pick_cell(rng, taken)
        blocked = [cell for cell in _free_cells(taken)
                   if not _relation_holds(SceneObject(sa, ca, cell),
                                          SceneObject(sb, cb, cell_b), spec.relation)]
        if not blocked:
            return _violating_scene(spec, rng)
        cell_a = blocked[rng.integers(0, len(blocked))]
        taken.add(cell_a)
        objs.append(SceneObject(sa, ca, cell_a))
        objs.append(SceneObject(sb, cb, cell_b))
    _maybe_add_distractors(spec, rng, objs, taken)
    return SceneGraph(tuple(objs))


def sample_scene(spec: PromptSpec, rng: SeededRng, satisfy: bool = True) -> SceneGraph:
    """Scene meeting every constraint of ``spec`` (or violating at least one)."""
    validate_spec(spec)
    for _ in range(64):
        scene = _satisfying_scene(spec, rng) if satisfy else _violating_scene(spec, rng)
        if scene_satisfies(spec, scene) == satisfy:
            return scene
    raise SceneError(f"could not sample a {'satisfying' if satisfy else 'violating'} "
                     f"scene for {spec.text!r}")
