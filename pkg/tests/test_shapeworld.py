import numpy as np
import pytest

from reflectgen.rng import SeededRng
from reflectgen import shapeworld as sw
from reflectgen.shapeworld.grammar import COUNT_WORDS, RELATION_TEXT, obj_phrase
from reflectgen.shapeworld.judge import Violation
from reflectgen.shapeworld.render import GLYPH_MASKS, glyph_fill
from reflectgen.shapeworld.detect import FILL_BANDS


def spec_single(shape="circle", color="red"):
    return sw.PromptSpec("single", ((shape, color),))


class TestGrammar:
    def test_single_surface_form(self):
        assert spec_single("circle", "red").text == "a red circle"

    def test_counting_surface_form(self):
        spec = sw.PromptSpec("counting", (("square", "blue"),), count=3)
        assert spec.text == "three blue squares"

    def test_count_one_stays_singular(self):
        spec = sw.PromptSpec("counting", (("square", "blue"),), count=1)
        assert spec.text == "one blue square"

    def test_position_surface_form(self):
        spec = sw.PromptSpec("position", (("circle", "red"), ("square", "blue")),
                             relation="left_of")
        assert spec.text == "a red circle left of a blue square"

    def test_text_is_pure_function_of_constraints(self):
        a = sw.PromptSpec("attribution", (("circle", "red"), ("square", "blue")))
        b = sw.PromptSpec("attribution", (("circle", "red"), ("square", "blue")))
        assert a.text == b.text and a.id == b.id

    def test_ids_differ_across_categories(self):
        s = spec_single()
        c = sw.PromptSpec("color", (("circle", "red"),))
        assert s.id != c.id

    def test_invalid_specs_rejected(self):
        with pytest.raises(sw.GrammarError):
            sw.PromptSpec("single", (("hexagon", "red"),))
        with pytest.raises(sw.GrammarError):
            sw.PromptSpec("counting", (("circle", "red"),), count=9)
        with pytest.raises(sw.GrammarError):
            sw.PromptSpec("two", (("circle", None), ("circle", None)))

    def test_position_relations_uniform(self):
        rng = SeededRng(5)
        counts = {r: 0 for r in sw.RELATIONS}
        n = 10_000
        for _ in range(n):
            counts[sw.sample_prompt("position", rng).relation] += 1
        for r in sw.RELATIONS:
            assert abs(counts[r] / n - 0.25) < 0.02

    def test_category_capacities(self):
        expected = {"single": 16, "color": 16, "two": 12, "counting": 64,
                    "attribution": 192, "position": 960}
        for cat, cap in expected.items():
            assert sw.category_capacity(cat) == cap


class TestSceneSampling:
    def test_satisfying_single(self):
        rng = SeededRng(1)
        for _ in range(50):
            scene = sw.sample_scene(spec_single(), rng, satisfy=True)
            assert any(o.shape == "circle" and o.color == "red" for o in scene.objects)

    def test_violating_counting(self):
        spec = sw.PromptSpec("counting", (("circle", "red"),), count=2)
        rng = SeededRng(2)
        for _ in range(50):
            scene = sw.sample_scene(spec, rng, satisfy=False)
            k = sum(1 for o in scene.objects if o.shape == "circle" and o.color == "red")
            assert k != 2

    def test_satisfied_relation_scenes_all_pass_scorer(self):
        rng = SeededRng(3)
        for i in range(1000):
            spec = sw.sample_prompt("position", rng)
            scene = sw.sample_scene(spec, rng, satisfy=True)
            assert sw.score_prompt(spec, sw.render(scene)), f"trial {i}: {spec.text}"

    def test_distinct_cells_enforced(self):
        with pytest.raises(sw.SceneError):
            sw.SceneGraph((sw.SceneObject("circle", "red", (0, 0)),
                           sw.SceneObject("square", "blue", (0, 0))))

    def test_scene_json_roundtrip(self):
        rng = SeededRng(4)
        scene = sw.sample_scene(sw.sample_prompt("attribution", rng), rng)
        assert sw.SceneGraph.from_json(scene.to_json()) == scene


class TestRender:
    def test_empty_scene_constant_background(self):
        img = sw.render(sw.SceneGraph(()))
        assert img.shape == (32, 32, 3)
        assert np.all(img == 0.0)

    def test_red_circle_at_origin_stays_in_first_cell(self):
        img = sw.render(sw.SceneGraph((sw.SceneObject("circle", "red", (0, 0)),)))
        red = img[:, :, 0] > 0
        assert red.any()
        ys, xs = np.nonzero(red)
        assert ys.max() < 8 and xs.max() < 8

    def test_render_deterministic(self):
        rng = SeededRng(6)
        scene = sw.sample_scene(sw.sample_prompt("counting", rng), rng)
        np.testing.assert_array_equal(sw.render(scene), sw.render(scene))

    def test_render_injective_on_random_scenes(self):
        rng = SeededRng(7)
        seen: dict[bytes, sw.SceneGraph] = {}
        for i in range(10_000):
            spec = sw.sample_prompt(sw.CATEGORIES[i % 6], rng)
            scene = sw.sample_scene(spec, rng, satisfy=bool(i % 2))
            key = sw.render(scene).tobytes()
            prev = seen.get(key)
            assert prev is None or prev == scene, "two distinct scenes rendered identically"
            seen[key] = scene

    def test_glyph_fills_inside_detector_bands(self):
        bands = {name: (lo, hi) for name, lo, hi in FILL_BANDS}
        for shape in sw.SHAPES:
            lo, hi = bands[shape]
            fill = glyph_fill(shape)
            assert lo <= fill <= hi, f"{shape} fill {fill} outside [{lo}, {hi}]"
            assert GLYPH_MASKS[shape].sum() >= 8

    def test_ppm_roundtrip(self, tmp_path):
        rng = SeededRng(8)
        img = sw.render(sw.sample_scene(sw.sample_prompt("two", rng), rng))
        path = tmp_path / "scene.ppm"
        sw.write_ppm(path, img)
        np.testing.assert_allclose(sw.read_ppm(path), img, atol=1 / 255)


class TestDetect:
    def test_oracle_equivalence_sampled(self):
        rng = SeededRng(9)
        for i in range(2000):
            spec = sw.sample_prompt(sw.CATEGORIES[i % 6], rng)
            scene = sw.sample_scene(spec, rng, satisfy=bool(i % 2))
            assert sw.detect(sw.render(scene)) == scene, f"trial {i}"

    def test_constant_background_empty_scene(self):
        assert sw.detect(np.zeros((32, 32, 3), dtype=np.float32)).objects == ()

    def test_detects_under_uniform_noise(self):
        scene = sw.SceneGraph((sw.SceneObject("square", "red", (1, 2)),))
        img = sw.render(scene)
        noise_rng = np.random.default_rng(0)
        noisy = np.clip(img + noise_rng.uniform(-0.05, 0.05, img.shape), 0, 1)
        detected = sw.detect(noisy.astype(np.float32))
        assert detected.objects == scene.objects

    def test_small_blobs_discarded(self):
        img = np.zeros((32, 32, 3), dtype=np.float32)
        img[0:2, 0:3, 0] = 1.0  # 6 px, below the minimum area
        assert sw.detect(img).objects == ()


class TestJudge:
    def test_null_feedback_when_satisfied(self):
        rng = SeededRng(10)
        scene = sw.sample_scene(spec_single(), rng, satisfy=True)
        rec = sw.judge_feedback(spec_single(), sw.render(scene))
        assert rec.is_null and rec.text == "This image is correct."

    def test_count_template_text(self):
        spec = sw.PromptSpec("counting", (("square", "blue"),), count=3)
        scene = sw.SceneGraph((sw.SceneObject("square", "blue", (0, 0)),
                               sw.SceneObject("square", "blue", (2, 2)),))
        rec = sw.judge_feedback(spec, sw.render(scene))
        assert rec.text == "There should be 3 blue square in the image, but only 2 exist."

    def test_missing_object_template_text(self):
        scene = sw.SceneGraph((sw.SceneObject("square", "blue", (1, 1)),))
        rec = sw.judge_feedback(spec_single(), sw.render(scene))
        assert rec.text == "There is no red circle in the image."

    def test_swapped_relation_fails(self):
        spec = sw.PromptSpec("position", (("circle", "red"), ("square", "blue")),
                             relation="left_of")
        scene = sw.SceneGraph((sw.SceneObject("circle", "red", (0, 3)),
                               sw.SceneObject("square", "blue", (0, 0))))
        img = sw.render(scene)
        assert not sw.score_prompt(spec, img)
        rec = sw.judge_feedback(spec, img)
        assert rec.violations[0].kind == "position"
        assert rec.text == "The red circle should be left of the blue square."

    def test_color_violation_text(self):
        spec = sw.PromptSpec("color", (("circle", "red"),))
        scene = sw.SceneGraph((sw.SceneObject("circle", "blue", (2, 2)),))
        rec = sw.judge_feedback(spec, sw.render(scene))
        assert rec.text == "The circle should be red, but it is blue."

    def test_judge_scorer_consistency(self):
        rng = SeededRng(11)
        for i in range(2000):
            spec = sw.sample_prompt(sw.CATEGORIES[i % 6], rng)
            scene = sw.sample_scene(spec, rng, satisfy=bool(i % 3))
            img = sw.render(scene)
            assert sw.judge_feedback(spec, img).is_null == sw.score_prompt(spec, img)

    def test_at_most_two_violations(self):
        spec = sw.PromptSpec("position", (("circle", "red"), ("square", "blue")),
                             relation="left_of")
        rec = sw.judge_feedback(spec, np.zeros((32, 32, 3), dtype=np.float32))
        assert len(rec.violations) == 2
        assert all(v.kind == "missing" for v in rec.violations)


class TestVocab:
    def test_empty_string_is_bos_eos(self):
        seq = sw.tokenize("")
        assert seq.length == 2
        assert seq.ids[0] == sw.tokenize("").ids[0]
        assert sw.detokenize(seq) == ""

    def test_roundtrip_all_category_surfaces(self):
        rng = SeededRng(12)
        for cat in sw.CATEGORIES:
            for _ in range(20):
                text = sw.sample_prompt(cat, rng).text
                assert sw.detokenize(sw.tokenize(text)) == text

    def test_oov_rejected_with_word(self):
        with pytest.raises(sw.VocabError) as exc:
            sw.tokenize("a purple circle")
        assert "purple" in str(exc.value)

    def test_every_feedback_template_roundtrips(self):
        # exhaustive over the reachable violation space
        phrases = [obj_phrase(s, c) for s in sw.SHAPES for c in sw.COLORS]
        phrases += list(sw.SHAPES)
        cases = [Violation("missing", p) for p in phrases]
        cases += [Violation("count", p, expected=n, found=k)
                  for p in phrases for n in sw.COUNTS for k in range(7) if k != n]
        cases += [Violation("color", s, expected=c1, found=c2)
                  for s in sw.SHAPES for c1 in sw.COLORS for c2 in sw.COLORS if c1 != c2]
        cases += [Violation("position", a, relation=r, other=b)
                  for a in phrases[:16] for b in phrases[:16] if a != b
                  for r in sw.RELATIONS]
        assert len(cases) > 1000
        for v in cases:
            text = v.render()
            seq = sw.tokenize(text)
            assert seq.length <= sw.MAX_TOKENS
            assert sw.detokenize(seq) == text

    def test_null_feedback_roundtrips(self):
        assert sw.detokenize(sw.tokenize(sw.NULL_FEEDBACK)) == sw.NULL_FEEDBACK
