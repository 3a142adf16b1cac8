import numpy as np
import pytest

from common.errors import SceneValidationError
from data_prep.scene_io import DatasetManifest
from inference.schema import GenerationResult, RefinedCaption
from metrics.report import evaluate_results, modification_rate
from metrics.scores import (
    DocumentFrequency, bleu, cider, cider_similarity, cover_ratio, div_n, self_cider, self_cider_from_kernel,
)
from tests.factories import make_scene, make_token, tiny_config


@pytest.fixture
def df():
    return DocumentFrequency.from_references([
        ["a red stop sign", "a stop sign ahead"],
        ["a blue bus on the road", "a bus with taxi on it"],
    ])


def test_bleu_identity():
    assert bleu("the cat sat on the mat", ["the cat sat on the mat"]) == pytest.approx(1.0)


def test_bleu_clips_repeated_words():
    assert bleu("the the the the", ["the cat sat down"]) == 0.0


def test_bleu_empty_candidate():
    assert bleu("", ["the cat sat down"]) == 0.0


def test_bleu_needs_references():
    with pytest.raises(ValueError):
        bleu("a cat", [])


def test_cider_identity_scores_ten():
    assert cider(["a red stop sign"], [["a red stop sign"]]) == pytest.approx(10.0)


def test_cider_without_shared_ngrams_is_zero():
    assert cider(["blue bus"], [["a red stop sign"]]) == 0.0


def test_cider_ignores_reference_order():
    refs = ["a red stop sign", "a stop sign ahead", "the sign says stop"]
    forward = cider(["a stop sign"], [refs])
    backward = cider(["a stop sign"], [refs[::-1]])
    assert forward == pytest.approx(backward)
    assert forward > 0.0


def test_cider_similarity_is_symmetric(df):
    assert cider_similarity("a stop sign", "a red stop sign", df) == pytest.approx(
        cider_similarity("a red stop sign", "a stop sign", df))


def test_div1_counts_distinct_words():
    assert div_n(["a b", "a b"], 1) == 0.5


def test_div2_counts_distinct_bigrams():
    assert div_n(["a b c", "a b d"], 2) == 0.75


def test_div1_of_identical_single_words():
    assert div_n(["stop"] * 4, 1) == 0.25


def test_div_n_ignores_case_and_order():
    assert div_n(["A b", "a C"], 1) == div_n(["a c", "a b"], 1)


def test_self_cider_identical_set_is_zero(df):
    assert self_cider(["a stop sign"] * 3, df) == pytest.approx(0.0, abs=1e-9)


def test_self_cider_unrelated_set_is_one(df):
    assert self_cider(["stop", "bus", "taxi"], df) == pytest.approx(1.0)


def test_self_cider_half_similar_kernel():
    kernel = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    assert self_cider_from_kernel(kernel) == pytest.approx(-np.log(2 / 3) / np.log(3), abs=1e-6)
    assert self_cider_from_kernel(kernel) == pytest.approx(0.369, abs=1e-3)


def test_self_cider_needs_two_captions(df):
    assert self_cider(["a stop sign"], df) is None


def test_self_cider_ignores_caption_order(df):
    captions = ["a stop sign", "a red bus", "a stop sign ahead"]
    assert self_cider(captions, df) == pytest.approx(self_cider(captions[::-1], df))


@pytest.fixture
def tokens():
    config = tiny_config()
    return [make_token("stop", config), make_token("Ahead", config)]


def test_cover_ratio_half(tokens):
    assert cover_ratio(["a stop sign"], tokens) == 0.5


def test_cover_ratio_none_mentioned(tokens):
    assert cover_ratio(["a red sign"], tokens) == 0.0


def test_cover_ratio_all_mentioned_across_captions(tokens):
    assert cover_ratio(["a STOP sign", "the road ahead"], tokens) == 1.0


def test_cover_ratio_without_tokens_is_undefined():
    assert cover_ratio(["a stop sign"], []) is None


def test_modification_rate():
    assert modification_rate("a sign", "a sign") == 0.0
    assert modification_rate("a sign", "a stop sign") == pytest.approx(2 / 3)
    assert modification_rate("", "") == 0.0


@pytest.fixture
def manifest():
    config = tiny_config()
    return DatasetManifest(scenes=[
        make_scene(config, scene_id="s0"),
        make_scene(config, texts=("taxi",), refs=("a taxi on the road",), scene_id="s1"),
    ])


def _refined(caption, anchor="stop", score=0.9):
    return RefinedCaption(anchor=anchor, anchor_index=0, caption=caption, anchor_score=score)


def test_evaluate_results(manifest):
    results = [
        GenerationResult(id="s0", visual_caption="a <unk> sign",
                         refined=[_refined("a stop sign"), _refined("a sign ahead", "ahead", 0.1)]),
        GenerationResult(id="s1", visual_caption="a car on the road"),
    ]
    report = evaluate_results(results, manifest)
    assert report.n_images == 2
    assert report.per_image[0].cover_ratio == 1.0
    assert report.per_image[1].cover_ratio == 0.0
    assert report.per_image[1].self_cider is None
    assert report.unk_rate == 0.5
    assert report.mean_unk == 0.5
    assert report.modification_rate == pytest.approx(1 / 3)
    assert 0.0 <= report.bleu4 <= 1.0
    assert report.cider > 0.0


def test_evaluate_references_leaves_accuracy_undefined(manifest):
    results = [GenerationResult(id="s0", visual_caption="a sign"), GenerationResult(id="s1", visual_caption="")]
    report = evaluate_results(results, manifest, captions_from="refs")
    assert report.bleu4 is None and report.cider is None
    assert report.per_image[0].cover_ratio == 1.0
    assert report.unk_rate is None


def test_unknown_scene_id_is_rejected(manifest):
    with pytest.raises(SceneValidationError):
        evaluate_results([GenerationResult(id="nope", visual_caption="a sign")], manifest)
