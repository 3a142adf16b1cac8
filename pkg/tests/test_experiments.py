"""Desk-scale training experiments; run with `pytest -m slow`"""
import statistics

import pytest

from common import unk_token
from common.config import SynthConfig, TrainConfig
from data_prep.synthetic import generate_synthetic
from graph.mining import count_support, mined_anchor
from inference.generate import generate, generate_all
from inference.schema import GenerationResult
from metrics.report import evaluate_results
from metrics.scores import DocumentFrequency, cover_ratio, self_cider
from training.trainer import train

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(SynthConfig(n_scenes=32), seed=0)


@pytest.fixture(scope="module")
def trained(corpus):
    config = TrainConfig(iterations=2000, batch_size=8, learning_rate=1e-3, seed=0, log_every=200, ffn_dim=64)
    return train(corpus, config)


def test_overfits_the_training_corpus(trained):
    _, report = trained
    assert report.anchor_accuracy >= 0.95
    assert report.graph_f1 >= 0.9
    assert report.caption_token_accuracy >= 0.9
    totals = [r.total for r in report.history]
    assert statistics.median(totals[100:200]) < statistics.median(totals[:100])


def test_refinement_recovers_ocr_words(trained, corpus):
    model, _ = trained
    results = generate_all(corpus.scenes, model, k=1)
    assert any(unk_token in r.visual_caption.split() for r in results)

    hits = 0
    for scene, result in zip(corpus.scenes, results):
        anchor = mined_anchor(count_support(scene))
        hits += scene.ocr_tokens[anchor].text in result.top_caption.split()
    assert hits >= 0.9 * len(results)

    refined = evaluate_results(results, corpus)
    visual_only = evaluate_results([GenerationResult(id=r.id, visual_caption=r.visual_caption) for r in results],
                                   corpus)
    assert refined.cider > visual_only.cider


def test_refinement_revises_more_than_unknown_words(trained, corpus):
    model, _ = trained
    changed = 0
    for result in generate_all(corpus.scenes, model, k=1):
        visual, refined = result.visual_caption.split(), result.top_caption.split()
        changed += any(v != r and v != unk_token for v, r in zip(visual, refined))
    assert changed > 0


def test_more_anchors_give_more_diverse_captions(trained, corpus):
    model, _ = trained
    df = DocumentFrequency.from_references([s.references for s in corpus.scenes])
    scenes = [s for s in corpus.scenes if len(s.ocr_tokens) >= 5]
    assert scenes

    cover_1, cover_5, diverse = [], [], []
    for scene in scenes:
        top5 = generate(scene, model, k=5)
        captions = [r.caption for r in top5.refined]
        cover_1.append(cover_ratio(captions[:1], scene.ocr_tokens))
        cover_5.append(cover_ratio(captions, scene.ocr_tokens))
        assert self_cider([captions[0]] * 5, df) == pytest.approx(0.0, abs=1e-9)
        diverse.append(self_cider(captions, df))
    assert statistics.mean(cover_5) > statistics.mean(cover_1)
    assert statistics.mean(diverse) > 0.0
