import pytest
import torch
from torch import nn

from graph.anpm import (
    AnchorProposalModule,
    IndependentGraphBuilder,
    MultipleGraphBuilder,
    SequenceGraphBuilder,
    confidence_order,
    graph_from_scores,
    select_anchors,
)
from graph.schema import AnchorScores
from tests.factories import tiny_config

STRATEGIES = ["sequence", "independent", "multiple"]


def _anpm(strategy="sequence", **overrides):
    torch.manual_seed(0)
    config = tiny_config(strategy=strategy, **overrides)
    return AnchorProposalModule(config).double(), config


def _scores(values, pad=None):
    s = torch.tensor(values, dtype=torch.float64)
    pad = torch.ones(len(values), dtype=torch.bool) if pad is None else torch.tensor(pad)
    return AnchorScores(s_anchor=s, logits=s.log(), pad_mask=pad)


class FixedScores(nn.Module):
    def __init__(self, probabilities):
        super().__init__()
        self.logits = torch.logit(torch.tensor(probabilities, dtype=torch.float64))

    def forward(self, T, pad_mask, anchor_idx, confidence):
        return self.logits


def test_uniform_logits_give_uniform_scores():
    anpm, config = _anpm(max_tokens=4)
    with torch.no_grad():
        anpm.anchor_predictor.weight.zero_()
        anpm.anchor_predictor.bias.zero_()
    T = torch.randn(4, config.d_model, dtype=torch.float64)
    scores = anpm.predict_anchor_scores(T, torch.ones(4, dtype=torch.bool))
    assert torch.allclose(scores.s_anchor, torch.full((4,), 0.25, dtype=torch.float64))


def test_padded_positions_score_zero():
    anpm, config = _anpm()
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    scores = anpm.predict_anchor_scores(T, torch.tensor([True, True, False]))
    assert scores.s_anchor[2] == 0.0
    assert torch.isclose(scores.s_anchor[:2].sum(), torch.tensor(1.0, dtype=torch.float64))
    assert len(scores.real_scores()) == 2


def test_dominant_logit_takes_all_the_mass():
    anpm, config = _anpm()
    with torch.no_grad():
        anpm.anchor_predictor.weight.zero_()
        anpm.anchor_predictor.bias.zero_()
    T = torch.zeros(3, config.d_model, dtype=torch.float64)
    T[1, 0] = 1.0
    with torch.no_grad():
        anpm.anchor_predictor.weight[0, 0] = 1000.0
    scores = anpm.predict_anchor_scores(T, torch.ones(3, dtype=torch.bool))
    assert torch.isclose(scores.s_anchor[1], torch.tensor(1.0, dtype=torch.float64))


def test_scene_without_tokens_is_skipped():
    anpm, config = _anpm()
    T = torch.zeros(3, config.d_model, dtype=torch.float64)
    assert anpm.predict_anchor_scores(T, torch.zeros(3, dtype=torch.bool)) is None


def test_select_anchors_examples():
    scores = _scores([0.1, 0.7, 0.2])
    assert select_anchors(scores, "train") == [1]
    assert select_anchors(scores, "topk", k=2) == [1, 2]
    assert select_anchors(scores, "topk", k=10) == [1, 2, 0]


def test_ties_go_to_the_lower_index():
    assert select_anchors(_scores([0.5, 0.5]), "topk", k=2) == [0, 1]
    assert select_anchors(_scores([0.25, 0.5, 0.5, 0.0]), "train") == [1]


def test_topk_ignores_padded_tokens():
    assert select_anchors(_scores([0.6, 0.4, 0.0], pad=[True, True, False]), "topk", k=3) == [0, 1]


def test_topk_requires_positive_k():
    with pytest.raises(ValueError):
        select_anchors(_scores([0.5, 0.5]), "topk", k=0)


def test_argmax_is_invariant_to_monotone_logit_transforms():
    anpm, config = _anpm()
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    pad = torch.ones(3, dtype=torch.bool)
    base = anpm.predict_anchor_scores(T, pad)
    with torch.no_grad():
        anpm.anchor_predictor.weight.mul_(3.0)
        anpm.anchor_predictor.bias.mul_(3.0).add_(2.0)
    assert select_anchors(anpm.predict_anchor_scores(T, pad)) == select_anchors(base)


def test_threshold_rule_on_precomputed_scores():
    assert graph_from_scores([0.9, 0.4, 0.6], anchor_idx=0) == [2]
    assert graph_from_scores([0.9, 0.4, 0.3], anchor_idx=0) == []


def test_build_acg_keeps_members_above_threshold():
    anpm, config = _anpm()
    anpm.graph_builder = FixedScores([0.9, 0.4, 0.6])
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    graph = anpm.build_acg(T, torch.ones(3, dtype=torch.bool), 0, torch.ones(3, dtype=torch.float64))
    assert graph.member_idxs == [2]
    assert graph.g_emb.shape == (2, config.d_model)
    assert torch.equal(graph.g_emb[0], T[0])
    assert torch.equal(graph.g_emb[1], T[2])


def test_low_scores_leave_the_anchor_alone():
    anpm, config = _anpm()
    anpm.graph_builder = FixedScores([0.3, 0.2, 0.1])
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    graph = anpm.build_acg(T, torch.ones(3, dtype=torch.bool), 1, torch.ones(3, dtype=torch.float64))
    assert graph.member_idxs == [] and graph.size == 1
    assert graph.token_idxs == [1]


def test_anchor_must_be_a_real_token():
    anpm, config = _anpm()
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    with pytest.raises(ValueError):
        anpm.build_acg(T, torch.tensor([True, True, False]), 2, torch.ones(3, dtype=torch.float64))


@pytest.mark.parametrize("strategy,builder", [
    ("sequence", SequenceGraphBuilder),
    ("independent", IndependentGraphBuilder),
    ("multiple", MultipleGraphBuilder),
])
def test_strategies_are_pluggable(strategy, builder):
    anpm, config = _anpm(strategy)
    assert isinstance(anpm.graph_builder, builder)
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    pad = torch.tensor([True, True, False])
    graph = anpm.build_acg(T, pad, 0, torch.tensor([0.9, 0.8, 0.0], dtype=torch.float64))
    assert set(graph.member_idxs) <= {1}
    assert graph.s_graph[2] == 0.0
    assert ((graph.s_graph >= 0) & (graph.s_graph <= 1)).all()


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_graph_ignores_padded_rows(strategy):
    anpm, config = _anpm(strategy)
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    pad = torch.tensor([True, True, False])
    confidence = torch.tensor([0.7, 0.9, 0.0], dtype=torch.float64)
    base = anpm.build_acg(T, pad, 1, confidence)
    T[2] = 25.0
    perturbed = anpm.build_acg(T, pad, 1, confidence)
    assert perturbed.member_idxs == base.member_idxs
    assert torch.allclose(perturbed.s_graph, base.s_graph, rtol=0.0, atol=1e-12)


def test_confidence_order_breaks_ties_by_index():
    confidence = torch.tensor([0.5, 0.9, 0.5, 0.2], dtype=torch.float64)
    pad = torch.tensor([True, True, True, False])
    assert confidence_order(confidence, pad) == [1, 0, 2]


def test_sequence_builder_follows_confidence_not_position():
    anpm, config = _anpm("sequence")
    T = torch.randn(3, config.d_model, dtype=torch.float64)
    pad = torch.ones(3, dtype=torch.bool)
    confidence = torch.tensor([0.9, 0.5, 0.7], dtype=torch.float64)
    base = anpm.graph_logits(T, pad, 0, confidence)
    swapped = anpm.graph_logits(T[[0, 2, 1]], pad, 0, confidence[[0, 2, 1]])
    assert torch.allclose(swapped, base[[0, 2, 1]], rtol=0.0, atol=1e-12)


def test_padding_anywhere_in_the_mask_is_skipped():
    scores = _scores([0.0, 0.3, 0.7], pad=[False, True, True])
    assert scores.real_scores() == {1: pytest.approx(0.3), 2: pytest.approx(0.7)}
    assert select_anchors(scores, "topk", k=2) == [2, 1]
    assert select_anchors(scores, "train") == [2]


def test_real_scores_of_a_graph_connected_tensor():
    anpm, config = _anpm()
    T = torch.randn(2, config.d_model, dtype=torch.float64, requires_grad=True)
    scores = anpm.predict_anchor_scores(T, torch.tensor([True, True]))
    assert scores.s_anchor.requires_grad
    assert sum(scores.real_scores().values()) == pytest.approx(1.0)
