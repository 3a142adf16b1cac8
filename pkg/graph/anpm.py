"""
Anchor Proposal Module: anchor scoring (phi), anchor selection and anchor-centred
graph construction with one of three pluggable graph builders.
"""
from typing import List, Literal, Optional, Sequence

import torch
from torch import Tensor, nn

from common.config import ModelConfig
from common.errors import ConfigError
from common.logger_config import get_logger
from graph.schema import AcgSelection, AnchorCentredGraph, AnchorScores
from model.backbone import AttentionStack, RecurrentCell, masked_softmax, recurrent_scan

logger = get_logger(__name__)


def confidence_order(confidence: Tensor, pad_mask: Tensor) -> List[int]:
    """Real token indices by confidence descending, ties to the lower index"""
    real = [i for i in range(pad_mask.shape[0]) if bool(pad_mask[i])]
    return sorted(real, key=lambda i: (-float(confidence[i]), i))


class SequenceGraphBuilder(nn.Module):
    """Recurrent scan over tokens in confidence order, seeded with the anchor embedding"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.rnn = RecurrentCell(config.d_model)
        self.score = nn.Linear(config.d_model, 1)

    def forward(self, T: Tensor, pad_mask: Tensor, anchor_idx: int, confidence: Tensor) -> Tensor:
        order = confidence_order(confidence, pad_mask)
        logits = T.new_zeros(T.shape[0])
        if not order:
            return logits
        index = torch.tensor(order, dtype=torch.long, device=T.device)
        t_graph = recurrent_scan(self.rnn, T[index], T[anchor_idx])
        return logits.index_copy(0, index, self.score(t_graph).squeeze(-1))


class IndependentGraphBuilder(nn.Module):
    """Affine score on [T_i ; T_anchor] for each token separately"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.score = nn.Linear(2 * config.d_model, 1)

    def forward(self, T: Tensor, pad_mask: Tensor, anchor_idx: int, confidence: Tensor) -> Tensor:
        pairs = torch.cat([T, T[anchor_idx].expand_as(T)], dim=-1)
        logits = self.score(pairs).squeeze(-1)
        return torch.where(pad_mask, logits, torch.zeros_like(logits))


class MultipleGraphBuilder(nn.Module):
    """Self-attention over [anchor; T] so every token score sees the whole set"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.anchor_marker = nn.Parameter(torch.zeros(config.d_model))
        self.stack = AttentionStack(config.graph_layers, config.d_model, config.n_heads, config.ffn_dim)
        self.score = nn.Linear(config.d_model, 1)

    def forward(self, T: Tensor, pad_mask: Tensor, anchor_idx: int, confidence: Tensor) -> Tensor:
        sequence = torch.cat([(T[anchor_idx] + self.anchor_marker).unsqueeze(0), T], dim=0)
        mask = torch.cat([pad_mask.new_ones(1), pad_mask])
        out = self.stack(sequence, pad_mask=mask)[1:]
        logits = self.score(out).squeeze(-1)
        return torch.where(pad_mask, logits, torch.zeros_like(logits))


graph_builders = {
    "sequence": SequenceGraphBuilder,
    "independent": IndependentGraphBuilder,
    "multiple": MultipleGraphBuilder,
}


def make_graph_builder(config: ModelConfig) -> nn.Module:
    if config.strategy not in graph_builders:
        raise ConfigError(f"unknown graph strategy {config.strategy!r}")
    return graph_builders[config.strategy](config)


def select_anchors(scores: AnchorScores, mode: Literal["train", "topk"] = "train", k: int = 1) -> List[int]:
    """train: [argmax]; topk: K best real tokens by score descending, ties to the lower index"""
    values = scores.real_scores()
    ranked = sorted(values, key=lambda i: (-values[i], i))
    if mode == "train":
        return ranked[:1]
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    return ranked[:k]


def assemble_graph(T: Tensor, selection: AcgSelection) -> AnchorCentredGraph:
    index = torch.tensor([selection.anchor_idx] + list(selection.member_idxs), dtype=torch.long, device=T.device)
    return AnchorCentredGraph(
        anchor_idx=selection.anchor_idx,
        member_idxs=list(selection.member_idxs),
        g_emb=T[index],
    )


class AnchorProposalModule(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.anchor_predictor = nn.Linear(config.d_model, 1)
        self.graph_builder = make_graph_builder(config)

    def predict_anchor_scores(self, T: Tensor, pad_mask: Tensor) -> Optional[AnchorScores]:
        """None when the scene has no real OCR token (skip anchoring)"""
        if not bool(pad_mask.any()):
            return None
        logits = self.anchor_predictor(T).squeeze(-1)
        return AnchorScores(s_anchor=masked_softmax(logits, pad_mask), logits=logits, pad_mask=pad_mask)

    def graph_logits(self, T: Tensor, pad_mask: Tensor, anchor_idx: int, confidence: Tensor) -> Tensor:
        return self.graph_builder(T, pad_mask, anchor_idx, confidence)

    def build_acg(
            self,
            T: Tensor,
            pad_mask: Tensor,
            anchor_idx: int,
            confidence: Tensor,
            threshold: Optional[float] = None,
    ) -> AnchorCentredGraph:
        """Members are the other real tokens whose graph score exceeds the threshold"""
        if not (0 <= anchor_idx < T.shape[0]) or not bool(pad_mask[anchor_idx]):
            raise ValueError(f"anchor index {anchor_idx} does not point at a real token")
        threshold = self.config.threshold if threshold is None else threshold
        logits = self.graph_logits(T, pad_mask, anchor_idx, confidence)
        s_graph = torch.where(pad_mask, torch.sigmoid(logits), torch.zeros_like(logits))
        members = [
            i for i in range(T.shape[0])
            if i != anchor_idx and bool(pad_mask[i]) and float(s_graph[i]) > threshold
        ]
        graph = assemble_graph(T, AcgSelection(anchor_idx=anchor_idx, member_idxs=members))
        graph.s_graph = s_graph
        graph.graph_logits = logits
        return graph


def graph_from_scores(s_graph: Sequence[float], anchor_idx: int, threshold: float = 0.5) -> List[int]:
    """Member indices for precomputed graph scores"""
    return [i for i, s in enumerate(s_graph) if i != anchor_idx and s > threshold]
