"""
The four training losses and their weighted total:

    total = L_anchor + alpha * L_graph + beta * L_vcap + eta * L_tcap

All terms are binary cross-entropy. Caption terms sum over classes per step and
average over steps; anchor and graph terms average over real tokens.
"""
from dataclasses import dataclass
from typing import List, Literal, Optional

import torch
import torch.nn.functional as F
from pydantic import BaseModel
from torch import Tensor

from common.errors import NumericError
from graph.schema import AnchorScores, GroundTruthLabels


class LossWeights(BaseModel):
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 1.0


class LossRecord(BaseModel):
    L_anchor: float
    L_graph: float
    L_vcap: float
    L_tcap: float
    total: float


@dataclass
class LossBreakdown:
    """Per-term losses; a term is None when the scene (or batch) has nothing to supervise"""
    L_anchor: Optional[Tensor] = None
    L_graph: Optional[Tensor] = None
    L_vcap: Optional[Tensor] = None
    L_tcap: Optional[Tensor] = None
    total: Optional[Tensor] = None

    def record(self) -> LossRecord:
        def value(t: Optional[Tensor]) -> float:
            return 0.0 if t is None else float(t.detach())
        return LossRecord(
            L_anchor=value(self.L_anchor), L_graph=value(self.L_graph),
            L_vcap=value(self.L_vcap), L_tcap=value(self.L_tcap), total=value(self.total),
        )


def _checked(value: Tensor, name: str) -> Tensor:
    if not torch.isfinite(value).all():
        raise NumericError(name)
    return value


def anchor_loss(
        scores: AnchorScores,
        anchor_idx: int,
        mode: Literal["bce", "categorical"] = "bce",
) -> Tensor:
    real = scores.pad_mask
    if mode == "categorical":
        log_probs = torch.log_softmax(scores.logits.masked_fill(~real, -1e9), dim=-1)
        return -log_probs[anchor_idx]
    target = torch.zeros_like(scores.s_anchor)
    target[anchor_idx] = 1.0
    return F.binary_cross_entropy(scores.s_anchor[real], target[real])


def graph_loss(graph_logits: Tensor, multi_hot: List[bool], pad_mask: Tensor) -> Tensor:
    target = torch.zeros_like(graph_logits)
    target[:len(multi_hot)] = torch.tensor(multi_hot, dtype=graph_logits.dtype)
    return F.binary_cross_entropy_with_logits(graph_logits[pad_mask], target[pad_mask])


def caption_loss(logits: Tensor, targets: Tensor) -> Tensor:
    """Sum of per-class BCE at each step, averaged over steps"""
    per_step = F.binary_cross_entropy_with_logits(logits, targets, reduction="none").sum(-1)
    return per_step.mean()


def compute_losses(
        anchor_scores: Optional[AnchorScores],
        gt: GroundTruthLabels,
        graph_logits: Optional[Tensor],
        vocab_logits: Tensor,
        vcap_targets: Tensor,
        step_scores: Optional[Tensor],
        tcap_targets: Optional[Tensor],
        weights: LossWeights = LossWeights(),
        anchor_mode: Literal["bce", "categorical"] = "bce",
) -> LossBreakdown:
    """Losses of one scene. Anchor/graph terms are skipped when the scene has no mined anchor."""
    breakdown = LossBreakdown()
    if anchor_scores is not None and gt.anchor_idx is not None:
        breakdown.L_anchor = _checked(anchor_loss(anchor_scores, gt.anchor_idx, anchor_mode), "L_anchor")
        if graph_logits is not None:
            breakdown.L_graph = _checked(
                graph_loss(graph_logits, gt.graph_multi_hot, anchor_scores.pad_mask), "L_graph"
            )
    breakdown.L_vcap = _checked(caption_loss(vocab_logits, vcap_targets), "L_vcap")
    if step_scores is not None and tcap_targets is not None:
        breakdown.L_tcap = _checked(caption_loss(step_scores, tcap_targets), "L_tcap")
    breakdown.total = weighted_total(breakdown, weights)
    return breakdown


def weighted_total(breakdown: LossBreakdown, weights: LossWeights) -> Tensor:
    terms = [
        (1.0, breakdown.L_anchor), (weights.alpha, breakdown.L_graph),
        (weights.beta, breakdown.L_vcap), (weights.eta, breakdown.L_tcap),
    ]
    present = [w * t for w, t in terms if t is not None]
    if not present:
        raise ValueError("no loss term to combine")
    return _checked(torch.stack(present).sum(), "total")


def combine_losses(scene_losses: List[LossBreakdown], weights: LossWeights) -> LossBreakdown:
    """Batch mean of every term over the scenes that have it"""
    def mean_of(name: str) -> Optional[Tensor]:
        values = [getattr(b, name) for b in scene_losses if getattr(b, name) is not None]
        return torch.stack(values).mean() if values else None

    batch = LossBreakdown(
        L_anchor=mean_of("L_anchor"), L_graph=mean_of("L_graph"),
        L_vcap=mean_of("L_vcap"), L_tcap=mean_of("L_tcap"),
    )
    batch.total = weighted_total(batch, weights)
    return batch
