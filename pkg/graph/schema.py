from dataclasses import dataclass
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field
from torch import Tensor

from data_prep.vocab import EncodedCaption

GraphStrategy = Literal["sequence", "independent", "multiple"]


@dataclass
class AnchorScores:
    """Softmax over real tokens; padded positions are exactly 0"""
    s_anchor: Tensor   # [M]
    logits: Tensor     # [M]
    pad_mask: Tensor   # [M] bool

    def real_scores(self) -> Dict[int, float]:
        """Score of every real token, keyed by OCR index"""
        values = self.s_anchor.detach()
        return {int(i): float(values[i]) for i in self.pad_mask.nonzero().flatten()}


@dataclass
class AnchorCentredGraph:
    """
    Row 0 of `g_emb` is the anchor; rows 1.. follow `member_idxs`.
    Copy slot k of the text captioner refers to row k.
    """
    anchor_idx: int
    member_idxs: List[int]
    s_graph: Optional[Tensor] = None       # [M], 0 on padded positions
    graph_logits: Optional[Tensor] = None  # [M]
    g_emb: Optional[Tensor] = None         # [1 + |members|, d]

    @property
    def token_idxs(self) -> List[int]:
        return [self.anchor_idx] + list(self.member_idxs)

    @property
    def size(self) -> int:
        return 1 + len(self.member_idxs)

    def slot_of(self, ocr_idx: int) -> Optional[int]:
        try:
            return self.token_idxs.index(ocr_idx)
        except ValueError:
            return None


class AcgSelection(BaseModel):
    """Token indices of a graph, without embeddings"""
    anchor_idx: int
    member_idxs: List[int] = Field(default_factory=list)


class GroundTruthLabels(BaseModel):
    """Mined training targets of one scene"""
    anchor_idx: Optional[int] = None
    graph_multi_hot: List[bool] = Field(default_factory=list)
    support: List[int] = Field(default_factory=list, description="references containing each OCR token")
    masked: List[EncodedCaption] = Field(default_factory=list)
    full: List[EncodedCaption] = Field(default_factory=list)

    @property
    def graph_members(self) -> List[int]:
        return [i for i, on in enumerate(self.graph_multi_hot) if on and i != self.anchor_idx]
