from typing import List

from pydantic import BaseModel, Field


class RefinedCaption(BaseModel):
    anchor: str
    anchor_index: int
    graph: List[str] = Field(default_factory=list, description="member token texts, anchor excluded")
    caption: str
    anchor_score: float


class GenerationResult(BaseModel):
    id: str
    visual_caption: str
    refined: List[RefinedCaption] = Field(default_factory=list, description="sorted by anchor score descending")

    @property
    def top_caption(self) -> str:
        """Caption used for accuracy metrics: the best-anchored refinement, else the visual caption"""
        return self.refined[0].caption if self.refined else self.visual_caption
