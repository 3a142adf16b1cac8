from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from common import unk_token
from common.errors import SceneValidationError
from common.logger_config import get_logger
from data_prep.scene_io import DatasetManifest, Scene
from inference.schema import GenerationResult
from metrics.scores import CiderScorer, DocumentFrequency, bleu, cover_ratio, div_n, self_cider

logger = get_logger(__name__)

CaptionSource = Literal["generated", "refs"]


class ImageMetrics(BaseModel):
    id: str
    bleu4: Optional[float] = None
    cider: Optional[float] = None
    div1: float = 0.0
    div2: float = 0.0
    self_cider: Optional[float] = None
    cover_ratio: Optional[float] = None


class MetricReport(BaseModel):
    """
    Accuracy (bleu4, cider) uses each image's top-1 caption; diversity metrics
    pool its K refined captions. Optional means undefined for every image.
    """
    bleu4: Optional[float] = None
    cider: Optional[float] = None
    div1: float = 0.0
    div2: float = 0.0
    self_cider: Optional[float] = None
    cover_ratio: Optional[float] = None
    unk_rate: Optional[float] = Field(None, description="share of visual captions with an <unk>")
    mean_unk: Optional[float] = Field(None, description="mean <unk> count per visual caption")
    modification_rate: Optional[float] = Field(None, description="share of word positions the refinement changed")
    n_images: int = 0
    per_image: List[ImageMetrics] = Field(default_factory=list)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def modification_rate(visual: str, refined: str) -> float:
    """Share of aligned word positions that differ (the longer caption sets the length)"""
    a, b = visual.split(), refined.split()
    length = max(len(a), len(b))
    if length == 0:
        return 0.0
    same = sum(x == y for x, y in zip(a, b))
    return (length - same) / length


def _diversity_set(result: GenerationResult, scene: Scene, captions_from: CaptionSource) -> List[str]:
    if captions_from == "refs":
        return list(scene.references)
    return [r.caption for r in result.refined] or [result.visual_caption]


def evaluate_results(
        results: Sequence[GenerationResult],
        manifest: DatasetManifest,
        captions_from: CaptionSource = "generated",
) -> MetricReport:
    """
    Scores generation results against the dataset references. With
    `captions_from="refs"` the diversity metrics are computed on the
    reference captions pooled the same way, and accuracy is left undefined.
    """
    scenes: Dict[str, Scene] = {s.id: s for s in manifest.scenes}
    missing = [r.id for r in results if r.id not in scenes]
    if missing:
        raise SceneValidationError(missing[0], ["id: not present in the dataset"])

    df = DocumentFrequency.from_references([s.references for s in manifest.scenes])
    per_image: List[ImageMetrics] = []
    cider_scores: List[Optional[float]] = [None] * len(results)
    if captions_from == "generated":
        scorer = CiderScorer()
        scored = [i for i, r in enumerate(results) if scenes[r.id].references]
        for i in scored:
            scorer += (results[i].top_caption, scenes[results[i].id].references)
        for i, score in zip(scored, scorer.compute_score(df)[1]):
            cider_scores[i] = score

    for i, result in enumerate(results):
        scene = scenes[result.id]
        captions = _diversity_set(result, scene, captions_from)
        per_image.append(ImageMetrics(
            id=result.id,
            bleu4=bleu(result.top_caption, scene.references)
            if captions_from == "generated" and scene.references else None,
            cider=cider_scores[i],
            div1=div_n(captions, 1),
            div2=div_n(captions, 2),
            self_cider=self_cider(captions, df),
            cover_ratio=cover_ratio(captions, scene.ocr_tokens),
        ))

    report = MetricReport(
        bleu4=_mean([m.bleu4 for m in per_image]),
        cider=_mean([m.cider for m in per_image]),
        div1=_mean([m.div1 for m in per_image]) or 0.0,
        div2=_mean([m.div2 for m in per_image]) or 0.0,
        self_cider=_mean([m.self_cider for m in per_image]),
        cover_ratio=_mean([m.cover_ratio for m in per_image]),
        n_images=len(per_image),
        per_image=per_image,
    )
    if captions_from == "generated" and results:
        unk_counts = [r.visual_caption.split().count(unk_token) for r in results]
        report.unk_rate = float(np.mean([c > 0 for c in unk_counts]))
        report.mean_unk = float(np.mean(unk_counts))
        report.modification_rate = _mean([
            modification_rate(r.visual_caption, r.refined[0].caption) for r in results if r.refined
        ])
    logger.info(f"evaluated {report.n_images} images: bleu4={report.bleu4} cider={report.cider} "
                f"div1={report.div1:.3f} div2={report.div2:.3f} self_cider={report.self_cider} "
                f"cover_ratio={report.cover_ratio}")
    return report
