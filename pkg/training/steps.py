"""Per-scene forward passes shared by training, evaluation and the gradient check."""
from dataclasses import dataclass
from typing import List, Optional

from data_prep.scene_io import DatasetManifest, Scene
from graph.anpm import assemble_graph, select_anchors
from graph.mining import mine_ground_truth
from graph.schema import AcgSelection, AnchorCentredGraph, GroundTruthLabels
from model.captioner import AnchorCaptioner
from model.fusion import FusedFeatures, SceneTensors
from model.losses import LossBreakdown, LossWeights, compute_losses


@dataclass
class TrainingExample:
    scene: Scene
    tensors: SceneTensors
    gt: GroundTruthLabels


def prepare_examples(model: AnchorCaptioner, manifest: DatasetManifest) -> List[TrainingExample]:
    return [
        TrainingExample(
            scene=scene,
            tensors=model.tensors(scene),
            gt=mine_ground_truth(scene, model.vocab, model.config.max_caption_len),
        )
        for scene in manifest.scenes
    ]


def training_graph(
        model: AnchorCaptioner,
        fused: FusedFeatures,
        example: TrainingExample,
        use_predicted_acg: bool = False,
) -> Optional[AnchorCentredGraph]:
    """
    Graph fed to the text captioner: the mined anchor and graph, or the
    predicted ones when asked (or when the scene has no mined anchor).
    """
    if example.tensors.n_tokens == 0:
        return None
    gt = example.gt
    if not use_predicted_acg and gt.anchor_idx is not None:
        return assemble_graph(fused.T, AcgSelection(anchor_idx=gt.anchor_idx, member_idxs=gt.graph_members))
    scores = model.anpm.predict_anchor_scores(fused.T, fused.pad_mask_t)
    anchor = select_anchors(scores, mode="train")[0]
    return model.anpm.build_acg(fused.T, fused.pad_mask_t, anchor, example.tensors.confidence)


def scene_losses(
        model: AnchorCaptioner,
        example: TrainingExample,
        ref_idx: int,
        weights: LossWeights = LossWeights(),
        anchor_mode: str = "bce",
        use_predicted_acg: bool = False,
) -> LossBreakdown:
    """Teacher-forced forward pass of one scene against reference `ref_idx`"""
    gt = example.gt
    fused = model.encode(example.tensors)
    scores = model.anpm.predict_anchor_scores(fused.T, fused.pad_mask_t)
    graph_logits = None
    if scores is not None and gt.anchor_idx is not None:
        graph_logits = model.anpm.graph_logits(fused.T, fused.pad_mask_t, gt.anchor_idx, example.tensors.confidence)

    masked, full = gt.masked[ref_idx], gt.full[ref_idx]
    visual = model.ancm.visual_caption(fused, teacher=masked)

    step_scores = tcap_targets = None
    graph = training_graph(model, fused, example, use_predicted_acg)
    if graph is not None:
        text = model.ancm.text_caption(graph, visual.hidden, teacher=full)
        step_scores = text.step_scores
        tcap_targets = model.ancm.text_targets(full, graph, model.dtype)

    return compute_losses(
        scores, gt, graph_logits,
        visual.vocab_logits, model.ancm.visual_targets(masked, model.dtype),
        step_scores, tcap_targets,
        weights, anchor_mode,
    )
