"""
Inference: one visual caption per scene, then one refined caption for each of
the top-K anchors. The visual captioner runs once, outside the per-anchor loop.
"""
from typing import Iterable, List, Optional, Sequence

import torch
from tqdm import tqdm

from common import BOS_ID, EOS_ID, PAD_ID, UNK_ID, unk_token
from common.logger_config import get_logger
from data_prep.scene_io import Scene
from data_prep.vocab import Vocabulary
from graph.anpm import assemble_graph, select_anchors
from graph.schema import AcgSelection, AnchorCentredGraph
from inference.schema import GenerationResult, RefinedCaption
from model.ancm import DecodedToken
from model.captioner import AnchorCaptioner

logger = get_logger(__name__)


def render_ids(ids: Sequence[int], vocab: Vocabulary, max_words: int) -> str:
    words = []
    for i in ids:
        if i == EOS_ID:
            break
        if i in (BOS_ID, PAD_ID):
            continue
        words.append(unk_token if i == UNK_ID else vocab.id_to_word[i])
    return " ".join(words[:max_words])


def render_tokens(
        tokens: Sequence[DecodedToken],
        graph: AnchorCentredGraph,
        texts: Sequence[str],
        vocab: Vocabulary,
        max_words: int,
) -> str:
    """Caption text; copied slots become the OCR token text, UNK stays literal '<unk>'"""
    words = []
    for token in tokens:
        if token.is_copy:
            words.append(texts[graph.token_idxs[token.slot]])
            continue
        if token.vocab_id == EOS_ID:
            break
        if token.vocab_id in (BOS_ID, PAD_ID):
            continue
        words.append(unk_token if token.vocab_id == UNK_ID else vocab.id_to_word[token.vocab_id])
    return " ".join(words[:max_words])


@torch.no_grad()
def generate_for_selections(
        scene: Scene,
        model: AnchorCaptioner,
        selections: Sequence[AcgSelection],
        anchor_scores: Optional[Sequence[float]] = None,
) -> GenerationResult:
    """Refines the scene's visual caption once per given graph selection"""
    model.eval()
    tensors = model.tensors(scene)
    fused = model.encode(tensors)
    max_words = model.config.max_caption_len
    visual = model.ancm.visual_caption(fused)

    refined = []
    for rank, selection in enumerate(selections):
        graph = assemble_graph(fused.T, selection)
        text = model.ancm.text_caption(graph, visual.hidden)
        refined.append(_refined_record(
            graph, text.tokens, tensors.token_texts, model.vocab, max_words,
            anchor_scores[rank] if anchor_scores is not None else 0.0,
        ))
    return GenerationResult(
        id=scene.id,
        visual_caption=render_ids(visual.ids, model.vocab, max_words),
        refined=refined,
    )


def _refined_record(graph, tokens, texts, vocab, max_words, score) -> RefinedCaption:
    return RefinedCaption(
        anchor=texts[graph.anchor_idx],
        anchor_index=graph.anchor_idx,
        graph=[texts[i] for i in graph.member_idxs],
        caption=render_tokens(tokens, graph, texts, vocab, max_words),
        anchor_score=score,
    )


@torch.no_grad()
def generate(scene: Scene, model: AnchorCaptioner, k: int = 1) -> GenerationResult:
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    model.eval()
    tensors = model.tensors(scene)
    fused = model.encode(tensors)
    max_words = model.config.max_caption_len
    visual = model.ancm.visual_caption(fused)
    result = GenerationResult(id=scene.id, visual_caption=render_ids(visual.ids, model.vocab, max_words))

    scores = model.anpm.predict_anchor_scores(fused.T, fused.pad_mask_t)
    if scores is None:
        logger.debug(f"scene {scene.id}: no OCR tokens, visual caption only")
        return result

    values = scores.real_scores()
    for anchor in select_anchors(scores, mode="topk", k=k):
        graph = model.anpm.build_acg(fused.T, fused.pad_mask_t, anchor, tensors.confidence)
        text = model.ancm.text_caption(graph, visual.hidden)
        result.refined.append(
            _refined_record(graph, text.tokens, tensors.token_texts, model.vocab, max_words, values[anchor])
        )
    return result


def generate_all(scenes: Iterable[Scene], model: AnchorCaptioner, k: int = 1) -> List[GenerationResult]:
    scenes = list(scenes)
    return [generate(scene, model, k) for scene in tqdm(scenes, desc="Generating captions", unit="scene")]
