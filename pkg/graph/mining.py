"""
Ground-truth anchor and graph mining from reference captions.

An OCR token's support is the number of references containing it (each
reference counts once). The anchor is the best-supported token with support
>= 1, ties to the lowest OCR index. The graph is the union of tokens that share
at least one reference with the anchor.
"""
from typing import List

from common.errors import SceneValidationError
from common.logger_config import get_logger
from data_prep.normalize_data import contains_phrase, tokenize
from data_prep.scene_io import Scene
from data_prep.vocab import Vocabulary, encode_for_targets, ocr_word_sequences
from graph.schema import GroundTruthLabels

logger = get_logger(__name__)


def mentions(scene: Scene) -> List[List[bool]]:
    """mentions[r][i] is True when reference r contains OCR token i"""
    sequences = ocr_word_sequences(scene.ocr_tokens)
    return [[contains_phrase(tokenize(ref), seq) for seq in sequences] for ref in scene.references]


def count_support(scene: Scene) -> List[int]:
    table = mentions(scene)
    return [sum(row[i] for row in table) for i in range(len(scene.ocr_tokens))]


def mined_anchor(support: List[int]) -> int | None:
    best = None
    for i, count in enumerate(support):
        if count >= 1 and (best is None or count > support[best]):
            best = i
    return best


def mine_ground_truth(scene: Scene, vocab: Vocabulary, max_len: int = 30) -> GroundTruthLabels:
    if not scene.references:
        raise SceneValidationError(scene.id, ["refs: mining needs at least one reference"])

    table = mentions(scene)
    support = [sum(row[i] for row in table) for i in range(len(scene.ocr_tokens))]
    anchor = mined_anchor(support)

    graph = [False] * len(scene.ocr_tokens)
    if anchor is not None:
        for row in table:
            if row[anchor]:
                graph = [g or hit for g, hit in zip(graph, row)]
    else:
        logger.debug(f"scene {scene.id}: no OCR token is described, no anchor")

    masked, full = [], []
    for ref in scene.references:
        m, f = encode_for_targets(ref, scene.ocr_tokens, vocab, max_len)
        masked.append(m)
        full.append(f)

    return GroundTruthLabels(anchor_idx=anchor, graph_multi_hot=graph, support=support, masked=masked, full=full)
