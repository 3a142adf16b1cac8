"""
Rule-based anchor-centred graphs used as ablation baselines.

Anchor rules: `large` (largest bbox area), `centre` (bbox centre nearest the
image centre), `gt` (mined anchor), `none` (no anchor selection: the most
confident token heads a graph of every token). Group rules: `all`, `around`
(k nearest by bbox-centre distance) and `random` (seeded sample of k tokens).
"""
import random
from typing import List, Literal, Optional

from torch import Tensor

from common.errors import SceneValidationError
from data_prep.scene_io import Scene
from graph.anpm import assemble_graph
from graph.mining import count_support, mined_anchor
from graph.schema import AcgSelection, AnchorCentredGraph

AnchorRule = Literal["large", "centre", "gt", "none"]
GroupRule = Literal["all", "around", "random"]

anchor_rules = ["large", "centre", "gt"]
group_rules = ["all", "around", "random"]


def _area(bbox: List[float]) -> float:
    return (bbox[2] - bbox[0]) * (bbox[3] - bbox[1])


def _centre(bbox: List[float]) -> tuple[float, float]:
    return (bbox[0] + bbox[2]) / 2, (bbox[1] + bbox[3]) / 2


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5


def rule_anchor(scene: Scene, anchor_rule: AnchorRule) -> Optional[int]:
    tokens = scene.ocr_tokens
    indices = range(len(tokens))
    if anchor_rule == "large":
        return min(indices, key=lambda i: (-_area(tokens[i].bbox), i))
    if anchor_rule == "centre":
        return min(indices, key=lambda i: (_distance(_centre(tokens[i].bbox), (0.5, 0.5)), i))
    if anchor_rule == "gt":
        return mined_anchor(count_support(scene))
    if anchor_rule == "none":
        return min(indices, key=lambda i: (-tokens[i].confidence, i))
    raise ValueError(f"unknown anchor rule {anchor_rule!r}")


def rule_members(scene: Scene, anchor: int, group_rule: GroupRule, k_around: int, seed: int) -> List[int]:
    others = [i for i in range(len(scene.ocr_tokens)) if i != anchor]
    if group_rule == "all":
        return others
    if group_rule == "around":
        centre = _centre(scene.ocr_tokens[anchor].bbox)
        nearest = sorted(others, key=lambda i: (_distance(_centre(scene.ocr_tokens[i].bbox), centre), i))
        return sorted(nearest[:k_around])
    if group_rule == "random":
        rng = random.Random(f"{seed}:{scene.id}")
        return sorted(rng.sample(others, min(k_around, len(others))))
    raise ValueError(f"unknown group rule {group_rule!r}")


def rule_based_selection(
        scene: Scene,
        anchor_rule: AnchorRule,
        group_rule: GroupRule,
        k_around: int = 5,
        seed: int = 0,
) -> Optional[AcgSelection]:
    """None only for the `gt` rule on a scene whose references mention no OCR token"""
    if not scene.ocr_tokens:
        raise SceneValidationError(scene.id, ["ocr: rule-based graphs need at least one OCR token"])
    if anchor_rule == "none":
        group_rule = "all"
    anchor = rule_anchor(scene, anchor_rule)
    if anchor is None:
        return None
    return AcgSelection(anchor_idx=anchor, member_idxs=rule_members(scene, anchor, group_rule, k_around, seed))


def rule_based_acg(
        scene: Scene,
        anchor_rule: AnchorRule,
        group_rule: GroupRule,
        k_around: int = 5,
        seed: int = 0,
        T: Optional[Tensor] = None,
) -> Optional[AnchorCentredGraph]:
    """Graph chosen by rules; `g_emb` is filled when fused token features `T` are given"""
    selection = rule_based_selection(scene, anchor_rule, group_rule, k_around, seed)
    if selection is None:
        return None
    if T is not None:
        return assemble_graph(T, selection)
    return AnchorCentredGraph(anchor_idx=selection.anchor_idx, member_idxs=selection.member_idxs)
