"""
Ablation harness: captions refined with rule-based graphs against the learned
AnPM on one trained model, and one model trained per graph-construction strategy.
"""
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from tqdm import tqdm

from common.config import TrainConfig
from common.logger_config import get_logger
from data_prep.scene_io import DatasetManifest
from graph.anpm import graph_builders
from graph.rules import anchor_rules, group_rules, rule_based_selection
from inference.generate import generate, generate_all, generate_for_selections
from metrics.report import MetricReport, evaluate_results
from model.captioner import AnchorCaptioner
from training.trainer import train

logger = get_logger(__name__)


def _report_row(report: MetricReport, **labels) -> Dict:
    return {**labels, **report.model_dump(exclude={"per_image"})}


def rule_combinations() -> List[tuple[str, str]]:
    return [(a, g) for a in anchor_rules for g in group_rules] + [("none", "all")]


def run_rule_ablation(
        model: AnchorCaptioner,
        manifest: DatasetManifest,
        k_around: int = 5,
        seed: int = 0,
) -> pd.DataFrame:
    """
    One row per (anchor rule, group rule) plus the learned AnPM. Scenes where a
    rule yields no graph keep only their visual caption.
    """
    rows = []
    for anchor_rule, group_rule in tqdm(rule_combinations(), desc="Rule ablation", unit="rule"):
        results = []
        for scene in manifest.scenes:
            selection = rule_based_selection(scene, anchor_rule, group_rule, k_around, seed) \
                if scene.ocr_tokens else None
            results.append(generate_for_selections(scene, model, [selection] if selection else []))
        rows.append(_report_row(evaluate_results(results, manifest), anchor=anchor_rule, group=group_rule))

    learned = evaluate_results(generate_all(manifest.scenes, model, k=1), manifest)
    rows.append(_report_row(learned, anchor="anpm", group=model.config.strategy))
    return pd.DataFrame(rows)


def compare_strategies(
        dataset: DatasetManifest,
        base_config: TrainConfig,
        out_dir: Optional[str | Path] = None,
) -> pd.DataFrame:
    """Trains one model per graph strategy and reports AnPM quality with caption metrics"""
    rows = []
    for strategy in graph_builders:
        logger.info(f"training with the {strategy} graph builder")
        config = base_config.model_copy(update={"strategy": strategy})
        strategy_dir = Path(out_dir) / strategy if out_dir is not None else None
        model, report = train(dataset, config, strategy_dir)
        results = [generate(scene, model, k=1) for scene in dataset.scenes]
        rows.append(_report_row(
            evaluate_results(results, dataset),
            strategy=strategy,
            anchor_accuracy=report.anchor_accuracy,
            graph_f1=report.graph_f1,
        ))
    return pd.DataFrame(rows)
