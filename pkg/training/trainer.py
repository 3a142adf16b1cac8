"""
Training loop: seeded batch sampling, teacher-forced forward passes, the
weighted four-term loss and Adamax updates, with periodic checkpoints that
carry everything needed to resume on the same trajectory.
"""
import random
from pathlib import Path
from typing import List, Optional, Sequence, Set, Tuple

import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from common import checkpoint_file_name, report_file_name
from common.config import ModelConfig, TrainConfig
from common.errors import ConfigError, NumericError
from common.helpers import seed_everything
from common.logger_config import get_logger
from data_prep.normalize_data import write_json
from data_prep.scene_io import DatasetManifest
from data_prep.vocab import build_vocab
from graph.anpm import select_anchors
from model.captioner import AnchorCaptioner
from model.losses import LossRecord, LossWeights, combine_losses
from training.checkpoint import load_checkpoint, save_checkpoint
from training.steps import TrainingExample, prepare_examples, scene_losses, training_graph

logger = get_logger(__name__)

ADAMAX_BETAS = (0.9, 0.999)
ADAMAX_EPS = 1e-8


class TrainReport(BaseModel):
    history: List[LossRecord] = Field(default_factory=list, description="one record per iteration run")
    anchor_accuracy: float = 0.0
    graph_f1: float = 0.0
    caption_token_accuracy: float = 0.0
    iterations: int = 0
    checkpoint_path: Optional[str] = None


def model_config_of(config: TrainConfig) -> ModelConfig:
    return ModelConfig.model_validate(config.model_dump(include=set(ModelConfig.model_fields)))


def make_optimizer(model: torch.nn.Module, learning_rate: float) -> torch.optim.Adamax:
    return torch.optim.Adamax(model.parameters(), lr=learning_rate, betas=ADAMAX_BETAS, eps=ADAMAX_EPS)


def graph_micro_f1(pred_sets: Sequence[Set[int]], gt_sets: Sequence[Set[int]]) -> float:
    """Micro-averaged F1 of predicted vs ground-truth graph memberships"""
    tp = fp = fn = 0
    for pred, gt in zip(pred_sets, gt_sets):
        tp += len(pred & gt)
        fp += len(pred - gt)
        fn += len(gt - pred)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


@torch.no_grad()
def evaluate_anpm(
        model: AnchorCaptioner,
        dataset: DatasetManifest | Sequence[TrainingExample],
) -> Tuple[float, float]:
    """
    Anchor accuracy (argmax anchor equals the mined one) and graph micro-F1 at the
    configured threshold. Graphs are built around the predicted anchor and
    compared as token sets, anchor included. Scenes without a mined anchor are skipped.
    """
    model.eval()
    examples = prepare_examples(model, dataset) if isinstance(dataset, DatasetManifest) else dataset
    hits, pred_sets, gt_sets = 0, [], []
    for example in examples:
        gt = example.gt
        if gt.anchor_idx is None or example.tensors.n_tokens == 0:
            continue
        fused = model.encode(example.tensors)
        scores = model.anpm.predict_anchor_scores(fused.T, fused.pad_mask_t)
        anchor = select_anchors(scores, mode="train")[0]
        hits += int(anchor == gt.anchor_idx)
        graph = model.anpm.build_acg(fused.T, fused.pad_mask_t, anchor, example.tensors.confidence)
        pred_sets.append(set(graph.token_idxs))
        gt_sets.append({i for i, on in enumerate(gt.graph_multi_hot) if on})
    if not gt_sets:
        return 0.0, 0.0
    return hits / len(gt_sets), graph_micro_f1(pred_sets, gt_sets)


@torch.no_grad()
def caption_token_accuracy(model: AnchorCaptioner, examples: Sequence[TrainingExample]) -> float:
    """
    Share of teacher-forced decode steps whose argmax is a positive target, over
    every reference. Scenes with OCR tokens are scored on the text captioner,
    the others on the visual captioner.
    """
    model.eval()
    correct = total = 0
    for example in examples:
        fused = model.encode(example.tensors)
        graph = training_graph(model, fused, example)
        for masked, full in zip(example.gt.masked, example.gt.full):
            visual = model.ancm.visual_caption(fused, teacher=masked)
            if graph is None:
                scores = visual.vocab_logits
                targets = model.ancm.visual_targets(masked, model.dtype)
            else:
                scores = model.ancm.text_caption(graph, visual.hidden, teacher=full).step_scores
                targets = model.ancm.text_targets(full, graph, model.dtype)
            picked = targets.gather(1, scores.argmax(-1, keepdim=True))
            correct += int(picked.sum())
            total += targets.shape[0]
    return correct / total if total else 0.0


def _mean_record(records: Sequence[LossRecord]) -> LossRecord:
    fields = LossRecord.model_fields
    return LossRecord(**{name: sum(getattr(r, name) for r in records) / len(records) for name in fields})


def _train_state(iteration: int, rng: random.Random, history: List[LossRecord]) -> dict:
    return {
        "iteration": iteration,
        "python_rng": rng.getstate(),
        "torch_rng": torch.get_rng_state(),
        "history": [r.model_dump() for r in history],
    }


def train(
        dataset: DatasetManifest,
        config: TrainConfig,
        out_dir: Optional[str | Path] = None,
        resume_from: Optional[str | Path] = None,
) -> Tuple[AnchorCaptioner, TrainReport]:
    """
    Trains a captioner on `dataset`. Deterministic given (dataset, config); a run
    resumed from one of its own checkpoints continues the same trajectory.
    Returns the trained model and its report.
    """
    seed_everything(config.seed)
    scenes = [s for s in dataset.scenes if s.references]
    if len(scenes) < len(dataset.scenes):
        logger.warning(f"skipping {len(dataset.scenes) - len(scenes)} scenes without references")
    if not scenes:
        raise ConfigError("training needs at least one scene with references")

    if resume_from is not None:
        model, payload = load_checkpoint(resume_from)
    else:
        vocab = build_vocab([ref for s in scenes for ref in s.references], config.min_freq)
        model = AnchorCaptioner(model_config_of(config), vocab)
        payload = None

    examples = prepare_examples(model, DatasetManifest(scenes=scenes, dims=dataset.dims))
    if all(e.gt.anchor_idx is None for e in examples):
        raise ConfigError("no scene has a minable anchor: no reference mentions an OCR token")
    logger.info(f"training on {len(examples)} scenes, vocabulary of {len(model.vocab)} words, "
                f"{sum(p.numel() for p in model.parameters())} parameters")

    optimizer = make_optimizer(model, config.learning_rate)
    rng = random.Random(config.seed)
    history: List[LossRecord] = []
    start = 0
    if payload is not None:
        state = payload["train_state"] or {}
        if payload["optimizer_state"] is not None:
            optimizer.load_state_dict(payload["optimizer_state"])
        if "python_rng" in state:
            rng.setstate(state["python_rng"])
            torch.set_rng_state(state["torch_rng"])
        history = [LossRecord.model_validate(r) for r in state.get("history", [])]
        start = state.get("iteration", 0)
        logger.info(f"resuming from {resume_from} at iteration {start}")

    out_path = Path(out_dir) if out_dir is not None else None
    weights = LossWeights(alpha=config.alpha, beta=config.beta, eta=config.eta)
    batch_size = min(config.batch_size, len(examples))
    model.train()

    for iteration in tqdm(range(start, config.iterations), desc="Training", unit="it",
                          initial=start, total=config.iterations):
        batch = rng.sample(range(len(examples)), batch_size)
        optimizer.zero_grad()
        try:
            losses = [
                scene_losses(model, examples[i], rng.randrange(len(examples[i].gt.full)), weights,
                             config.anchor_loss, config.use_predicted_acg)
                for i in batch
            ]
            batch_loss = combine_losses(losses, weights)
        except NumericError as e:
            raise NumericError(e.op, iteration) from e
        batch_loss.total.backward()
        optimizer.step()
        history.append(batch_loss.record())

        done = iteration + 1
        if done % config.log_every == 0:
            summary = _mean_record(history[-config.log_every:])
            logger.info(f"iteration {done}: total={summary.total:.4f} anchor={summary.L_anchor:.4f} "
                        f"graph={summary.L_graph:.4f} vcap={summary.L_vcap:.4f} tcap={summary.L_tcap:.4f}")
        if out_path is not None and done % config.checkpoint_every == 0 and done < config.iterations:
            save_checkpoint(out_path / f"checkpoint-{done:06d}.pt", model, optimizer,
                            _train_state(done, rng, history), config.model_dump())

    anchor_accuracy, graph_f1 = evaluate_anpm(model, examples)
    report = TrainReport(
        history=history,
        anchor_accuracy=anchor_accuracy,
        graph_f1=graph_f1,
        caption_token_accuracy=caption_token_accuracy(model, examples),
        iterations=len(history),
    )
    logger.info(f"anchor accuracy {anchor_accuracy:.3f}, graph F1 {graph_f1:.3f}, "
                f"caption token accuracy {report.caption_token_accuracy:.3f}")

    if out_path is not None:
        report.checkpoint_path = str(save_checkpoint(
            out_path / checkpoint_file_name, model, optimizer,
            _train_state(config.iterations, rng, history), config.model_dump(),
        ))
        write_json(report.model_dump(), str(out_path / report_file_name))
    return model, report
