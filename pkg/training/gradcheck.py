"""
Central finite-difference check of the analytic gradients of the total loss on
one tiny synthetic scene in float64.
"""
import math
from typing import Dict, List, Optional

import numpy as np
import torch
from pydantic import BaseModel, Field

from common.config import PRESETS, ModelConfig, SynthConfig
from common.helpers import seed_everything
from common.logger_config import get_logger
from data_prep.synthetic import generate_synthetic
from data_prep.vocab import build_vocab
from model.backbone import grad
from model.captioner import AnchorCaptioner, parameter_groups
from model.losses import LossWeights
from training.steps import prepare_examples, scene_losses

logger = get_logger(__name__)

FD_STEP = 1e-5
TOLERANCE = 1e-3


class GradCheckReport(BaseModel):
    max_rel_error: float
    n_coordinates: int
    group_errors: Dict[str, float] = Field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def tiny_config(strategy: str = "sequence") -> ModelConfig:
    return ModelConfig.model_validate({**PRESETS["tiny"], "strategy": strategy, "precision": "float64"})


def gradient_check(
        seed: int = 0,
        samples: int = 200,
        config: Optional[ModelConfig] = None,
        step: float = FD_STEP,
) -> GradCheckReport:
    """
    Compares backprop against central differences on `samples` coordinates
    drawn evenly from every parameter group. Relative error is
    |analytic - numeric| / max(1, |numeric|).
    """
    config = config or tiny_config()
    seed_everything(seed)
    synth = SynthConfig(
        n_scenes=1, objects_per_scene=config.max_objects, tokens_per_scene=config.max_tokens,
        refs_per_scene=3, d_app=config.d_app, d_ft=config.d_ft, d_phoc=config.d_phoc,
        max_objects=config.max_objects, max_tokens=config.max_tokens,
    )
    manifest = generate_synthetic(synth, seed)
    model = AnchorCaptioner(config, build_vocab(manifest.scenes[0].references))
    example = prepare_examples(model, manifest)[0]
    weights = LossWeights()

    def total_loss() -> torch.Tensor:
        return scene_losses(model, example, 0, weights).total

    rng = np.random.default_rng(seed)
    per_group = math.ceil(samples / len(parameter_groups))
    group_errors, n_coordinates = {}, 0
    for group in parameter_groups:
        params = model.group_parameters(group)
        analytic = grad(total_loss(), params)
        names = list(params)
        sizes = np.array([params[n].numel() for n in names], dtype=float)
        errors: List[float] = []
        for _ in range(per_group):
            name = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
            flat = params[name].data.view(-1)
            index = int(rng.integers(flat.numel()))
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + step
                plus = float(total_loss())
                flat[index] = original - step
                minus = float(total_loss())
                flat[index] = original
            numeric = (plus - minus) / (2 * step)
            a = float(analytic[name].view(-1)[index])
            errors.append(abs(a - numeric) / max(1.0, abs(numeric)))
        group_errors[group] = max(errors)
        n_coordinates += len(errors)
        logger.debug(f"group {group}: max relative error {group_errors[group]:.2e}")

    report = GradCheckReport(max_rel_error=max(group_errors.values()), n_coordinates=n_coordinates,
                             group_errors=group_errors)
    logger.info(f"gradient check over {n_coordinates} coordinates: max relative error {report.max_rel_error:.2e}")
    return report
