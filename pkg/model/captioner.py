from typing import Dict

import torch
from torch import nn

from common.config import ModelConfig
from common.helpers import torch_dtype
from data_prep.scene_io import Scene
from data_prep.vocab import Vocabulary
from graph.anpm import AnchorProposalModule
from model.ancm import AnchorCaptioningModule
from model.fusion import FusedFeatures, SceneEncoder, SceneTensors, scene_to_tensors

# parameter groups, keyed by the names used in logs and gradient checks
parameter_groups: Dict[str, str] = {
    "f1": "encoder.visual_projection",
    "f2": "encoder.token_projection",
    "theta_a": "encoder.fusion",
    "phi": "anpm.anchor_predictor",
    "graph_builder": "anpm.graph_builder",
    "theta_v": "ancm.visual_captioner",
    "theta_t": "ancm.text_captioner",
    "f4": "ancm.classifier",
    "f_dp": "ancm.pointer",
    "embeddings": "ancm.word_embedding",
}


class AnchorCaptioner(nn.Module):
    """Fusion, AnPM and AnCM with the vocabulary they were built for"""

    def __init__(self, config: ModelConfig, vocab: Vocabulary):
        super().__init__()
        self.config = config
        self.vocab = vocab
        self.encoder = SceneEncoder(config)
        self.anpm = AnchorProposalModule(config)
        self.ancm = AnchorCaptioningModule(config, len(vocab))
        self.to(torch_dtype(config.precision))

    @property
    def dtype(self) -> torch.dtype:
        return self.encoder.dtype

    def tensors(self, scene: Scene) -> SceneTensors:
        return scene_to_tensors(scene, self.config, self.dtype)

    def encode(self, tensors: SceneTensors) -> FusedFeatures:
        return self.encoder(tensors)

    def group_parameters(self, group: str) -> Dict[str, nn.Parameter]:
        prefix = parameter_groups[group]
        return {
            name: p for name, p in self.named_parameters()
            if name == prefix or name.startswith(prefix + ".")
        }
