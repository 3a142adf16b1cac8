"""
Visual / OCR-token embeddings (f1, f2) and the joint self-attention fusion.

Scenes are padded to N objects and M tokens. Pad rows are zero vectors and are
masked inside every attention layer. No positional encoding is added: spatial
information enters only through the bbox features.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import torch
from torch import Tensor, nn

from common.config import ModelConfig
from common.errors import SceneValidationError
from data_prep.scene_io import OcrToken, Scene, VisualObject
from model.backbone import LAYER_NORM_EPS, AttentionStack, full_mask


@dataclass
class SceneTensors:
    object_features: Tensor   # [N, d_app + 4]
    object_mask: Tensor       # [N] bool
    token_features: Tensor    # [M, d_app + 4 + d_ft + d_phoc]
    token_mask: Tensor        # [M] bool
    confidence: Tensor        # [M]
    token_texts: List[str]

    @property
    def n_tokens(self) -> int:
        return len(self.token_texts)


@dataclass
class FusedFeatures:
    V: Tensor
    T: Tensor
    pad_mask_v: Tensor
    pad_mask_t: Tensor


def _padded(rows: List[List[float]], length: int, width: int, dtype: torch.dtype) -> Tuple[Tensor, Tensor]:
    features = torch.zeros(length, width, dtype=dtype)
    mask = torch.zeros(length, dtype=torch.bool)
    if rows:
        features[:len(rows)] = torch.tensor(rows, dtype=dtype)
        mask[:len(rows)] = True
    return features, mask


def object_rows(objects: Sequence[VisualObject], config: ModelConfig, owner: str = "?") -> List[List[float]]:
    if len(objects) > config.max_objects:
        raise SceneValidationError(owner, [f"objects: {len(objects)} exceeds cap {config.max_objects}"])
    rows = []
    for i, obj in enumerate(objects):
        if len(obj.appearance) != config.d_app or len(obj.bbox) != 4:
            raise SceneValidationError(owner, [f"objects[{i}]: dimension mismatch with d_app={config.d_app}"])
        rows.append(list(obj.appearance) + list(obj.bbox))
    return rows


def token_rows(tokens: Sequence[OcrToken], config: ModelConfig, owner: str = "?") -> List[List[float]]:
    if len(tokens) > config.max_tokens:
        raise SceneValidationError(owner, [f"ocr: {len(tokens)} exceeds cap {config.max_tokens}"])
    rows = []
    for i, token in enumerate(tokens):
        if (len(token.appearance) != config.d_app or len(token.bbox) != 4
                or len(token.word_emb) != config.d_ft or len(token.char_emb) != config.d_phoc):
            raise SceneValidationError(owner, [f"ocr[{i}]: dimension mismatch with model dims"])
        rows.append(list(token.appearance) + list(token.bbox) + list(token.word_emb) + list(token.char_emb))
    return rows


def scene_to_tensors(scene: Scene, config: ModelConfig, dtype: torch.dtype) -> SceneTensors:
    object_features, object_mask = _padded(
        object_rows(scene.visual_objects, config, scene.id), config.max_objects, config.d_app + 4, dtype
    )
    token_features, token_mask = _padded(
        token_rows(scene.ocr_tokens, config, scene.id), config.max_tokens,
        config.d_app + 4 + config.d_ft + config.d_phoc, dtype,
    )
    confidence = torch.zeros(config.max_tokens, dtype=dtype)
    if scene.ocr_tokens:
        confidence[:len(scene.ocr_tokens)] = torch.tensor([t.confidence for t in scene.ocr_tokens], dtype=dtype)
    return SceneTensors(
        object_features=object_features,
        object_mask=object_mask,
        token_features=token_features,
        token_mask=token_mask,
        confidence=confidence,
        token_texts=[t.text for t in scene.ocr_tokens],
    )


class SceneEncoder(nn.Module):
    """f1, f2 and the fusion stack (theta_a)"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.visual_projection = nn.Linear(config.d_app + 4, d)
        self.visual_norm = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        self.token_projection = nn.Linear(config.d_app + 4 + config.d_ft + config.d_phoc, d)
        self.token_norm = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        self.fusion = AttentionStack(config.fusion_layers, d, config.n_heads, config.ffn_dim)

    @property
    def dtype(self) -> torch.dtype:
        return self.visual_projection.weight.dtype

    def project_visual(self, features: Tensor, mask: Tensor) -> Tensor:
        v_hat = self.visual_norm(self.visual_projection(features))
        return torch.where(mask.unsqueeze(-1), v_hat, torch.zeros_like(v_hat))

    def project_tokens(self, features: Tensor, mask: Tensor) -> Tensor:
        t_hat = self.token_norm(self.token_projection(features))
        return torch.where(mask.unsqueeze(-1), t_hat, torch.zeros_like(t_hat))

    def embed_visual(self, objects: Sequence[VisualObject]) -> Tuple[Tensor, Tensor]:
        """Returns (V_hat [N, d], pad mask [N])"""
        features, mask = _padded(object_rows(objects, self.config), self.config.max_objects,
                                 self.config.d_app + 4, self.dtype)
        return self.project_visual(features, mask), mask

    def embed_tokens(self, tokens: Sequence[OcrToken]) -> Tuple[Tensor, Tensor]:
        """Returns (T_hat [M, d], pad mask [M])"""
        width = self.config.d_app + 4 + self.config.d_ft + self.config.d_phoc
        features, mask = _padded(token_rows(tokens, self.config), self.config.max_tokens, width, self.dtype)
        return self.project_tokens(features, mask), mask

    def fuse(self, v_hat: Tensor, t_hat: Tensor, pad_mask_v: Tensor, pad_mask_t: Tensor) -> FusedFeatures:
        n_objects = v_hat.shape[0]
        joint = torch.cat([v_hat, t_hat], dim=0)
        pad_mask = torch.cat([pad_mask_v, pad_mask_t], dim=0)
        fused = self.fusion(joint, full_mask(joint.shape[0], joint.device), pad_mask)
        return FusedFeatures(V=fused[:n_objects], T=fused[n_objects:], pad_mask_v=pad_mask_v, pad_mask_t=pad_mask_t)

    def forward(self, tensors: SceneTensors) -> FusedFeatures:
        v_hat = self.project_visual(tensors.object_features, tensors.object_mask)
        t_hat = self.project_tokens(tensors.token_features, tensors.token_mask)
        return self.fuse(v_hat, t_hat, tensors.object_mask, tensors.token_mask)
