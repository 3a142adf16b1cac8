"""
Anchor Captioning Module.

The visual captioner decodes over [V; caption] with a prefix-LM mask and emits a
rough caption with UNK at text positions. The text captioner decodes over
[G; h; caption], where G is the anchor-centred graph and h the visual
captioner's hidden states, and scores each step as
[vocabulary (f4) ; copy slots (dynamic pointer)].
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch
from torch import Tensor, nn

from common import BOS_ID, EOS_ID, UNK_ID
from common.config import ModelConfig
from data_prep.vocab import EncodedCaption
from graph.schema import AnchorCentredGraph
from model.backbone import LAYER_NORM_EPS, AttentionStack, full_mask, prefix_lm_mask
from model.fusion import FusedFeatures


@dataclass
class DecodedToken:
    """A decoder output: a vocabulary id, or a copy of ACG row `slot`"""
    vocab_id: Optional[int] = None
    slot: Optional[int] = None

    @property
    def is_copy(self) -> bool:
        return self.slot is not None


@dataclass
class VisualOutput:
    hidden: Tensor          # [L, d]
    vocab_logits: Tensor    # [L, |vocab|]
    ids: List[int]


@dataclass
class TextOutput:
    g_hat: Tensor           # [|G|, d]
    step_scores: Tensor     # [L, |vocab| + |G|]
    tokens: List[DecodedToken] = field(default_factory=list)


class DynamicPointer(nn.Module):
    """score_j = (W_g G_j + b_g) . (W_y y + b_y)"""

    def __init__(self, d_model: int):
        super().__init__()
        self.graph_projection = nn.Linear(d_model, d_model)
        self.query_projection = nn.Linear(d_model, d_model)

    def forward(self, g_hat: Tensor, y_hat: Tensor) -> Tensor:
        return torch.matmul(self.query_projection(y_hat), self.graph_projection(g_hat).transpose(-1, -2))


def pointer_scores(g_hat: Tensor, y_c: Tensor, pointer: DynamicPointer) -> Tensor:
    """Copy scores [1 + m] of one decode step"""
    return pointer(g_hat, y_c)


def copy_slot_for(flags: List[int], graph: AnchorCentredGraph) -> Optional[int]:
    slots = [graph.slot_of(i) for i in flags]
    slots = [s for s in slots if s is not None]
    return min(slots) if slots else None


class AnchorCaptioningModule(nn.Module):
    def __init__(self, config: ModelConfig, vocab_size: int):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        d = config.d_model
        self.word_embedding = nn.Embedding(vocab_size, d)
        self.position_embedding = nn.Embedding(config.max_caption_len + 2, d)
        self.embedding_norm = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        # [G rows, h rows, decode rows] of the text captioner input
        self.segment_embedding = nn.Embedding(3, d)
        self.visual_captioner = AttentionStack(config.visual_layers, d, config.n_heads, config.ffn_dim)
        self.text_captioner = AttentionStack(config.text_layers, d, config.n_heads, config.ffn_dim)
        self.classifier = nn.Linear(d, vocab_size)
        self.pointer = DynamicPointer(d)

    @property
    def max_steps(self) -> int:
        # greedy decoding stops after C words unless EOS comes first
        return self.config.max_caption_len

    def embed_inputs(self, ids: List[int], slots: List[Optional[int]], g_hat: Optional[Tensor] = None) -> Tensor:
        """Previous-token embeddings: vocab words from the table, copied tokens reuse their G-hat row"""
        device = self.word_embedding.weight.device
        rows = self.word_embedding(torch.tensor(ids, dtype=torch.long, device=device))
        if g_hat is not None and any(s is not None for s in slots):
            rows = torch.stack([g_hat[s] if s is not None else rows[p] for p, s in enumerate(slots)])
        positions = torch.arange(len(ids), device=device)
        return self.embedding_norm(rows + self.position_embedding(positions))

    # ------------------------------------------------------------------
    # visual captioner
    # ------------------------------------------------------------------

    def _visual_pass(self, fused: FusedFeatures, input_ids: List[int]) -> Tuple[Tensor, Tensor]:
        n_context = fused.V.shape[0]
        decode = self.embed_inputs(input_ids, [None] * len(input_ids))
        sequence = torch.cat([fused.V, decode], dim=0)
        pad_mask = torch.cat([fused.pad_mask_v, fused.pad_mask_v.new_ones(len(input_ids))])
        out = self.visual_captioner(sequence, prefix_lm_mask(n_context, len(input_ids), sequence.device), pad_mask)
        hidden = out[n_context:]
        return hidden, self.classifier(hidden)

    def visual_caption(self, fused: FusedFeatures, teacher: Optional[EncodedCaption] = None) -> VisualOutput:
        """Teacher forcing in one pass when `teacher` is given, else greedy decoding up to C words"""
        if teacher is not None:
            hidden, logits = self._visual_pass(fused, teacher.ids[:-1])
            return VisualOutput(hidden=hidden, vocab_logits=logits, ids=logits.argmax(-1).tolist())

        inputs, ids = [BOS_ID], []
        while True:
            hidden, logits = self._visual_pass(fused, inputs)
            next_id = int(logits[-1].argmax())
            ids.append(next_id)
            if next_id == EOS_ID or len(ids) >= self.max_steps:
                break
            inputs.append(next_id)
        return VisualOutput(hidden=hidden, vocab_logits=logits, ids=ids)

    # ------------------------------------------------------------------
    # text captioner
    # ------------------------------------------------------------------

    def _text_pass(
            self,
            graph: AnchorCentredGraph,
            hidden: Tensor,
            input_ids: List[int],
            input_slots: List[Optional[int]],
    ) -> Tuple[Tensor, Tensor]:
        g_emb = graph.g_emb
        n_graph, n_hidden = g_emb.shape[0], hidden.shape[0]
        n_context = n_graph + n_hidden
        device = g_emb.device
        segments = self.segment_embedding(torch.tensor(
            [0] * n_graph + [1] * n_hidden + [2] * len(input_ids), dtype=torch.long, device=device
        ))
        context = torch.cat([g_emb, hidden], dim=0) + segments[:n_context]
        copied_rows = None
        if any(s is not None for s in input_slots):
            # context rows never attend to decode rows, so this equals the G-hat of the full pass
            copied_rows = self.text_captioner(context, full_mask(n_context, device))[:n_graph]
        decode = self.embed_inputs(input_ids, input_slots, copied_rows) + segments[n_context:]
        sequence = torch.cat([context, decode], dim=0)
        out = self.text_captioner(sequence, prefix_lm_mask(n_context, len(input_ids), device))
        g_hat, y_hat = out[:n_graph], out[n_context:]
        step_scores = torch.cat([self.classifier(y_hat), self.pointer(g_hat, y_hat)], dim=-1)
        return g_hat, step_scores

    def text_caption(
            self,
            graph: AnchorCentredGraph,
            hidden: Tensor,
            teacher: Optional[EncodedCaption] = None,
    ) -> TextOutput:
        if teacher is not None:
            ids = teacher.ids[:-1]
            slots = [copy_slot_for(flags, graph) for flags in teacher.copy_flags[:-1]]
            g_hat, step_scores = self._text_pass(graph, hidden, ids, slots)
            return TextOutput(g_hat=g_hat, step_scores=step_scores,
                              tokens=[self.token_of(int(i)) for i in step_scores.argmax(-1)])

        ids, slots, tokens = [BOS_ID], [None], []
        while True:
            g_hat, step_scores = self._text_pass(graph, hidden, ids, slots)
            token = self.token_of(int(step_scores[-1].argmax()))
            tokens.append(token)
            if token.vocab_id == EOS_ID or len(tokens) >= self.max_steps:
                break
            ids.append(token.vocab_id if not token.is_copy else UNK_ID)
            slots.append(token.slot)
        return TextOutput(g_hat=g_hat, step_scores=step_scores, tokens=tokens)

    def token_of(self, index: int) -> DecodedToken:
        """Maps an argmax index over [vocab ; copy slots] to a token"""
        if index < self.vocab_size:
            return DecodedToken(vocab_id=index)
        return DecodedToken(slot=index - self.vocab_size)

    def text_targets(self, full: EncodedCaption, graph: AnchorCentredGraph, dtype: torch.dtype) -> Tensor:
        """
        Multi-hot [L, |vocab| + |G|] targets for steps predicting full.ids[1:].
        Copy slots of matching graph tokens are positive; the vocabulary id is
        positive too unless it is UNK and a copy slot already covers the word.
        """
        steps = len(full.ids) - 1
        targets = torch.zeros(steps, self.vocab_size + graph.size, dtype=dtype)
        for p in range(steps):
            word_id = full.ids[p + 1]
            slots = [graph.slot_of(i) for i in full.copy_flags[p + 1]]
            slots = [s for s in slots if s is not None]
            for s in slots:
                targets[p, self.vocab_size + s] = 1.0
            if word_id != UNK_ID or not slots:
                targets[p, word_id] = 1.0
        return targets

    def visual_targets(self, masked: EncodedCaption, dtype: torch.dtype) -> Tensor:
        steps = len(masked.ids) - 1
        targets = torch.zeros(steps, self.vocab_size, dtype=dtype)
        targets[torch.arange(steps), torch.tensor(masked.ids[1:], dtype=torch.long)] = 1.0
        return targets
