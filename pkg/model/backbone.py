"""
Differentiable building blocks shared by fusion, AnPM and AnCM.

Sequences are unbatched `[S, d]` tensors. Masks are boolean with True meaning
"visible" (attention) or "real entry" (padding). Masked attention logits get an
additive -1e9 so masked positions carry exactly zero weight.
"""
import math
from typing import Dict, Mapping, Optional

import torch
from torch import Tensor, nn

from common.errors import ContractViolationError, NumericError

MASK_VALUE = -1e9
LAYER_NORM_EPS = 1e-5


def full_mask(size: int, device=None) -> Tensor:
    return torch.ones(size, size, dtype=torch.bool, device=device)


def causal_mask(size: int, device=None) -> Tensor:
    """Lower triangular: position i sees positions j <= i"""
    return torch.tril(full_mask(size, device))


def prefix_lm_mask(n_context: int, n_decode: int, device=None) -> Tensor:
    """
    Context rows see all context rows; decode rows see all context rows and
    decode rows up to themselves. Context never sees decode rows.
    """
    size = n_context + n_decode
    mask = torch.zeros(size, size, dtype=torch.bool, device=device)
    mask[:, :n_context] = True
    mask[n_context:, n_context:] = causal_mask(n_decode, device)
    return mask


def assert_finite(tensor: Tensor, op: str) -> Tensor:
    if not torch.isfinite(tensor).all():
        raise NumericError(op)
    return tensor


class MaskedSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ContractViolationError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.scaling = self.head_dim ** -0.5
        self.query = nn.Linear(d_model, d_model)
        self.key = nn.Linear(d_model, d_model)
        self.value = nn.Linear(d_model, d_model)
        self.output = nn.Linear(d_model, d_model)

    def _split_heads(self, x: Tensor) -> Tensor:
        # [S, d] -> [h, S, d_h]
        return x.view(x.shape[0], self.n_heads, self.head_dim).transpose(0, 1)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        q, k, v = self._split_heads(self.query(x)), self._split_heads(self.key(x)), self._split_heads(self.value(x))
        scores = torch.matmul(q, k.transpose(-1, -2)) * self.scaling
        scores = scores + (~mask).to(scores.dtype) * MASK_VALUE
        weights = torch.softmax(scores, dim=-1)
        out = torch.matmul(weights, v).transpose(0, 1).reshape(x.shape[0], -1)
        return self.output(out)


class AttentionLayer(nn.Module):
    """Post-norm encoder layer: attention and feed-forward, each with residual + LayerNorm"""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int):
        super().__init__()
        self.attention = MaskedSelfAttention(d_model, n_heads)
        self.attention_norm = nn.LayerNorm(d_model, eps=LAYER_NORM_EPS)
        self.feed_forward = nn.Sequential(nn.Linear(d_model, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, d_model))
        self.feed_forward_norm = nn.LayerNorm(d_model, eps=LAYER_NORM_EPS)

    def forward(self, x: Tensor, mask: Tensor, pad_mask: Tensor) -> Tensor:
        x = self.attention_norm(x + self.attention(x, mask))
        x = self.feed_forward_norm(x + self.feed_forward(x))
        # pad rows stay zero so they never leak into later consumers
        return torch.where(pad_mask.unsqueeze(-1), x, torch.zeros_like(x))


class AttentionStack(nn.Module):
    def __init__(self, n_layers: int, d_model: int, n_heads: int, ffn_dim: int):
        super().__init__()
        self.n_layers = n_layers
        self.d_model = d_model
        self.n_heads = n_heads
        self.layers = nn.ModuleList(AttentionLayer(d_model, n_heads, ffn_dim) for _ in range(n_layers))

    def forward(self, inputs: Tensor, attn_mask: Optional[Tensor] = None, pad_mask: Optional[Tensor] = None) -> Tensor:
        if inputs.dim() != 2 or inputs.shape[1] != self.d_model:
            raise ContractViolationError(f"expected inputs [S, {self.d_model}], got {list(inputs.shape)}")
        size = inputs.shape[0]
        if attn_mask is None:
            attn_mask = full_mask(size, inputs.device)
        if pad_mask is None:
            pad_mask = torch.ones(size, dtype=torch.bool, device=inputs.device)
        if attn_mask.shape != (size, size):
            raise ContractViolationError(f"attn_mask shape {list(attn_mask.shape)} does not match S={size}")
        if pad_mask.shape != (size,):
            raise ContractViolationError(f"pad_mask shape {list(pad_mask.shape)} does not match S={size}")

        mask = attn_mask & pad_mask.unsqueeze(0)
        x = inputs
        for layer in self.layers:
            x = layer(x, mask, pad_mask)
        return x


def attention_forward(stack: AttentionStack, inputs: Tensor, attn_mask: Tensor, pad_mask: Tensor) -> Tensor:
    return stack(inputs, attn_mask, pad_mask)


class RecurrentCell(nn.Module):
    """Gated recurrent cell (update/reset gates) with hidden size equal to the model dim"""

    def __init__(self, d_model: int):
        super().__init__()
        self.d_model = d_model
        self.cell = nn.GRUCell(d_model, d_model)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        return self.cell(x.unsqueeze(0), h.unsqueeze(0)).squeeze(0)


def recurrent_scan(cell: RecurrentCell, inputs: Tensor, h0: Tensor) -> Tensor:
    """Runs the cell over rows of `inputs`; row s depends on rows <= s and h0 only"""
    outputs = []
    h = h0
    for s in range(inputs.shape[0]):
        h = cell(inputs[s], h)
        outputs.append(h)
    if not outputs:
        return inputs.new_zeros(0, cell.d_model)
    return torch.stack(outputs)


def masked_softmax(logits: Tensor, mask: Tensor) -> Tensor:
    """Softmax over entries where `mask` is True; masked entries are exactly 0"""
    scores = torch.where(mask, logits, torch.full_like(logits, -math.inf))
    return torch.where(mask, torch.softmax(scores, dim=-1), torch.zeros_like(logits))


def grad(loss: Tensor, params: Mapping[str, Tensor], retain_graph: bool = False) -> Dict[str, Tensor]:
    """
    Reverse-mode gradients of a scalar loss, keyed like `params`. Parameters the
    loss does not depend on get zero gradients. Raises NumericError naming the
    first non-finite entry.
    """
    if loss.numel() != 1:
        raise ContractViolationError(f"loss must be a scalar, got shape {list(loss.shape)}")
    assert_finite(loss, "loss")
    names = list(params)
    if not loss.requires_grad:
        return {name: torch.zeros_like(params[name]) for name in names}

    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True, retain_graph=retain_graph)
    result = {}
    for name, g in zip(names, grads):
        g = torch.zeros_like(params[name]) if g is None else g
        assert_finite(g, f"grad[{name}]")
        result[name] = g
    return result


