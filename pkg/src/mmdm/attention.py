"""Additively biased scaled dot-product attention and its bias providers.

Two bias placements exist, selected by the masking strategy: the time-frame
blocks add a learnable relative-position bias outside the 1/sqrt(d_k)
scaling, while the body-part blocks add the part adjacency matrix inside it.
With a -inf sentinel both placements zero out the blocked weights exactly.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .errors import DegenerateSoftmaxError, InvalidInputError
from .skeleton import Skeleton, part_index_sets


def biased_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    bias: torch.Tensor | None = None,
    bias_inside_scale: bool = False,
    return_weights: bool = False,
):
    """softmax(QK^T / sqrt(d_k) + B) V, or softmax((QK^T + B) / sqrt(d_k)) V.

    q, k, v: (..., T, d_k) with matching leading dims; bias broadcastable to
    (..., T, T), entries finite or -inf. A bias row that blocks every column
    raises DegenerateSoftmaxError since its softmax would be undefined.
    """
    d_k = q.shape[-1]
    if d_k <= 0:
        raise InvalidInputError("d_k must be positive")
    if q.shape[-2] != v.shape[-2] and k.shape[-2] != v.shape[-2]:
        raise InvalidInputError("key and value token counts disagree")
    scores = q @ k.transpose(-2, -1)
    if bias is not None:
        if torch.isneginf(bias).all(dim=-1).any():
            raise DegenerateSoftmaxError("bias blocks every key for at least one query row")
        if bias_inside_scale:
            scores = (scores + bias) / math.sqrt(d_k)
        else:
            scores = scores / math.sqrt(d_k) + bias
    else:
        scores = scores / math.sqrt(d_k)
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


class RelativePositionBias(nn.Module):
    """Per-head learnable bias table indexed by clipped relative distance.

    B[h, i, j] = table[h, clip(i - j, -(max_length - 1), max_length - 1)],
    so the bias depends on i - j only.
    """

    def __init__(self, max_length: int, heads: int):
        super().__init__()
        if max_length < 1:
            raise InvalidInputError(f"max_length must be >= 1, got {max_length}")
        self.max_length = max_length
        self.table = nn.Parameter(torch.randn(heads, 2 * max_length - 1) * 0.02)

    def forward(self, n: int) -> torch.Tensor:
        idx = torch.arange(n)
        rel = idx[:, None] - idx[None, :]
        rel = torch.clamp(rel, -(self.max_length - 1), self.max_length - 1)
        return self.table[:, rel + self.max_length - 1]


def part_adjacency(skeleton: Skeleton) -> torch.Tensor:
    """(J, J) bias: 0 where two joints share a body part, -inf elsewhere."""
    parts = part_index_sets(skeleton)
    J = skeleton.joint_count
    matrix = np.full((J, J), -np.inf, dtype=np.float32)
    for joints in parts.values():
        for a in joints:
            for b in joints:
                matrix[a, b] = 0.0
    return torch.from_numpy(matrix)


class BiasedSelfAttention(nn.Module):
    """Multi-head self-attention with an additive, optionally shared bias."""

    def __init__(self, hidden_dim: int, heads: int, bias_inside_scale: bool):
        super().__init__()
        if hidden_dim % heads != 0:
            raise InvalidInputError(f"hidden_dim {hidden_dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = hidden_dim // heads
        self.bias_inside_scale = bias_inside_scale
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim)
        self.out = nn.Linear(hidden_dim, hidden_dim)

    def forward(self, x: torch.Tensor, bias: torch.Tensor | None = None, return_weights=False):
        b, n, h = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))  # (b, heads, n, hd)
        if bias is not None and bias.dim() == 2:
            bias = bias[None, None]
        elif bias is not None and bias.dim() == 3:
            bias = bias[None]
        result = biased_attention(
            q, k, v, bias, self.bias_inside_scale, return_weights=return_weights
        )
        out, weights = result if return_weights else (result, None)
        out = self.out(out.transpose(1, 2).reshape(b, n, h))
        return (out, weights) if return_weights else out


class TransformerBlock(nn.Module):
    """Pre-norm block: biased self-attention and an MLP, each with residual."""

    def __init__(self, hidden_dim: int, heads: int, bias_inside_scale: bool, ffn_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_dim)
        self.attn = BiasedSelfAttention(hidden_dim, heads, bias_inside_scale)
        self.norm2 = nn.LayerNorm(hidden_dim)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_dim, ffn_mult * hidden_dim),
            nn.GELU(),
            nn.Linear(ffn_mult * hidden_dim, hidden_dim),
        )

    def forward(self, x: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), bias)
        return x + self.mlp(self.norm2(x))
