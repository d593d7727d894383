"""Embedding-space mask sampling and application.

Both strategies share one mechanism: a binary mask selects token slots, and
selected rows are replaced by a learnable mask token plus the positional
encoding of the row, so the decoder always receives a full-length sequence.
Time-frame masks have one slot per frame; body-part masks have five slots
that expand to one token per part per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import InvalidConfigError, InvalidInputError

MASK_KINDS = ("time_frames", "body_parts")


def mask_count(ratio: float, slot_count: int) -> int:
    """Number of masked slots: round(ratio * slot_count), half away from zero.

    The 1e-9 nudge absorbs float representation error in products like
    0.3 * 5, whose exact value 1.5 must round up to 2.
    """
    return int(math.floor(ratio * slot_count + 0.5 + 1e-9))


@dataclass(frozen=True)
class MaskSpec:
    """A realized mask: kind, requested ratio, and binary slot vector."""

    kind: str
    ratio: float
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=np.uint8))


class MaskToken(nn.Module):
    """Learnable embedding substituted at masked positions."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.embedding = nn.Parameter(torch.randn(hidden_dim) * 0.02)


def sample_mask(kind: str, slot_count: int, ratio: float, rng) -> MaskSpec:
    """Uniformly choose exactly mask_count(ratio, slot_count) slots to mask.

    ``rng`` is a seed or a numpy Generator; the draw is deterministic per
    seed and consumes nothing when the count is zero.
    """
    if kind not in MASK_KINDS:
        raise InvalidConfigError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    if not 0.0 <= ratio < 1.0:
        raise InvalidConfigError(f"mask ratio must be in [0, 1), got {ratio}")
    if slot_count < 1:
        raise InvalidConfigError(f"slot_count must be >= 1, got {slot_count}")
    count = mask_count(ratio, slot_count)
    mask = np.zeros(slot_count, dtype=np.uint8)
    if count:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        mask[rng.choice(slot_count, size=count, replace=False)] = 1
    return MaskSpec(kind=kind, ratio=ratio, mask=mask)


def expand_bodypart_mask(part_mask, part_sets: dict[str, list[int]], n_frames: int) -> np.ndarray:
    """Expand 5 part bits to the (n_frames * 5) token mask of the decoder input.

    Part tokens are laid out frame-major with parts fastest, in the canonical
    part order of ``part_sets``; a masked part is masked in every frame.
    ``part_sets`` must be the five-part partition from the skeleton, which
    pins the part ordering the token layout uses.
    """
    part_mask = np.asarray(getattr(part_mask, "mask", part_mask), dtype=np.uint8)
    if part_mask.shape != (len(part_sets),):
        raise InvalidInputError(
            f"part mask has shape {part_mask.shape}, expected ({len(part_sets)},)"
        )
    return np.tile(part_mask, n_frames)


def apply_mask(tokens: torch.Tensor, mask, mask_token, positional: torch.Tensor) -> torch.Tensor:
    """Replace masked rows with (mask token + positional); leave others untouched.

    tokens: (..., N, H) embeddings (positional already added by the caller).
    mask: MaskSpec, or a binary array of shape (N,) or broadcastable to the
    token batch shape (..., N). Unmasked rows are returned bit-identical.
    """
    mask = np.asarray(getattr(mask, "mask", mask))
    mask_t = torch.as_tensor(mask, dtype=torch.bool, device=tokens.device)
    n, hidden = tokens.shape[-2], tokens.shape[-1]
    if mask_t.shape[-1] != n:
        raise InvalidInputError(f"mask covers {mask_t.shape[-1]} slots, tokens have {n}")
    if positional.shape != (n, hidden):
        raise InvalidInputError(
            f"positional shape {tuple(positional.shape)} != ({n}, {hidden})"
        )
    embedding = mask_token.embedding if isinstance(mask_token, MaskToken) else mask_token
    if embedding.shape != (hidden,):
        raise InvalidInputError(f"mask token has dim {tuple(embedding.shape)}, tokens {hidden}")
    replacement = embedding + positional
    return torch.where(mask_t[..., None], replacement, tokens)
