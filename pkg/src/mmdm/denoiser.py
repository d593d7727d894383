"""Clean-sequence denoiser networks for the two masking strategies.

Time-frames: an asymmetric encoder/decoder over per-frame tokens. Frame
embeddings get a learnable global position embedding, masked slots are
substituted in embedding space, the encoder predicts full tokens, and its
predictions replace the mask-token rows before the decoder (which always
attends over all tokens) projects back to motion frames. Both stacks use
relative-position-biased attention.

Body-parts: a spatial encoder restricts joint attention within the five
body parts via a -inf adjacency bias and pools each part into one token per
frame; masking happens after this encoder, on the flattened part-token
sequence the decoder consumes.

Conditioning is one token, the projection of text embedding plus sinusoidal
timestep embedding, prepended to every transformer input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .attention import RelativePositionBias, TransformerBlock, part_adjacency
from .errors import InvalidConfigError, InvalidInputError
from .masking import MaskToken, apply_mask
from .skeleton import PART_NAMES, Skeleton, part_index_sets

STRATEGIES = ("time_frames", "body_parts")


@dataclass(frozen=True)
class ModelConfig:
    """Denoiser architecture knobs.

    Defaults follow the best ablation row (6-layer encoder, 2-layer decoder)
    at a desk-scale hidden width; bpst_layers only applies to the body-parts
    strategy's spatial encoder.
    """

    strategy: str = "time_frames"
    hidden_dim: int = 64
    heads: int = 4
    encoder_layers: int = 6
    decoder_layers: int = 2
    bpst_layers: int = 2
    max_length: int = 64

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfigError(f"unknown strategy {self.strategy!r}")
        if self.hidden_dim < 1 or self.hidden_dim % self.heads != 0:
            raise InvalidConfigError(
                f"hidden_dim {self.hidden_dim} must be a positive multiple of heads {self.heads}"
            )
        if min(self.encoder_layers, self.decoder_layers) < 0 or self.bpst_layers < 1:
            raise InvalidConfigError("layer counts out of range")
        if self.max_length < 2:
            raise InvalidConfigError(f"max_length must be >= 2, got {self.max_length}")


@dataclass(frozen=True)
class ConditionEmbedding:
    """Text-side conditioning vector plus the unconditional-branch flag."""

    vector: torch.Tensor
    is_null: bool


class TextEncoder(nn.Module):
    """Toy trainable caption encoder: token embeddings, mean pool, MLP.

    The vocabulary is fixed at construction; unknown words map to a shared
    OOV index 0.
    """

    def __init__(self, vocabulary: list[str], hidden_dim: int):
        super().__init__()
        self.vocabulary = list(vocabulary)
        self.index = {word: i + 1 for i, word in enumerate(self.vocabulary)}
        self.embedding = nn.Embedding(len(self.vocabulary) + 1, hidden_dim)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def tokenize(self, caption: str) -> list[int]:
        return [self.index.get(word, 0) for word in caption.lower().split()]

    def forward(self, captions: list[str]) -> torch.Tensor:
        pooled = []
        zero = torch.zeros_like(self.embedding.weight[0])
        for caption in captions:
            ids = self.tokenize(caption)
            if ids:
                pooled.append(self.embedding(torch.tensor(ids, dtype=torch.long)).mean(dim=0))
            else:
                pooled.append(zero)
        return self.mlp(torch.stack(pooled))


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    scale = math.log(10000.0) / max(half - 1, 1)
    freqs = torch.exp(torch.arange(half, dtype=torch.float32) * -scale)
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([args.sin(), args.cos()], dim=-1)
    if dim % 2 == 1:
        emb = nn.functional.pad(emb, (0, 1))
    return emb


class ConditionCombiner(nn.Module):
    """Projects (text embedding + timestep embedding) into the condition token.

    The unconditional branch swaps the text embedding for a dedicated
    learned null vector before the projection.
    """

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.null_text = nn.Parameter(torch.randn(hidden_dim) * 0.02)
        self.proj = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def forward(self, text_emb, is_null, t: torch.Tensor) -> torch.Tensor:
        batch = t.shape[0]
        if text_emb is None:
            text = self.null_text.expand(batch, -1)
        else:
            text = text_emb
            if is_null is not None:
                text = torch.where(is_null[:, None], self.null_text, text)
        return self.proj(text + timestep_embedding(t, self.null_text.shape[0]))


class MotionDenoiser(nn.Module):
    """Shared machinery of both strategies: text encoder, condition, mask token."""

    def __init__(self, config: ModelConfig, skeleton: Skeleton, vocabulary: list[str]):
        super().__init__()
        self.config = config
        self.skeleton = skeleton
        self.vocabulary = list(vocabulary)
        self.text_encoder = TextEncoder(self.vocabulary, config.hidden_dim)
        self.condition = ConditionCombiner(config.hidden_dim)
        self.mask_token = MaskToken(config.hidden_dim)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return (self.skeleton.joint_count, self.skeleton.frame_dim)

    def encode_text(self, caption: str) -> ConditionEmbedding:
        """Deterministic caption embedding; blank captions yield the null flag."""
        if not caption.strip():
            return ConditionEmbedding(torch.zeros(self.config.hidden_dim), True)
        with torch.no_grad():
            vector = self.text_encoder([caption])[0]
        return ConditionEmbedding(vector, False)

    def _check_input(self, x_t: torch.Tensor) -> tuple[int, int, int, int]:
        if x_t.dim() != 4:
            raise InvalidInputError(f"expected (B, N, J, D) input, got shape {tuple(x_t.shape)}")
        b, n, j, d = x_t.shape
        if (j, d) != self.frame_shape:
            raise InvalidInputError(
                f"frames (J={j}, D={d}) do not match skeleton {self.frame_shape}"
            )
        if n > self.config.max_length:
            raise InvalidInputError(f"sequence length {n} exceeds max_length {self.config.max_length}")
        return b, n, j, d

    def _prepare_mask(self, mask, batch: int, slots: int) -> np.ndarray | None:
        if mask is None:
            return None
        arr = np.asarray(getattr(mask, "mask", mask), dtype=np.uint8)
        if arr.ndim == 1:
            arr = np.tile(arr, (batch, 1))
        if arr.shape != (batch, slots):
            raise InvalidInputError(
                f"mask shape {arr.shape} does not match (batch={batch}, slots={slots})"
            )
        return arr

    def denoise_fn(self, mask=None):
        """Single-sequence adapter for the sampling loop.

        Returns f(x_t, t, condition) where condition is a ConditionEmbedding
        or None for the unconditional branch.
        """

        def fn(x_t: torch.Tensor, t: int, condition):
            null = condition is None or condition.is_null
            text = None if null else condition.vector[None]
            t_batch = torch.tensor([t], dtype=torch.long)
            with torch.no_grad():
                out = self.forward(x_t[None], t_batch, text, None, mask=mask)
            return out[0]

        return fn

    def batch_denoise_fn(self, captions: list[str], mask=None):
        """Batched adapter: f(x_t, t, conditional) for p_sample_loop_batch."""
        with torch.no_grad():
            text = self.text_encoder(captions)

        def fn(x_t: torch.Tensor, t: int, conditional: bool):
            batch = x_t.shape[0]
            t_batch = torch.full((batch,), t, dtype=torch.long)
            with torch.no_grad():
                if conditional:
                    return self.forward(x_t, t_batch, text, None, mask=mask)
                return self.forward(x_t, t_batch, None, None, mask=mask)

        return fn


class TimeFramesDenoiser(MotionDenoiser):
    """Asymmetric encoder/decoder masking whole frames along the time axis."""

    def __init__(self, config: ModelConfig, skeleton: Skeleton, vocabulary: list[str]):
        super().__init__(config, skeleton, vocabulary)
        j, d = self.frame_shape
        h, heads = config.hidden_dim, config.heads
        bias_span = config.max_length + 1  # condition token extends the sequence
        self.in_proj = nn.Linear(j * d, h)
        self.enc_pos = nn.Parameter(torch.randn(config.max_length, h) * 0.02)
        self.dec_pos = nn.Parameter(torch.randn(config.max_length, h) * 0.02)
        self.encoder_blocks = nn.ModuleList(
            TransformerBlock(h, heads, bias_inside_scale=False)
            for _ in range(config.encoder_layers)
        )
        self.encoder_bias = nn.ModuleList(
            RelativePositionBias(bias_span, heads) for _ in range(config.encoder_layers)
        )
        self.decoder_blocks = nn.ModuleList(
            TransformerBlock(h, heads, bias_inside_scale=False)
            for _ in range(config.decoder_layers)
        )
        self.decoder_bias = nn.ModuleList(
            RelativePositionBias(bias_span, heads) for _ in range(config.decoder_layers)
        )
        self.out_proj = nn.Linear(h, j * d)

    def forward(self, x_t, t, text_emb=None, is_null=None, mask=None, return_stages=False):
        b, n, j, d = self._check_input(x_t)
        cond = self.condition(text_emb, is_null, t)
        tokens = self.in_proj(x_t.reshape(b, n, j * d)) + self.enc_pos[:n]

        stages = {"tokens": tokens}
        if mask is not None:
            mask_arr = self._prepare_mask(mask, b, n)
            masked = apply_mask(tokens, mask_arr, self.mask_token, self.enc_pos[:n])
            h = torch.cat([cond[:, None], masked], dim=1)
            for block, bias in zip(self.encoder_blocks, self.encoder_bias):
                h = block(h, bias(n + 1))
            encoder_out = h[:, 1:]
            mask_bool = torch.as_tensor(mask_arr, dtype=torch.bool)[..., None]
            decoder_tokens = torch.where(mask_bool, encoder_out, masked)
            stages.update(masked=masked, encoder_out=encoder_out)
        else:
            decoder_tokens = tokens
        stages["decoder_tokens"] = decoder_tokens

        h = torch.cat([cond[:, None], decoder_tokens + self.dec_pos[:n]], dim=1)
        for block, bias in zip(self.decoder_blocks, self.decoder_bias):
            h = block(h, bias(n + 1))
        out = self.out_proj(h[:, 1:]).reshape(b, n, j, d)
        return (out, stages) if return_stages else out


class BodyPartsDenoiser(MotionDenoiser):
    """Spatial part encoder with adjacency-restricted attention, masked after
    encoding, decoded from the flattened per-frame part-token sequence."""

    def __init__(self, config: ModelConfig, skeleton: Skeleton, vocabulary: list[str]):
        super().__init__(config, skeleton, vocabulary)
        j, d = self.frame_shape
        h, heads = config.hidden_dim, config.heads
        parts = part_index_sets(skeleton)
        self.part_joints = [parts[name] for name in PART_NAMES]
        self.register_buffer("adjacency", part_adjacency(skeleton))
        self.joint_proj = nn.Linear(d, h)
        self.bpst_blocks = nn.ModuleList(
            TransformerBlock(h, heads, bias_inside_scale=True)
            for _ in range(config.bpst_layers)
        )
        self.part_heads = nn.ModuleList(
            nn.Linear(len(joints) * h, h) for joints in self.part_joints
        )
        self.dec_pos = nn.Parameter(torch.randn(config.max_length * len(PART_NAMES), h) * 0.02)
        self.decoder_blocks = nn.ModuleList(
            TransformerBlock(h, heads, bias_inside_scale=True)
            for _ in range(config.decoder_layers)
        )
        self.out_proj = nn.Linear(len(PART_NAMES) * h, j * d)

    def bpst_encode(self, x_t, t, text_emb=None, is_null=None) -> torch.Tensor:
        """(B, N, 5, H) part tokens; cross-part attention weight is exactly zero."""
        b, n, j, _ = self._check_input(x_t)
        cond = self.condition(text_emb, is_null, t)
        tokens = self.joint_proj(x_t) + cond[:, None, None, :]
        h = tokens.reshape(b * n, j, -1)
        for block in self.bpst_blocks:
            h = block(h, self.adjacency)
        h = h.reshape(b, n, j, -1)
        part_tokens = [
            head(h[:, :, joints, :].reshape(b, n, -1))
            for joints, head in zip(self.part_joints, self.part_heads)
        ]
        return torch.stack(part_tokens, dim=2)

    def forward(self, x_t, t, text_emb=None, is_null=None, mask=None, return_stages=False):
        b, n, j, d = self._check_input(x_t)
        n_parts = len(PART_NAMES)
        cond = self.condition(text_emb, is_null, t)
        part_tokens = self.bpst_encode(x_t, t, text_emb, is_null)
        seq = part_tokens.reshape(b, n * n_parts, -1) + self.dec_pos[: n * n_parts]

        stages = {"part_tokens": part_tokens, "sequence": seq}
        if mask is not None:
            part_mask = self._prepare_mask(mask, b, n_parts)
            token_mask = np.tile(part_mask, (1, n))
            seq = apply_mask(seq, token_mask, self.mask_token, self.dec_pos[: n * n_parts])
            stages["masked"] = seq

        h = torch.cat([cond[:, None], seq], dim=1)
        for block in self.decoder_blocks:
            h = block(h)
        out = self.out_proj(h[:, 1:].reshape(b, n, n_parts * self.config.hidden_dim))
        out = out.reshape(b, n, j, d)
        return (out, stages) if return_stages else out


def build_denoiser(
    config: ModelConfig, skeleton: Skeleton, vocabulary: list[str], seed: int = 0
) -> MotionDenoiser:
    """Construct a denoiser with weights drawn deterministically from seed,
    leaving the global torch RNG stream untouched."""
    cls = TimeFramesDenoiser if config.strategy == "time_frames" else BodyPartsDenoiser
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = cls(config, skeleton, vocabulary)
    return model
