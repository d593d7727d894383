"""Metric suite over a learned text-motion embedding space.

The evaluator is a desk-scale stand-in for a pretrained retrieval model: a
contrastively trained pair of encoders mapping motions (via temporal stat
pooling) and captions (via bag-of-words) into one embedding space. All
metrics are pure functions of feature arrays and explicit seeds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import (
    InvalidConfigError,
    InvalidInputError,
    NumericFailureError,
    TrainingFailureError,
)
from .motion import MotionSequence
from .sampling import GuidanceConfig, p_sample_loop_batch
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol constants; defaults follow the cited retrieval
    protocol (32-candidate pools, 20 repeats)."""

    repeats: int = 20
    pool_size: int = 32
    samples_per_repeat: int = 64
    diversity_subset: int = 30
    multimodality_prompts: int = 8
    multimodality_samples: int = 4
    evaluator_steps: int = 400
    evaluator_dim: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.repeats < 1:
            raise InvalidConfigError("repeats must be >= 1")
        if self.pool_size < 2:
            raise InvalidConfigError("pool_size must be >= 2")
        if self.multimodality_samples < 2:
            raise InvalidConfigError("multimodality_samples must be >= 2")
        if min(self.samples_per_repeat, self.diversity_subset, self.multimodality_prompts) < 1:
            raise InvalidConfigError("sample counts must be >= 1")


@dataclass(frozen=True)
class MetricsValue:
    mean: float
    ci95: float


@dataclass(frozen=True)
class MetricsReport:
    """All six metric families with normal-approximation 95% intervals.

    multimodality is None for ground-truth self-evaluation runs, where
    repeated generations per prompt do not exist.
    """

    fid: MetricsValue
    r_precision_top1: MetricsValue
    r_precision_top2: MetricsValue
    r_precision_top3: MetricsValue
    mm_dist: MetricsValue
    diversity: MetricsValue
    multimodality: MetricsValue | None


REPORT_FIELDS = (
    "fid",
    "r_precision_top1",
    "r_precision_top2",
    "r_precision_top3",
    "mm_dist",
    "diversity",
    "multimodality",
)


def motion_features(frames) -> np.ndarray:
    """Temporal stat pooling: per-channel mean, std, and mean |velocity|.

    frames: (B, N, J, D) or (N, J, D); returns float32 (B, 3*J*D).
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim == 3:
        frames = frames[None]
    b, n = frames.shape[0], frames.shape[1]
    flat = frames.reshape(b, n, -1)
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    vel = np.abs(np.diff(flat, axis=1)).mean(axis=1)
    return np.concatenate([mean, std, vel], axis=1)


class EvaluatorEmbedder(nn.Module):
    """Motion and text encoders sharing one embedding space.

    Both sides are linear heads: motion stats are standardized and projected,
    captions are mean-pooled word embeddings projected to the same width.
    Linear heads generalize far better than MLPs at this data scale.
    """

    def __init__(self, vocabulary: list[str], feature_dim: int, embed_dim: int = 32,
                 word_dim: int = 64):
        super().__init__()
        self.vocabulary = list(vocabulary)
        self.index = {word: i + 1 for i, word in enumerate(self.vocabulary)}
        self.feature_dim = feature_dim
        self.embed_dim = embed_dim
        # per-feature standardization stats, frozen from the training set
        self.register_buffer("feature_mean", torch.zeros(feature_dim))
        self.register_buffer("feature_std", torch.ones(feature_dim))
        self.motion_net = nn.Linear(feature_dim, embed_dim)
        self.word_embedding = nn.Embedding(len(self.vocabulary) + 1, word_dim)
        self.text_net = nn.Linear(word_dim, embed_dim)

    def set_feature_stats(self, features: torch.Tensor) -> None:
        self.feature_mean.copy_(features.mean(dim=0))
        self.feature_std.copy_(features.std(dim=0).clamp_min(1e-6))

    def _standardize(self, features: torch.Tensor) -> torch.Tensor:
        return (features - self.feature_mean) / self.feature_std

    def _text_vectors(self, captions: list[str]) -> torch.Tensor:
        pooled = []
        zero = torch.zeros_like(self.word_embedding.weight[0])
        for caption in captions:
            ids = [self.index.get(w, 0) for w in caption.lower().split()]
            if ids:
                pooled.append(self.word_embedding(torch.tensor(ids)).mean(dim=0))
            else:
                pooled.append(zero)
        return torch.stack(pooled)

    def forward(self, features: torch.Tensor, captions: list[str]):
        return self.motion_net(self._standardize(features)), self.text_net(
            self._text_vectors(captions)
        )

    @staticmethod
    def _unit(embeddings: torch.Tensor) -> np.ndarray:
        # training normalizes inside the contrastive loss, so only directions
        # carry meaning; metrics therefore live on the unit sphere
        normed = nn.functional.normalize(embeddings, dim=1, eps=1e-8)
        return normed.numpy().astype(np.float64)

    def embed_motions(self, frames) -> np.ndarray:
        feats = torch.from_numpy(motion_features(frames))
        with torch.no_grad():
            return self._unit(self.motion_net(self._standardize(feats)))

    def embed_texts(self, captions: list[str]) -> np.ndarray:
        with torch.no_grad():
            return self._unit(self.text_net(self._text_vectors(list(captions))))


def train_evaluator(
    dataset: list[MotionSequence],
    seed: int,
    steps: int = 400,
    embed_dim: int = 32,
    lr: float = 5e-3,
    temperature: float = 0.1,
    noise_std: float = 0.04,
    noise_replicas: int = 2,
) -> EvaluatorEmbedder:
    """Contrastive training pulling matched (caption, motion) pairs together.

    Each motion also contributes noise-jittered replicas, which keeps the
    embedding robust to the small per-frame residuals that generated motions
    carry; without them, near-zero-variance stat features amplify generator
    noise catastrophically after standardization.

    Deterministic per seed; the returned module is meant to be frozen.
    Raises TrainingFailureError if the embeddings collapse.
    """
    if not dataset:
        raise InvalidInputError("evaluator needs a non-empty dataset")
    frames = np.stack([m.frames for m in dataset])
    noise_rng = np.random.default_rng(seed)
    replicas = [frames] + [
        frames + noise_rng.normal(scale=noise_std, size=frames.shape).astype(np.float32)
        for _ in range(noise_replicas)
    ]
    captions = [m.caption for m in dataset] * len(replicas)
    vocabulary = sorted({w for c in captions for w in c.lower().split()})
    features = torch.from_numpy(motion_features(np.concatenate(replicas)))

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        evaluator = EvaluatorEmbedder(vocabulary, features.shape[1], embed_dim)
        evaluator.set_feature_stats(features)
        optimizer = torch.optim.Adam(evaluator.parameters(), lr=lr)
        labels = torch.arange(len(captions))
        for step in range(steps):
            # cosine lr decay keeps late training from oscillating
            for group in optimizer.param_groups:
                group["lr"] = lr * 0.5 * (1.0 + math.cos(math.pi * step / max(steps, 1)))
            motion_emb, text_emb = evaluator(features, captions)
            zm = nn.functional.normalize(motion_emb, dim=1)
            zt = nn.functional.normalize(text_emb, dim=1)
            logits = zm @ zt.T / temperature
            loss = 0.5 * (
                nn.functional.cross_entropy(logits, labels)
                + nn.functional.cross_entropy(logits.T, labels)
            )
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

    embeddings = evaluator.embed_motions(np.stack([m.frames for m in dataset]))
    if not np.all(np.isfinite(embeddings)):
        raise TrainingFailureError("evaluator produced non-finite embeddings")
    if float(embeddings.std(axis=0).max()) < 1e-6:
        raise TrainingFailureError("evaluator embeddings collapsed to a point")
    return evaluator


def _as_features(features, name: str) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (samples, dims), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _sqrt_psd_eigvals(matrix: np.ndarray, tolerance: float = -1e-8) -> np.ndarray:
    values = np.linalg.eigvalsh((matrix + matrix.T) / 2.0)
    if values.min(initial=0.0) < tolerance:
        warnings.warn(
            f"clamping negative eigenvalue mass {values.min():.3e} in FID square root",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.sqrt(np.clip(values, 0.0, None))


def compute_fid(features_a, features_b, ridge: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the matrix square
    root comes from an eigendecomposition of sqrt(S_a) S_b sqrt(S_a), with
    small negative eigenvalues clamped. Covariances get a ridge of 1e-6.
    """
    a = _as_features(features_a, "features_a")
    b = _as_features(features_b, "features_b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    k = a.shape[1]
    cov_a = np.atleast_2d(np.cov(a, rowvar=False)) + ridge * np.eye(k)
    cov_b = np.atleast_2d(np.cov(b, rowvar=False)) + ridge * np.eye(k)

    vals_a, vecs_a = np.linalg.eigh(cov_a)
    sqrt_a = (vecs_a * np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T
    cross = _sqrt_psd_eigvals(sqrt_a @ cov_b @ sqrt_a)
    fid = float(
        np.sum((mu_a - mu_b) ** 2)
        + np.trace(cov_a)
        + np.trace(cov_b)
        - 2.0 * cross.sum()
    )
    return max(fid, 0.0)


def r_precision(
    text_embs, motion_embs, pool_size: int = 32, rng=0, top_ks=(1, 2, 3)
) -> dict[int, float]:
    """Retrieval accuracy: rank each motion's true caption in a candidate pool.

    For every motion, its matched text plus (pool_size - 1) distractor texts
    drawn from the other samples are ranked by Euclidean distance; returns
    the fraction of motions whose true text lands in the top k.
    """
    text = _as_features(text_embs, "text_embs")
    motion = _as_features(motion_embs, "motion_embs")
    if text.shape != motion.shape:
        raise InvalidInputError("text and motion embeddings must align")
    m = text.shape[0]
    if pool_size > m:
        raise InvalidInputError(f"pool_size {pool_size} exceeds sample count {m}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    hits = {k: 0 for k in top_ks}
    for i in range(m):
        others = np.delete(np.arange(m), i)
        distractors = rng.choice(others, size=pool_size - 1, replace=False)
        pool = np.concatenate([[i], distractors])
        dists = np.linalg.norm(text[pool] - motion[i], axis=1)
        strictly_better = int((dists[1:] < dists[0]).sum())
        for k in top_ks:
            hits[k] += strictly_better < k
    return {k: hits[k] / m for k in top_ks}


def diversity(features, subset_size: int, rng=0, repeats: int = 20) -> float:
    """Mean distance between two disjoint random subsets, averaged over draws."""
    feats = _as_features(features, "features")
    m = feats.shape[0]
    if 2 * subset_size > m:
        raise InvalidInputError(f"need at least {2 * subset_size} samples, got {m}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    values = []
    for _ in range(repeats):
        idx = rng.choice(m, size=2 * subset_size, replace=False)
        first, second = feats[idx[:subset_size]], feats[idx[subset_size:]]
        values.append(np.linalg.norm(first - second, axis=1).mean())
    return float(np.mean(values))


def multimodality(groups) -> float:
    """Mean pairwise distance within each prompt's generation group,
    averaged over prompts."""
    spreads = []
    for group in groups:
        g = _as_features(group, "group")
        m = g.shape[0]
        if m < 2:
            raise InvalidInputError("multimodality groups need at least 2 members")
        dists = [
            np.linalg.norm(g[i] - g[j])
            for i in range(m)
            for j in range(i + 1, m)
        ]
        spreads.append(np.mean(dists))
    if not spreads:
        raise InvalidInputError("no groups given")
    return float(np.mean(spreads))


def mm_dist(text_embs, motion_embs) -> float:
    """Mean Euclidean distance between matched text and motion embeddings."""
    text = _as_features(text_embs, "text_embs")
    motion = _as_features(motion_embs, "motion_embs")
    if text.shape != motion.shape:
        raise InvalidInputError("text and motion embeddings must align")
    return float(np.linalg.norm(text - motion, axis=1).mean())


def _aggregate(values: list[float]) -> MetricsValue:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size <= 1:
        return MetricsValue(float(arr.mean()), 0.0)
    return MetricsValue(float(arr.mean()), float(1.96 * arr.std(ddof=1) / math.sqrt(arr.size)))


def evaluate(
    model,
    evaluator: EvaluatorEmbedder,
    dataset: list[MotionSequence],
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    config: EvalConfig,
    seed: int = 0,
    real_row: bool = False,
    infer_mask=None,
) -> MetricsReport:
    """Full metric sweep: generate per repeat, embed, compute, aggregate.

    With real_row=True the "generated" features are ground-truth subsets
    (the dataset evaluated against itself) and multimodality is omitted.
    """
    config.validate()
    if not dataset:
        raise InvalidInputError("evaluation dataset is empty")
    if not real_row and model is None:
        raise InvalidInputError("model required unless real_row=True")
    captions = [m.caption for m in dataset]
    frames_all = np.stack([m.frames for m in dataset])
    total = len(dataset)
    length = dataset[0].length
    frame_shape = frames_all.shape[2:]
    real_feats = evaluator.embed_motions(frames_all)

    root = np.random.SeedSequence(seed)
    per_repeat = root.spawn(config.repeats)
    collected: dict[str, list[float]] = {name: [] for name in REPORT_FIELDS}

    for repeat, repeat_seq in enumerate(per_repeat):
        rng = np.random.default_rng(repeat_seq)
        sample_count = min(config.samples_per_repeat, total)
        idx = rng.choice(total, size=sample_count, replace=False)
        batch_captions = [captions[i] for i in idx]
        gen_seed = int(repeat_seq.generate_state(1, dtype=np.uint64)[0] >> 1)

        if real_row:
            gen_feats = real_feats[idx]
        else:
            fn = model.batch_denoise_fn(batch_captions, mask=infer_mask)
            try:
                frames = p_sample_loop_batch(
                    fn, sample_count, length, schedule, guidance, gen_seed,
                    (int(frame_shape[0]), int(frame_shape[1])),
                )
            except NumericFailureError as exc:
                raise NumericFailureError(
                    f"generation failed in evaluation repeat {repeat}: {exc}",
                    step=exc.step,
                ) from exc
            gen_feats = evaluator.embed_motions(frames)

        text_feats = evaluator.embed_texts(batch_captions)
        pool = min(config.pool_size, sample_count)
        rp = r_precision(text_feats, gen_feats, pool_size=pool, rng=rng)
        subset = min(config.diversity_subset, sample_count // 2)
        collected["fid"].append(compute_fid(real_feats, gen_feats))
        collected["r_precision_top1"].append(rp[1])
        collected["r_precision_top2"].append(rp[2])
        collected["r_precision_top3"].append(rp[3])
        collected["mm_dist"].append(mm_dist(text_feats, gen_feats))
        collected["diversity"].append(diversity(gen_feats, subset, rng=rng))

        if not real_row:
            prompt_count = min(config.multimodality_prompts, total)
            prompt_idx = rng.choice(total, size=prompt_count, replace=False)
            repeated = [
                captions[i] for i in prompt_idx for _ in range(config.multimodality_samples)
            ]
            fn = model.batch_denoise_fn(repeated, mask=infer_mask)
            frames = p_sample_loop_batch(
                fn, len(repeated), length, schedule, guidance, gen_seed + 1,
                (int(frame_shape[0]), int(frame_shape[1])),
            )
            feats = evaluator.embed_motions(frames)
            groups = feats.reshape(prompt_count, config.multimodality_samples, -1)
            collected["multimodality"].append(multimodality(list(groups)))

    return MetricsReport(
        fid=_aggregate(collected["fid"]),
        r_precision_top1=_aggregate(collected["r_precision_top1"]),
        r_precision_top2=_aggregate(collected["r_precision_top2"]),
        r_precision_top3=_aggregate(collected["r_precision_top3"]),
        mm_dist=_aggregate(collected["mm_dist"]),
        diversity=_aggregate(collected["diversity"]),
        multimodality=(
            _aggregate(collected["multimodality"]) if collected["multimodality"] else None
        ),
    )
