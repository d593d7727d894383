"""Training loop: masking, forward noising, denoising, losses, Adam updates.

Determinism is the backbone of the test suite, so every source of
randomness is an explicit named stream (data order, timesteps, masks,
condition dropout, noise) seeded from the config seed, and all stream
states ride along in checkpoints so a resumed run reproduces an
uninterrupted one bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_denoiser, save_denoiser
from .denoiser import ModelConfig, MotionDenoiser, build_denoiser
from .errors import InvalidConfigError, InvalidInputError, NumericFailureError
from .losses import LossBreakdown, LossWeights, motion_losses
from .masking import sample_mask
from .motion import (
    DEFAULT_FOOT_SPEED_PER_FRAME,
    MotionSequence,
    detect_foot_contact,
    forward_kinematics,
)
from .schedule import NoiseSchedule, make_cosine_schedule, q_sample
from .skeleton import Skeleton

_STREAM_NAMES = ("data", "timestep", "mask", "dropout")


@dataclass(frozen=True)
class TrainConfig:
    """Trainer hyperparameters. Paper-scale defaults are batch_size 64 and
    1000 diffusion steps; the desk presets shrink both."""

    learning_rate: float = 1e-4
    batch_size: int = 16
    total_steps: int = 1000
    mask_ratio: float = 0.2
    strategy: str = "time_frames"
    seed: int = 0
    checkpoint_interval: int = 0
    condition_dropout_prob: float = 0.1
    diffusion_steps: int = 1000
    lr_schedule: str = "constant"
    masking_enabled: bool = True
    foot_speed_per_frame: float = DEFAULT_FOOT_SPEED_PER_FRAME
    weights: LossWeights = field(default_factory=LossWeights)

    def validate(self) -> None:
        problems = []
        if not self.learning_rate >= 0:
            problems.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 0:
            problems.append(f"total_steps must be >= 0, got {self.total_steps}")
        if not 0.0 <= self.mask_ratio < 1.0:
            problems.append(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.strategy not in ("time_frames", "body_parts"):
            problems.append(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.condition_dropout_prob < 1.0:
            problems.append(
                f"condition_dropout_prob must be in [0, 1), got {self.condition_dropout_prob}"
            )
        if self.diffusion_steps < 2:
            problems.append(f"diffusion_steps must be >= 2, got {self.diffusion_steps}")
        if self.lr_schedule not in ("constant", "cosine"):
            problems.append(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.checkpoint_interval < 0:
            problems.append("checkpoint_interval must be >= 0")
        if not self.foot_speed_per_frame > 0:
            problems.append("foot_speed_per_frame must be positive")
        if problems:
            raise InvalidConfigError("; ".join(problems))
        self.weights.validate()


@dataclass
class TrainingData:
    """Pre-stacked tensors for fixed-length training batches."""

    frames: torch.Tensor        # (S, N, J, D) float32
    captions: list[str]
    contacts: torch.Tensor      # (S, N-1, F) uint8


@dataclass
class TrainState:
    model: MotionDenoiser
    optimizer: torch.optim.Adam
    schedule: NoiseSchedule
    step: int
    rngs: dict[str, np.random.Generator]
    noise_gen: torch.Generator


def prepare_training_data(
    dataset: list[MotionSequence], skeleton: Skeleton, foot_speed_per_frame: float
) -> TrainingData:
    if not dataset:
        raise InvalidInputError("dataset is empty")
    lengths = {m.length for m in dataset}
    if len(lengths) != 1:
        raise InvalidInputError(
            f"training batches need equal-length motions, got lengths {sorted(lengths)}"
        )
    frames = torch.from_numpy(np.stack([m.frames for m in dataset]))
    contacts = []
    for m in dataset:
        positions = forward_kinematics(skeleton, m.frames)
        labels = detect_foot_contact(
            skeleton, positions, m.fps, foot_speed_per_frame * m.fps
        )
        contacts.append(labels.contacts)
    return TrainingData(
        frames=frames,
        captions=[m.caption for m in dataset],
        contacts=torch.from_numpy(np.stack(contacts)),
    )


def _make_streams(seed: int) -> tuple[dict[str, np.random.Generator], torch.Generator]:
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(_STREAM_NAMES) + 1)
    rngs = {
        name: np.random.default_rng(child)
        for name, child in zip(_STREAM_NAMES, children)
    }
    noise_seed = int(children[-1].generate_state(1, dtype=np.uint64)[0] >> 1)
    noise_gen = torch.Generator()
    noise_gen.manual_seed(noise_seed)
    return rngs, noise_gen


def init_train_state(
    skeleton: Skeleton,
    vocabulary: list[str],
    model_config: ModelConfig,
    config: TrainConfig,
) -> TrainState:
    config.validate()
    if model_config.strategy != config.strategy:
        raise InvalidConfigError(
            f"model strategy {model_config.strategy!r} != trainer strategy {config.strategy!r}"
        )
    model = build_denoiser(model_config, skeleton, vocabulary, seed=config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    schedule = make_cosine_schedule(config.diffusion_steps)
    rngs, noise_gen = _make_streams(config.seed)
    return TrainState(model, optimizer, schedule, 0, rngs, noise_gen)


def _current_lr(config: TrainConfig, step: int) -> float:
    if config.lr_schedule == "cosine":
        span = max(config.total_steps, 1)
        return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / span))
    return config.learning_rate


def train_step(
    batch: tuple[torch.Tensor, list[str], torch.Tensor],
    state: TrainState,
    config: TrainConfig,
) -> LossBreakdown:
    """One optimization step; returns the loss breakdown for logging."""
    frames, captions, contacts = batch
    b, n = frames.shape[0], frames.shape[1]
    model = state.model

    t = state.rngs["timestep"].integers(0, state.schedule.T, size=b)
    noise = torch.randn(frames.shape, generator=state.noise_gen, dtype=torch.float32)
    x_t = q_sample(frames, t, noise, state.schedule)

    text_emb = model.text_encoder(captions)
    coin = state.rngs["dropout"].random(b)
    is_null = torch.from_numpy(coin < config.condition_dropout_prob)

    mask = None
    if config.masking_enabled:
        slots = n if config.strategy == "time_frames" else 5
        mask = np.stack(
            [
                sample_mask(config.strategy, slots, config.mask_ratio, state.rngs["mask"]).mask
                for _ in range(b)
            ]
        )

    x0_hat = model(x_t, torch.from_numpy(t), text_emb, is_null, mask=mask)
    total, breakdown = motion_losses(frames, x0_hat, model.skeleton, contacts, config.weights)
    if not math.isfinite(breakdown.total):
        raise NumericFailureError(
            f"non-finite loss at step {state.step}: {breakdown.as_dict()}", step=state.step
        )

    lr = _current_lr(config, state.step)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()
    state.step += 1
    return breakdown


def _next_batch(data: TrainingData, state: TrainState, config: TrainConfig):
    size = min(config.batch_size, data.frames.shape[0])
    idx = state.rngs["data"].choice(data.frames.shape[0], size=size, replace=False)
    return (
        data.frames[idx],
        [data.captions[i] for i in idx],
        data.contacts[idx],
    )


def _rng_state_meta(state: TrainState) -> dict:
    return {name: rng.bit_generator.state for name, rng in state.rngs.items()}


def save_train_checkpoint(path, state: TrainState, config: TrainConfig) -> None:
    arrays = {"rng/noise": state.noise_gen.get_state().numpy()}
    sd = state.optimizer.state_dict()
    for idx, entry in sd["state"].items():
        for key, value in entry.items():
            if isinstance(value, torch.Tensor):
                arrays[f"optim/{idx}/{key}"] = value.detach().cpu().numpy()
            else:
                arrays[f"optim/{idx}/{key}"] = np.asarray(value, dtype=np.float64)
    meta = {
        "train_step": state.step,
        "train_config": asdict(config),
        "optimizer_groups": sd["param_groups"],
        "rng_states": _rng_state_meta(state),
        "diffusion_steps": state.schedule.T,
    }
    save_denoiser(path, state.model, extra_meta=meta, extra_arrays=arrays)


def load_train_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    model, meta, extras = load_denoiser(path)
    raw = dict(meta["train_config"])
    raw["weights"] = LossWeights(**raw["weights"])
    config = TrainConfig(**raw)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    state_entries: dict[int, dict] = {}
    for name, arr in extras.items():
        if not name.startswith("optim/"):
            continue
        _, idx, key = name.split("/", 2)
        value = torch.from_numpy(arr.copy())
        state_entries.setdefault(int(idx), {})[key] = value
    if state_entries:
        optimizer.load_state_dict(
            {"state": state_entries, "param_groups": meta["optimizer_groups"]}
        )

    rngs = {}
    for name in _STREAM_NAMES:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_states"][name]
        rngs[name] = rng
    noise_gen = torch.Generator()
    noise_gen.set_state(torch.from_numpy(extras["rng/noise"].copy()))

    schedule = make_cosine_schedule(meta["diffusion_steps"])
    state = TrainState(model, optimizer, schedule, meta["train_step"], rngs, noise_gen)
    return state, config


@dataclass
class TrainResult:
    state: TrainState
    history: list[LossBreakdown]
    checkpoint_path: Path | None
    log_path: Path | None


def train(
    dataset: list[MotionSequence],
    skeleton: Skeleton,
    vocabulary: list[str],
    model_config: ModelConfig,
    config: TrainConfig,
    out_dir=None,
    resume_from=None,
) -> TrainResult:
    """Run total_steps of train_step with shuffled batching and periodic
    checkpoints; emits one structured log record per step."""
    config.validate()
    data = prepare_training_data(dataset, skeleton, config.foot_speed_per_frame)

    if resume_from is not None:
        state, saved_config = load_train_checkpoint(resume_from)
        saved_dict, new_dict = asdict(saved_config), asdict(config)
        # extending the run is legitimate; everything else must match exactly
        saved_dict.pop("total_steps"), new_dict.pop("total_steps")
        if saved_dict != new_dict:
            raise InvalidConfigError(
                "resume config differs from checkpoint config; refusing silent divergence"
            )
    else:
        state = init_train_state(skeleton, vocabulary, model_config, config)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = None
    log_handle = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "training_log.jsonl"
        log_handle = open(log_path, "a", encoding="utf-8")

    history: list[LossBreakdown] = []
    try:
        while state.step < config.total_steps:
            batch = _next_batch(data, state, config)
            breakdown = train_step(batch, state, config)
            history.append(breakdown)
            if log_handle is not None:
                record = {"step": state.step, **breakdown.as_dict()}
                log_handle.write(json.dumps(record) + "\n")
            if (
                out_dir is not None
                and config.checkpoint_interval
                and state.step % config.checkpoint_interval == 0
                and state.step < config.total_steps
            ):
                save_train_checkpoint(
                    out_dir / f"checkpoint_step{state.step}.mmck", state, config
                )
    finally:
        if log_handle is not None:
            log_handle.close()

    checkpoint_path = None
    if out_dir is not None:
        checkpoint_path = out_dir / "checkpoint.mmck"
        save_train_checkpoint(checkpoint_path, state, config)
    return TrainResult(state, history, checkpoint_path, log_path)
