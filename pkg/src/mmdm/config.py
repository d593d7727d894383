"""Run configuration: one JSON file merging every module's knobs.

Unknown keys are rejected with a message listing every offending key, and
command-line overrides win over file values. MMDM_DATA_DIR serves as the
dataset-directory fallback when the dataset section names no path.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .datagen import ARCHETYPES, GeneratorConfig, generate_synthetic_dataset
from .denoiser import ModelConfig
from .errors import InvalidConfigError
from .evaluation import EvalConfig
from .losses import LossWeights
from .motion import DEFAULT_FOOT_SPEED_PER_FRAME, MotionSequence, read_motion
from .sampling import GuidanceConfig
from .skeleton import Skeleton, read_skeleton, toy_skeleton
from .trainer import TrainConfig

DATA_DIR_ENV = "MMDM_DATA_DIR"


@dataclass(frozen=True)
class DatasetSection:
    source: str = "synthetic"
    archetypes: tuple[str, ...] = ARCHETYPES
    samples_per_archetype: int = 50
    length: int = 32
    fps: float = 20.0
    seed: int = 0
    path: str | None = None


@dataclass(frozen=True)
class DiffusionSection:
    steps: int = 1000
    guidance_scale: float = 2.5
    condition_dropout_prob: float = 0.1
    infer_mask_ratio: float = 0.0


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 1e-4
    batch_size: int = 16
    total_steps: int = 1000
    mask_ratio: float = 0.2
    checkpoint_interval: int = 0
    lr_schedule: str = "constant"
    masking_enabled: bool = True


@dataclass(frozen=True)
class LossSection:
    lambda_pos: float = 1.0
    lambda_vel: float = 1.0
    lambda_foot: float = 1.0
    foot_speed_per_frame: float = DEFAULT_FOOT_SPEED_PER_FRAME


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/run"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    train: TrainSection = field(default_factory=TrainSection)
    loss: LossSection = field(default_factory=LossSection)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {
    "dataset": DatasetSection,
    "model": ModelConfig,
    "diffusion": DiffusionSection,
    "train": TrainSection,
    "loss": LossSection,
    "eval": EvalConfig,
}
_TOP_LEVEL = {"seed", "out_dir"} | set(_SECTIONS)


def _collect_unknown_keys(data: dict) -> list[str]:
    unknown = [key for key in data if key not in _TOP_LEVEL]
    for section, cls in _SECTIONS.items():
        body = data.get(section)
        if isinstance(body, dict):
            names = {f.name for f in fields(cls)}
            unknown.extend(f"{section}.{key}" for key in body if key not in names)
    return sorted(unknown)


def parse_override(text: str) -> tuple[str, object]:
    """Parse a --set override of the form section.key=value (JSON value)."""
    if "=" not in text:
        raise InvalidConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_run_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Load and validate a run config; overrides win over file values."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InvalidConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfigError(f"config file {path} must hold a JSON object")

    for text in overrides or []:
        key, value = parse_override(text)
        parts = key.split(".")
        if len(parts) == 1:
            data[parts[0]] = value
        elif len(parts) == 2:
            data.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise InvalidConfigError(f"override key {key!r} nests too deep")

    unknown = _collect_unknown_keys(data)
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")

    kwargs: dict = {}
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    if "out_dir" in data:
        kwargs["out_dir"] = str(data["out_dir"])
    for section, cls in _SECTIONS.items():
        body = data.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise InvalidConfigError(f"config section {section!r} must be an object")
        if section == "dataset" and isinstance(body.get("archetypes"), list):
            body = dict(body, archetypes=tuple(body["archetypes"]))
        kwargs[section] = cls(**body)
    return RunConfig(**kwargs)


def train_config_from(run: RunConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=run.train.learning_rate,
        batch_size=run.train.batch_size,
        total_steps=run.train.total_steps,
        mask_ratio=run.train.mask_ratio,
        strategy=run.model.strategy,
        seed=run.seed,
        checkpoint_interval=run.train.checkpoint_interval,
        condition_dropout_prob=run.diffusion.condition_dropout_prob,
        diffusion_steps=run.diffusion.steps,
        lr_schedule=run.train.lr_schedule,
        masking_enabled=run.train.masking_enabled,
        foot_speed_per_frame=run.loss.foot_speed_per_frame,
        weights=LossWeights(
            lambda_pos=run.loss.lambda_pos,
            lambda_vel=run.loss.lambda_vel,
            lambda_foot=run.loss.lambda_foot,
        ),
    )


def guidance_from(run: RunConfig) -> GuidanceConfig:
    return GuidanceConfig(
        scale=run.diffusion.guidance_scale,
        condition_dropout_prob=run.diffusion.condition_dropout_prob,
    )


def generator_config_from(run: RunConfig) -> GeneratorConfig:
    return GeneratorConfig(
        archetypes=tuple(run.dataset.archetypes),
        samples_per_archetype=run.dataset.samples_per_archetype,
        length=run.dataset.length,
        fps=run.dataset.fps,
    )


def load_dataset(run: RunConfig) -> tuple[list[MotionSequence], Skeleton]:
    """Materialize the dataset: synthetic generation or an .mmot directory.

    Directory mode reads every *.mmot (sorted) and the skeleton sidecar of
    the first one; the path falls back to MMDM_DATA_DIR.
    """
    if run.dataset.source == "synthetic":
        config = generator_config_from(run)
        return generate_synthetic_dataset(config, run.dataset.seed), config.skeleton
    if run.dataset.source == "dir":
        root = run.dataset.path or os.environ.get(DATA_DIR_ENV)
        if not root:
            raise InvalidConfigError(
                f"dataset.source='dir' needs dataset.path or ${DATA_DIR_ENV}"
            )
        root = Path(root)
        files = sorted(root.glob("*.mmot"))
        if not files:
            raise InvalidConfigError(f"no .mmot files under {root}")
        motions = [read_motion(f) for f in files]
        sidecars = sorted(root.glob("*.skel"))
        skeleton = read_skeleton(sidecars[0]) if sidecars else toy_skeleton()
        return motions, skeleton
    raise InvalidConfigError(f"unknown dataset source {run.dataset.source!r}")


def run_config_to_json(run: RunConfig) -> str:
    data = dataclasses.asdict(run)
    data["dataset"]["archetypes"] = list(data["dataset"]["archetypes"])
    return json.dumps(data, indent=2)
