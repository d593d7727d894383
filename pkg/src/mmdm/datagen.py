"""Procedural synthetic motion dataset.

Four archetypes (walk, wave_left_arm, kick_right_leg, crouch) animate
distinct body parts of the toy skeleton, each parameterized by amplitude,
frequency, and phase drawn from a seeded generator, so the dataset is a pure
function of (config, seed). Captions come from a small template grammar with
synonym pools, which gives the retrieval metrics linguistic variation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError
from .motion import MotionSequence
from .skeleton import Skeleton, rest_pose, toy_skeleton

# Joint indices of the toy skeleton the archetypes animate.
_PELVIS, _SPINE, _HEAD = 0, 1, 2
_LARM, _RARM = 3, 4
_LKNEE, _LFOOT, _RKNEE, _RFOOT = 5, 6, 7, 8

ARCHETYPES = ("walk", "wave_left_arm", "kick_right_leg", "crouch")

#: Body part that dominates each archetype's motion (used by sanity tests).
ARCHETYPE_PART = {
    "walk": "LeftLeg",
    "wave_left_arm": "LeftArm",
    "kick_right_leg": "RightLeg",
    "crouch": "Torso",
}

CAPTION_GRAMMAR = {
    "walk": {
        "subject": ("a person", "a man", "a woman", "the figure"),
        "verb": ("walks", "strolls", "marches", "paces"),
        "tail": ("forward", "ahead", "across the floor", "in a straight line"),
    },
    "wave_left_arm": {
        "subject": ("a person", "a man", "a woman", "the figure"),
        "verb": ("waves", "raises", "swings", "lifts"),
        "tail": ("the left arm", "the left hand", "its left arm high", "the left arm overhead"),
    },
    "kick_right_leg": {
        "subject": ("a person", "a man", "a woman", "the figure"),
        "verb": ("kicks", "thrusts", "snaps"),
        "tail": ("the right leg", "the right foot forward", "the right leg into the air"),
    },
    "crouch": {
        "subject": ("a person", "a man", "a woman", "the figure"),
        "verb": ("crouches", "squats", "sinks"),
        "tail": ("down low", "toward the ground", "down and holds still", "down then rises"),
    },
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic dataset recipe: which archetypes, how many, and how long.

    Lengths must land in [16, 64]; at least four archetypes are required so
    the evaluation pool has enough semantic spread.
    """

    archetypes: tuple[str, ...] = ARCHETYPES
    samples_per_archetype: int = 50
    length: int = 32
    fps: float = 20.0
    skeleton: Skeleton = field(default_factory=toy_skeleton)

    def validate(self) -> None:
        unknown = [a for a in self.archetypes if a not in ARCHETYPES]
        if unknown:
            raise InvalidConfigError(
                f"unknown archetypes {unknown}; available: {list(ARCHETYPES)}"
            )
        if len(self.archetypes) < 4:
            raise InvalidConfigError(
                f"need at least 4 archetypes, got {len(self.archetypes)}"
            )
        if not 16 <= self.length <= 64:
            raise InvalidConfigError(f"length {self.length} outside [16, 64]")
        if self.samples_per_archetype < 1:
            raise InvalidConfigError("samples_per_archetype must be >= 1")
        if self.skeleton.representation_mode != "positions":
            raise InvalidConfigError("the synthetic generator emits positions-mode motion")


def caption_vocabulary() -> list[str]:
    """Sorted list of every word the caption grammar can produce."""
    words: set[str] = set()
    for pools in CAPTION_GRAMMAR.values():
        for pool in pools.values():
            for phrase in pool:
                words.update(phrase.split())
    return sorted(words)


def vocabulary_from_captions(captions) -> list[str]:
    """Sorted word list of an arbitrary caption collection."""
    return sorted({word for caption in captions for word in caption.lower().split()})


def _make_caption(archetype: str, rng: np.random.Generator) -> str:
    pools = CAPTION_GRAMMAR[archetype]
    subject = pools["subject"][rng.integers(len(pools["subject"]))]
    verb = pools["verb"][rng.integers(len(pools["verb"]))]
    tail = pools["tail"][rng.integers(len(pools["tail"]))]
    return f"{subject} {verb} {tail}"


def _walk(base: np.ndarray, n: int, fps: float, rng: np.random.Generator) -> np.ndarray:
    frames = np.tile(base, (n, 1, 1))
    speed = rng.uniform(0.4, 0.9)
    half = int(rng.integers(5, 9))
    period = 2 * half
    phase = int(rng.integers(0, period))
    lift = rng.uniform(0.04, 0.10)

    advance = speed * np.arange(n) / fps
    frames[:, [_PELVIS, _SPINE, _HEAD, _LARM, _RARM], 0] += advance[:, None]

    # Feet alternate exact-stance and swing half-cycles; a planted foot does
    # not move, so contact detection sees an alternating pattern.
    for foot, knee, side_phase in ((_LFOOT, _LKNEE, 0), (_RFOOT, _RKNEE, half)):
        x = base[foot, 0]
        for i in range(1, n):
            cycle_pos = (i - 1 + phase + side_phase) % period
            swinging = cycle_pos >= half
            if swinging:
                x += 2.0 * speed / fps
                progress = (cycle_pos - half + 1) / half
                frames[i, foot, 1] = base[foot, 1] + lift * np.sin(np.pi * min(progress, 1.0))
            frames[i, foot, 0] = x
        hip_x = frames[:, _PELVIS, 0] + (base[knee, 0] - base[_PELVIS, 0])
        frames[:, knee, 0] = 0.5 * (hip_x + frames[:, foot, 0])

    swing = 0.06 * np.sin(2.0 * np.pi * (np.arange(n) + phase) / period)
    frames[:, _LARM, 0] += swing
    frames[:, _RARM, 0] -= swing
    return frames


def _wave_left_arm(base, n, fps, rng) -> np.ndarray:
    frames = np.tile(base, (n, 1, 1))
    amp = rng.uniform(0.15, 0.30)
    freq = rng.uniform(0.6, 1.4)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = 2.0 * np.pi * freq * np.arange(n) / fps + phase
    frames[:, _LARM, 0] += -amp * np.abs(np.sin(t))
    frames[:, _LARM, 1] += amp * (1.0 - np.cos(t)) / 2.0 + 0.2
    return frames


def _kick_right_leg(base, n, fps, rng) -> np.ndarray:
    frames = np.tile(base, (n, 1, 1))
    amp = rng.uniform(0.25, 0.45)
    freq = rng.uniform(0.5, 1.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    s = np.maximum(0.0, np.sin(2.0 * np.pi * freq * np.arange(n) / fps + phase)) ** 2
    frames[:, _RFOOT, 0] += amp * s
    frames[:, _RFOOT, 1] += 0.6 * amp * s
    frames[:, _RKNEE, 0] += 0.5 * amp * s
    frames[:, _RKNEE, 1] += 0.2 * amp * s
    return frames


def _crouch(base, n, fps, rng) -> np.ndarray:
    frames = np.tile(base, (n, 1, 1))
    depth = rng.uniform(0.20, 0.40)
    freq = rng.uniform(0.3, 0.7)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    drop = depth * (1.0 - np.cos(2.0 * np.pi * freq * np.arange(n) / fps + phase)) / 2.0
    for joint in (_PELVIS, _SPINE, _HEAD, _LARM, _RARM):
        frames[:, joint, 1] -= drop
    frames[:, _LKNEE, 0] -= 0.25 * drop
    frames[:, _RKNEE, 0] += 0.25 * drop
    frames[:, _LKNEE, 1] -= 0.5 * drop
    frames[:, _RKNEE, 1] -= 0.5 * drop
    return frames


_SYNTHESIZERS = {
    "walk": _walk,
    "wave_left_arm": _wave_left_arm,
    "kick_right_leg": _kick_right_leg,
    "crouch": _crouch,
}


def synthesize_archetype(
    archetype: str, skeleton: Skeleton, length: int, fps: float, rng: np.random.Generator
) -> np.ndarray:
    """One (length, J, 3) clip of the named archetype with rng-drawn parameters."""
    if archetype not in _SYNTHESIZERS:
        raise InvalidConfigError(f"unknown archetype {archetype!r}")
    base = rest_pose(skeleton)
    return _SYNTHESIZERS[archetype](base, length, fps, rng).astype(np.float32)


def generate_synthetic_dataset(config: GeneratorConfig, seed: int) -> list[MotionSequence]:
    """Generate the full dataset; identical seeds give bit-identical arrays.

    Sequences are ordered archetype-major in config order, so motion i // S
    belongs to archetype i // samples_per_archetype.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    motions: list[MotionSequence] = []
    for archetype in config.archetypes:
        for _ in range(config.samples_per_archetype):
            frames = synthesize_archetype(
                archetype, config.skeleton, config.length, config.fps, rng
            )
            caption = _make_caption(archetype, rng)
            motions.append(MotionSequence(frames, caption, config.fps))
    return motions


def archetype_of_index(config: GeneratorConfig, index: int) -> str:
    """Archetype name owning dataset position ``index``."""
    return config.archetypes[index // config.samples_per_archetype]
