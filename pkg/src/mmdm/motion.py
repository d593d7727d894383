"""Motion sequences, forward kinematics, foot-contact labels, and the
binary ``.mmot`` motion file format.

Frames are (N, J, D) arrays. In ``positions`` mode D = 3 and each joint row
is its global position. In ``rotations`` mode D = 6: channels [0:3] hold an
axis-angle rotation per joint and channels [3:6] hold a translation that is
read only at the root joint; the extra channels of other joints are carried
but ignored by FK.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import (
    BadMagicError,
    InvalidInputError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .skeleton import Skeleton, read_skeleton, write_skeleton

MMOT_MAGIC = b"MMOT"
MMOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIfI")

#: Default foot-contact displacement threshold in meters per frame; callers
#: multiply by fps to obtain the speed threshold in m/s.
DEFAULT_FOOT_SPEED_PER_FRAME = 0.01


@dataclass(frozen=True)
class MotionSequence:
    """One motion clip: frames, caption, and frame rate.

    frames is coerced to float32 with shape (N, J, D), N >= 2, all finite.
    """

    frames: np.ndarray
    caption: str
    fps: float = 20.0

    def __post_init__(self):
        frames = np.ascontiguousarray(np.asarray(self.frames, dtype=np.float32))
        if frames.ndim != 3:
            raise InvalidInputError(f"frames must be (N, J, D), got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise InvalidInputError(f"motion needs at least 2 frames, got {frames.shape[0]}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("motion frames contain non-finite values")
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)

    @property
    def length(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class FootContactLabels:
    """Binary (N-1, F) indicators, one column per foot joint in sorted order."""

    contacts: np.ndarray

    def __post_init__(self):
        contacts = np.asarray(self.contacts, dtype=np.uint8)
        if contacts.ndim != 2:
            raise InvalidInputError(f"contacts must be 2-D, got shape {contacts.shape}")
        if not np.isin(contacts, (0, 1)).all():
            raise InvalidInputError("contact labels must be 0 or 1")
        object.__setattr__(self, "contacts", contacts)


def check_frames(skeleton: Skeleton, frames) -> None:
    """Raise InvalidInputError unless frames end in (J, D) for this skeleton."""
    shape = tuple(frames.shape)
    if len(shape) < 2 or shape[-2] != skeleton.joint_count or shape[-1] != skeleton.frame_dim:
        raise InvalidInputError(
            f"frames shape {shape} does not match skeleton "
            f"(J={skeleton.joint_count}, D={skeleton.frame_dim}, "
            f"mode={skeleton.representation_mode})"
        )


def rotation_matrices(axis_angle: torch.Tensor) -> torch.Tensor:
    """Rodrigues map from (..., 3) axis-angle vectors to (..., 3, 3) matrices.

    Small-angle safe: below theta^2 = 1e-8 the sin/cos coefficients switch to
    their Taylor expansions so values and gradients stay finite at zero.
    """
    theta2 = (axis_angle * axis_angle).sum(dim=-1)
    small = theta2 < 1e-8
    theta2_safe = torch.where(small, torch.ones_like(theta2), theta2)
    theta = torch.sqrt(theta2_safe)
    a = torch.where(small, 1.0 - theta2 / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta2 / 24.0, (1.0 - torch.cos(theta)) / theta2_safe)

    x, y, z = axis_angle[..., 0], axis_angle[..., 1], axis_angle[..., 2]
    zero = torch.zeros_like(x)
    K = torch.stack(
        [
            torch.stack([zero, -z, y], dim=-1),
            torch.stack([z, zero, -x], dim=-1),
            torch.stack([-y, x, zero], dim=-1),
        ],
        dim=-2,
    )
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device)
    eye = eye.expand(K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def _fk_rotations(frames: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    axis_angle = frames[..., :3]
    rel_rot = rotation_matrices(axis_angle)  # (..., J, 3, 3)
    offsets = torch.as_tensor(skeleton.offsets, dtype=frames.dtype, device=frames.device)

    glob_rot: list[torch.Tensor] = [rel_rot[..., 0, :, :]]
    glob_pos: list[torch.Tensor] = [frames[..., 0, 3:6]]
    for j in range(1, skeleton.joint_count):
        p = skeleton.parents[j]
        glob_rot.append(glob_rot[p] @ rel_rot[..., j, :, :])
        glob_pos.append(glob_pos[p] + (glob_rot[p] @ offsets[j]))
    return torch.stack(glob_pos, dim=-2)


def forward_kinematics(skeleton: Skeleton, motion):
    """Global joint positions (..., J, 3) for frames (..., J, D).

    In ``positions`` mode this is the identity; in ``rotations`` mode global
    positions come from composing rotations down the parent chain, with the
    root translated by its translation channels. Accepts a MotionSequence,
    a numpy array, or a torch tensor; arrays come back as the input kind and
    torch inputs keep their autograd graph.
    """
    if isinstance(motion, MotionSequence):
        motion = motion.frames
    is_numpy = not isinstance(motion, torch.Tensor)
    frames = torch.as_tensor(motion) if is_numpy else motion
    check_frames(skeleton, frames)
    if skeleton.representation_mode == "positions":
        positions = frames
    else:
        if not bool(torch.isfinite(frames.detach()).all()):
            raise InvalidInputError("rotation frames contain non-finite values")
        positions = _fk_rotations(frames, skeleton)
    return positions.numpy() if is_numpy else positions


def detect_foot_contact(
    skeleton: Skeleton,
    positions: np.ndarray,
    fps: float,
    speed_threshold: float,
) -> FootContactLabels:
    """Label foot joints as planted wherever their speed falls below threshold.

    contact[i][k] = 1 iff the displacement of foot joint k between frames i
    and i+1, scaled by fps, is below ``speed_threshold`` (m/s). Columns follow
    sorted foot-joint order.
    """
    positions = np.asarray(positions)
    if positions.ndim != 3 or positions.shape[-1] != 3:
        raise InvalidInputError(f"positions must be (N, J, 3), got {positions.shape}")
    if positions.shape[0] < 2:
        raise InvalidInputError("need at least 2 frames to detect contact")
    if not speed_threshold > 0:
        raise InvalidInputError(f"speed_threshold must be positive, got {speed_threshold}")
    feet = sorted(skeleton.foot_joints)
    if not feet:
        raise InvalidInputError("skeleton has no foot joints")
    foot_pos = positions[:, feet, :]
    speed = np.linalg.norm(foot_pos[1:] - foot_pos[:-1], axis=-1) * fps
    return FootContactLabels((speed < speed_threshold).astype(np.uint8))


def write_motion(path, motion: MotionSequence) -> None:
    """Serialize one motion to the binary ``.mmot`` format."""
    caption = motion.caption.encode("utf-8")
    N, J, D = motion.frames.shape
    header = _HEADER.pack(MMOT_MAGIC, MMOT_VERSION, N, J, D, float(motion.fps), len(caption))
    payload = np.ascontiguousarray(motion.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(caption)
        fh.write(payload)


def read_motion(path) -> MotionSequence:
    """Decode a ``.mmot`` file; raises distinct errors for bad magic,
    unsupported version, and payload truncation."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header ({len(blob)} bytes)")
    magic, version, N, J, D, fps, caption_len = _HEADER.unpack_from(blob)
    if magic != MMOT_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MMOT_MAGIC!r}")
    if version != MMOT_VERSION:
        raise VersionMismatchError(f"{path}: unsupported version {version}")
    offset = _HEADER.size
    caption_bytes = blob[offset : offset + caption_len]
    if len(caption_bytes) != caption_len:
        raise TruncatedPayloadError(f"{path}: caption truncated")
    offset += caption_len
    expected = N * J * D * 4
    body = blob[offset:]
    if len(body) != expected:
        raise TruncatedPayloadError(
            f"{path}: header promises {expected} frame bytes for N*J*D="
            f"{N}*{J}*{D}, found {len(body)}"
        )
    frames = np.frombuffer(body, dtype="<f4").reshape(N, J, D)
    return MotionSequence(frames.copy(), caption_bytes.decode("utf-8"), fps)


def save_motion_bundle(path, motion: MotionSequence, skeleton: Skeleton) -> Path:
    """Write ``<path>`` (.mmot) plus its ``.skel`` sidecar; returns sidecar path."""
    path = Path(path)
    write_motion(path, motion)
    sidecar = path.with_suffix(".skel")
    write_skeleton(sidecar, skeleton)
    return sidecar


def load_motion_bundle(path, skeleton_path=None) -> tuple[MotionSequence, Skeleton]:
    """Read a motion and its skeleton sidecar (``<stem>.skel`` by default)."""
    path = Path(path)
    motion = read_motion(path)
    sidecar = Path(skeleton_path) if skeleton_path else path.with_suffix(".skel")
    skeleton = read_skeleton(sidecar)
    check_frames(skeleton, motion.frames)
    return motion, skeleton
