"""Skeleton data model: joint hierarchy, five-part partition, sidecar text format.

A skeleton is an immutable joint tree. Joint 0 is always the root (parent -1),
and every joint is assigned to one of the five canonical body parts. Frames
that animate a skeleton live in :mod:`mmdm.motion`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSkeletonError, DecodeError

PART_NAMES = ("Torso", "LeftArm", "RightArm", "LeftLeg", "RightLeg")

#: Frame feature width per representation mode. In ``rotations`` mode each
#: joint carries a 3-vector axis-angle plus 3 translation channels; the
#: translation channels are read only at the root joint.
MODE_DIMS = {"positions": 3, "rotations": 6}

SIDECAR_MAGIC = "MMSKEL"
SIDECAR_VERSION = 1


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy with bone offsets and the five-part body partition.

    Attributes:
        parents: parent index per joint; exactly one root with parent -1 at
            index 0, and parents[j] < j (topological order).
        offsets: (J, 3) bone offsets in meters, offset of joint j relative to
            its parent. The root's offset is ignored by forward kinematics.
        part_of: body-part name per joint, drawn from PART_NAMES.
        foot_joints: joint indices treated as feet by the contact detector.
        representation_mode: "positions" or "rotations"; fixes the frame
            feature width D (see MODE_DIMS).
    """

    parents: tuple[int, ...]
    offsets: np.ndarray
    part_of: tuple[str, ...]
    foot_joints: frozenset[int] = field(default_factory=frozenset)
    representation_mode: str = "positions"

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "part_of", tuple(self.part_of))
        object.__setattr__(self, "foot_joints", frozenset(int(j) for j in self.foot_joints))
        self._validate()

    def _validate(self):
        J = len(self.parents)
        if J < 1:
            raise InvalidSkeletonError("skeleton needs at least one joint")
        if self.offsets.shape != (J, 3):
            raise InvalidSkeletonError(
                f"offsets shape {self.offsets.shape} does not match joint count {J}"
            )
        if not np.all(np.isfinite(self.offsets)):
            raise InvalidSkeletonError("offsets must be finite")
        roots = [j for j, p in enumerate(self.parents) if p == -1]
        if roots != [0]:
            raise InvalidSkeletonError(
                f"expected exactly one root with parent -1 at index 0, got roots {roots}"
            )
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < J:
                raise InvalidSkeletonError(f"joint {j} has parent {p} outside [0, {J})")
            if p >= j:
                raise InvalidSkeletonError(
                    f"joint {j} has parent {p} >= {j}; joints must be in topological order"
                )
        if len(self.part_of) != J:
            raise InvalidSkeletonError(
                f"part_of has {len(self.part_of)} entries for {J} joints"
            )
        for j, part in enumerate(self.part_of):
            if part not in PART_NAMES:
                raise InvalidSkeletonError(f"joint {j} assigned to unknown part {part!r}")
        for j in self.foot_joints:
            if not 0 <= j < J:
                raise InvalidSkeletonError(f"foot joint {j} outside [0, {J})")
        if self.representation_mode not in MODE_DIMS:
            raise InvalidSkeletonError(
                f"unknown representation mode {self.representation_mode!r}"
            )

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def frame_dim(self) -> int:
        """Feature width D of one joint in one frame for this mode."""
        return MODE_DIMS[self.representation_mode]

    def with_mode(self, mode: str) -> "Skeleton":
        return Skeleton(self.parents, self.offsets, self.part_of, self.foot_joints, mode)


def part_index_sets(skeleton: Skeleton) -> dict[str, list[int]]:
    """Partition joint indices into the five body parts.

    Returns an ordered map PART_NAMES -> joint indices in skeleton declaration
    order. Raises InvalidSkeletonError if any part is empty, since the
    body-part pipeline needs five distinct regions.
    """
    parts: dict[str, list[int]] = {name: [] for name in PART_NAMES}
    for j, part in enumerate(skeleton.part_of):
        parts[part].append(j)
    empty = [name for name, joints in parts.items() if not joints]
    if empty:
        raise InvalidSkeletonError(f"body parts without joints: {empty}")
    return parts


def toy_skeleton(mode: str = "positions") -> Skeleton:
    """Default 9-joint skeleton spanning all five body parts.

    Layout (parent in brackets): 0 pelvis[-1], 1 spine[0], 2 head[1],
    3 left_arm[1], 4 right_arm[1], 5 left_knee[0], 6 left_foot[5],
    7 right_knee[0], 8 right_foot[7]. Feet are joints 6 and 8.
    """
    parents = (-1, 0, 1, 1, 1, 0, 5, 0, 7)
    offsets = np.array(
        [
            [0.0, 0.90, 0.0],   # pelvis (rest height; FK ignores the root offset)
            [0.0, 0.25, 0.0],   # spine
            [0.0, 0.25, 0.0],   # head
            [-0.30, 0.15, 0.0], # left_arm
            [0.30, 0.15, 0.0],  # right_arm
            [-0.10, -0.45, 0.0],# left_knee
            [0.0, -0.45, 0.0],  # left_foot
            [0.10, -0.45, 0.0], # right_knee
            [0.0, -0.45, 0.0],  # right_foot
        ]
    )
    part_of = (
        "Torso", "Torso", "Torso",
        "LeftArm", "RightArm",
        "LeftLeg", "LeftLeg", "RightLeg", "RightLeg",
    )
    return Skeleton(parents, offsets, part_of, frozenset({6, 8}), mode)


def rest_pose(skeleton: Skeleton) -> np.ndarray:
    """(J, 3) joint positions with identity rotations, root placed at its offset.

    The root offset doubles as the rest root position so generated motions
    stand at a sensible height.
    """
    J = skeleton.joint_count
    pos = np.zeros((J, 3))
    pos[0] = skeleton.offsets[0]
    for j in range(1, J):
        pos[j] = pos[skeleton.parents[j]] + skeleton.offsets[j]
    return pos


def chain_skeleton(n_joints: int, offset=(1.0, 0.0, 0.0), mode: str = "rotations") -> Skeleton:
    """Simple serial chain used by kinematics tests; all joints in the torso
    except the tip, which is marked as a foot so contact code has a target."""
    parents = tuple([-1] + list(range(n_joints - 1)))
    offsets = np.tile(np.asarray(offset, dtype=np.float64), (n_joints, 1))
    offsets[0] = 0.0
    part_of = tuple(["Torso"] * n_joints)
    return Skeleton(parents, offsets, part_of, frozenset({n_joints - 1}), mode)


def write_skeleton(path, skeleton: Skeleton) -> None:
    """Write the structured-text sidecar describing a skeleton."""
    lines = [f"{SIDECAR_MAGIC} {SIDECAR_VERSION}"]
    lines.append(f"mode {skeleton.representation_mode}")
    lines.append(f"joints {skeleton.joint_count}")
    for j in range(skeleton.joint_count):
        ox, oy, oz = (float(v) for v in skeleton.offsets[j])
        lines.append(
            f"joint {j} {skeleton.parents[j]} {ox!r} {oy!r} {oz!r} {skeleton.part_of[j]}"
        )
    feet = " ".join(str(j) for j in sorted(skeleton.foot_joints))
    lines.append(f"feet {feet}".rstrip())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_skeleton(path) -> Skeleton:
    """Parse a sidecar written by :func:`write_skeleton`."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw:
        raise DecodeError(f"{path}: empty skeleton file")
    head = raw[0].split()
    if head[0] != SIDECAR_MAGIC:
        raise DecodeError(f"{path}: bad magic {head[0]!r}, expected {SIDECAR_MAGIC!r}")
    if len(head) != 2 or int(head[1]) != SIDECAR_VERSION:
        raise DecodeError(f"{path}: unsupported skeleton version {head[1:]}")
    mode = "positions"
    joint_count = None
    rows: dict[int, tuple[int, tuple[float, float, float], str]] = {}
    feet: list[int] = []
    for line in raw[1:]:
        fields = line.split()
        key = fields[0]
        if key == "mode":
            mode = fields[1]
        elif key == "joints":
            joint_count = int(fields[1])
        elif key == "joint":
            j = int(fields[1])
            rows[j] = (
                int(fields[2]),
                (float(fields[3]), float(fields[4]), float(fields[5])),
                fields[6],
            )
        elif key == "feet":
            feet = [int(v) for v in fields[1:]]
        else:
            raise DecodeError(f"{path}: unknown skeleton record {key!r}")
    if joint_count is None or sorted(rows) != list(range(joint_count)):
        raise DecodeError(f"{path}: joint records do not cover 0..{joint_count}")
    parents = tuple(rows[j][0] for j in range(joint_count))
    offsets = np.array([rows[j][1] for j in range(joint_count)])
    part_of = tuple(rows[j][2] for j in range(joint_count))
    try:
        return Skeleton(parents, offsets, part_of, frozenset(feet), mode)
    except InvalidSkeletonError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
