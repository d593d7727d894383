"""Stick-figure rendering of motion files to uncompressed PPM rasters.

One image per frame, orthographic projection onto a coordinate plane, bones
drawn as line segments color-coded by body part. Pixel bounds are computed
over the whole motion so a static motion renders to identical images.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .motion import MotionSequence, forward_kinematics
from .skeleton import Skeleton

PART_COLORS = {
    "Torso": (214, 69, 65),
    "LeftArm": (65, 131, 215),
    "RightArm": (63, 195, 128),
    "LeftLeg": (244, 179, 80),
    "RightLeg": (155, 89, 182),
}
BACKGROUND = (255, 255, 255)

_AXES = {"xy": (0, 1), "xz": (0, 2), "zy": (2, 1)}


def motion_bounds(positions: np.ndarray, axes: str = "xy", margin: float = 0.08):
    """(lo, hi) 2-vectors covering every frame, padded by a relative margin."""
    ax = _AXES[axes]
    pts = positions[..., ax].reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    return lo - margin * span, hi + margin * span


def project_to_pixels(
    positions: np.ndarray, bounds, size: tuple[int, int], axes: str = "xy"
) -> np.ndarray:
    """Map (..., J, 3) positions to integer (row, col) pixel coordinates."""
    lo, hi = bounds
    height, width = size
    ax = _AXES[axes]
    pts = positions[..., ax]
    unit = (pts - lo) / (hi - lo)
    cols = np.clip(np.rint(unit[..., 0] * (width - 1)), 0, width - 1)
    rows = np.clip(np.rint((1.0 - unit[..., 1]) * (height - 1)), 0, height - 1)
    return np.stack([rows, cols], axis=-1).astype(np.int64)


def _draw_line(img: np.ndarray, r0: int, c0: int, r1: int, c1: int, color) -> None:
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr - dc
    r, c = r0, c0
    while True:
        img[r, c] = color
        if r == r1 and c == c1:
            return
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc


def _draw_square(img: np.ndarray, r: int, c: int, color, radius: int = 1) -> None:
    h, w = img.shape[:2]
    img[max(0, r - radius): min(h, r + radius + 1), max(0, c - radius): min(w, c + radius + 1)] = color


def rasterize_frame(
    pixels: np.ndarray, skeleton: Skeleton, size: tuple[int, int]
) -> np.ndarray:
    """Draw one stick figure; bone color follows the child joint's part."""
    img = np.full((*size, 3), BACKGROUND, dtype=np.uint8)
    for j in range(1, skeleton.joint_count):
        parent = skeleton.parents[j]
        color = PART_COLORS[skeleton.part_of[j]]
        _draw_line(img, *pixels[parent], *pixels[j], color)
    for j in range(skeleton.joint_count):
        _draw_square(img, *pixels[j], PART_COLORS[skeleton.part_of[j]])
    return img


def write_ppm(path, img: np.ndarray) -> None:
    """Binary P6 PPM: trivially parseable, no compression."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError("image must be (H, W, 3) uint8")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P6":
            raise InvalidInputError(f"{path}: not a binary PPM")
        width, height = (int(v) for v in fh.readline().split())
        fh.readline()  # max value
        data = fh.read(width * height * 3)
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def render_motion(
    motion: MotionSequence,
    skeleton: Skeleton,
    out_dir,
    size: tuple[int, int] = (240, 320),
    axes: str = "xy",
) -> list[Path]:
    """Write frame_00000.ppm ... frame_{N-1:05d}.ppm; returns the paths."""
    if axes not in _AXES:
        raise InvalidInputError(f"unknown projection plane {axes!r}; use one of {list(_AXES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    positions = forward_kinematics(skeleton, motion.frames)
    bounds = motion_bounds(positions, axes)
    pixels = project_to_pixels(positions, bounds, size, axes)
    paths = []
    for i in range(motion.length):
        path = out_dir / f"frame_{i:05d}.ppm"
        write_ppm(path, rasterize_frame(pixels[i], skeleton, size))
        paths.append(path)
    return paths
