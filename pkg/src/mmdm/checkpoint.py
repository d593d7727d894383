"""Versioned binary checkpoint container: JSON header plus named raw arrays.

Layout: magic "MMCK", little-endian u32 version, u32 header length, a JSON
header carrying free-form metadata and the array index (name, dtype, shape),
then each array's bytes in index order. Weights are float32 little-endian;
uint8 arrays carry RNG states and int64 arrays carry counters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np
import torch

from .denoiser import ModelConfig, MotionDenoiser, build_denoiser
from .errors import (
    BadMagicError,
    IncompatibleCheckpointError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .skeleton import Skeleton

MAGIC = b"MMCK"
VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "|u1": np.dtype("u1")}


def _dtype_tag(arr: np.ndarray) -> str:
    for tag, dtype in _DTYPES.items():
        if arr.dtype == dtype:
            return tag
    raise ValueError(f"unsupported checkpoint dtype {arr.dtype}")


def save_container(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    index = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        shape = list(arr.shape)  # ascontiguousarray would promote 0-d to 1-d
        index.append({"name": name, "dtype": _dtype_tag(arr), "shape": shape})
        blobs.append(np.ascontiguousarray(arr).tobytes())
    header = json.dumps({"meta": meta, "arrays": index}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint container (magic {blob[:4]!r})")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: unsupported checkpoint version {version}")
    header_end = 12 + header_len
    if len(blob) < header_end:
        raise TruncatedPayloadError(f"{path}: header truncated")
    header = json.loads(blob[12:header_end].decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for entry in header["arrays"]:
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise TruncatedPayloadError(
                f"{path}: array {entry['name']!r} needs {nbytes} bytes, found {len(chunk)}"
            )
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(blob):
        raise TruncatedPayloadError(f"{path}: {len(blob) - offset} trailing bytes")
    return header["meta"], arrays


def skeleton_to_dict(skeleton: Skeleton) -> dict:
    return {
        "parents": list(skeleton.parents),
        "offsets": np.asarray(skeleton.offsets).tolist(),
        "part_of": list(skeleton.part_of),
        "foot_joints": sorted(skeleton.foot_joints),
        "representation_mode": skeleton.representation_mode,
    }


def skeleton_from_dict(data: dict) -> Skeleton:
    return Skeleton(
        parents=tuple(data["parents"]),
        offsets=np.asarray(data["offsets"], dtype=np.float64),
        part_of=tuple(data["part_of"]),
        foot_joints=frozenset(data["foot_joints"]),
        representation_mode=data["representation_mode"],
    )


def model_arrays(model: MotionDenoiser, prefix: str = "model/") -> dict[str, np.ndarray]:
    return {
        prefix + key: value.detach().cpu().numpy().astype(np.float32, copy=False)
        for key, value in model.state_dict().items()
    }


def save_denoiser(
    path,
    model: MotionDenoiser,
    extra_meta: dict | None = None,
    extra_arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Write a checkpoint that is sufficient to rebuild the model exactly."""
    meta = {
        "kind": "mmdm-checkpoint",
        "model_config": asdict(model.config),
        "skeleton": skeleton_to_dict(model.skeleton),
        "vocabulary": model.vocabulary,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = model_arrays(model)
    if extra_arrays:
        arrays.update(extra_arrays)
    save_container(path, arrays, meta)


def load_denoiser(path) -> tuple[MotionDenoiser, dict, dict[str, np.ndarray]]:
    """Rebuild a denoiser from a checkpoint; returns (model, meta, extra arrays)."""
    meta, arrays = load_container(path)
    if meta.get("kind") != "mmdm-checkpoint":
        raise IncompatibleCheckpointError(f"{path}: not a denoiser checkpoint")
    config = ModelConfig(**meta["model_config"])
    skeleton = skeleton_from_dict(meta["skeleton"])
    model = build_denoiser(config, skeleton, meta["vocabulary"], seed=0)
    state = {}
    extras = {}
    for name, arr in arrays.items():
        if name.startswith("model/"):
            state[name[len("model/"):]] = torch.from_numpy(arr.copy())
        else:
            extras[name] = arr
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise IncompatibleCheckpointError(f"{path}: missing weight arrays {sorted(missing)[:5]}")
    model.load_state_dict(state)
    return model, meta, extras
