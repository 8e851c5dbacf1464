"""Versioned binary checkpoints for the probe and head parameters.

Layout: magic b"LSLC", version u32, array count u32, then per array
name_len u32 | name utf-8 | ndim u32 | dims u32 each | float64 bytes,
little-endian throughout. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .lsl import LslHead, Model
from .probe import ProbeParams

MAGIC = b"LSLC"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, model: Model) -> None:
    arrays = model.named_arrays()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        # asarray keeps 0-d scalars 0-d; tobytes already emits C order
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def _load_arrays(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 12
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = 8 * int(np.prod(shape, dtype=np.int64)) if ndim else 8
        arrays[name] = np.frombuffer(data[offset : offset + size], dtype="<f8").reshape(shape).copy()
        offset += size
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing byte(s)")
    return arrays


def load_checkpoint(path: str | Path) -> Model:
    arrays = _load_arrays(Path(path).read_bytes())
    expected = {"mix_logits", "mix_scale", "attn_vector", "proj_weight", "proj_bias", "head_weight"}
    missing = expected - set(arrays)
    if missing:
        raise CheckpointError(f"checkpoint missing arrays {sorted(missing)}")
    probe = ProbeParams(
        mix_logits=arrays["mix_logits"],
        mix_scale=float(arrays["mix_scale"]),
        attn_vector=arrays["attn_vector"],
        proj_weight=arrays["proj_weight"],
        proj_bias=arrays["proj_bias"],
    )
    model = Model(probe=probe, head=LslHead(weight=arrays["head_weight"]))
    model.validate()
    return model
