"""Writer for the LSLF binary embedding container.

Independent implementation of the format consumed by the probing
package (see its README): magic "LSLF", version u32, then per sentence
id length u32, UTF-8 id, L u32, T u32, d u32, and L*T*d little-endian
float32 values in layer-major, token-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"LSLF"
FORMAT_VERSION = 1


def write_embedding_file(path: str | Path, sentences: Iterable[tuple[str, np.ndarray]]) -> int:
    """Write (sentence_id, values[L, T, d]) pairs; returns the count."""
    count = 0
    parts: list[bytes] = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for sentence_id, values in sentences:
        values = np.asarray(values, dtype="<f4")
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError(f"sentence {sentence_id!r}: values must be (L, T, d), got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError(f"sentence {sentence_id!r}: non-finite value")
        raw_id = sentence_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_id)))
        parts.append(raw_id)
        parts.append(struct.pack("<III", *values.shape))
        parts.append(values.tobytes())
        count += 1
    Path(path).write_bytes(b"".join(parts))
    return count
