"""Binary container for precomputed contextual-embedding features.

Layout (all integers little-endian u32):

    magic  b"LSLF"
    version u32 (currently 1)
    then, repeated until EOF, one record per sentence:
        id_len u32
        id     id_len bytes, UTF-8
        L, T, d  u32 each
        values L*T*d IEEE-754 binary32, layer-major then token-major

Readers validate shapes and finiteness up front so downstream code can
assume every bundle is well formed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"LSLF"
FORMAT_VERSION = 1


class EmbeddingFileError(Exception):
    """Raised when an embedding file is malformed.

    Carries the byte offset of the failure and, when known, the sentence
    record being parsed.
    """

    def __init__(self, message: str, *, offset: int, sentence_id: str | None = None):
        loc = f"offset {offset}"
        if sentence_id is not None:
            loc = f"sentence {sentence_id!r}, {loc}"
        super().__init__(f"{message} ({loc})")
        self.offset = offset
        self.sentence_id = sentence_id


@dataclass(frozen=True)
class EmbeddingBundle:
    """Per-sentence feature tensor, shape (layers, tokens, dim)."""

    sentence_id: str
    values: np.ndarray  # float32, shape (L, T, d)

    @property
    def num_layers(self) -> int:
        return self.values.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def validate(self) -> None:
        if self.values.ndim != 3:
            raise ValueError(f"bundle {self.sentence_id!r}: expected 3-d values")
        if min(self.values.shape) < 1:
            raise ValueError(f"bundle {self.sentence_id!r}: zero-size axis {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError(f"bundle {self.sentence_id!r}: non-finite value")


@dataclass
class BundleIndex:
    """Validated bundles keyed by sentence id."""

    bundles: dict[str, EmbeddingBundle] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bundles)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.bundles

    def __getitem__(self, sentence_id: str) -> EmbeddingBundle:
        return self.bundles[sentence_id]

    def add(self, bundle: EmbeddingBundle) -> None:
        if bundle.sentence_id in self.bundles:
            raise ValueError(f"duplicate sentence id {bundle.sentence_id!r}")
        self.bundles[bundle.sentence_id] = bundle

    def ids(self) -> list[str]:
        return list(self.bundles)


def _read_exact(data: bytes, offset: int, n: int, what: str, sentence_id: str | None) -> bytes:
    if offset + n > len(data):
        raise EmbeddingFileError(
            f"unexpected end of file while reading {what} "
            f"(need {n} bytes, have {len(data) - offset})",
            offset=offset,
            sentence_id=sentence_id,
        )
    return data[offset : offset + n]


def load_embeddings(path: str | Path) -> BundleIndex:
    """Load and validate every bundle in the file, indexed by sentence id."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise EmbeddingFileError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    (version,) = struct.unpack_from("<I", _read_exact(data, 4, 4, "version", None), 0)
    if version != FORMAT_VERSION:
        raise EmbeddingFileError(f"unsupported format version {version}", offset=4)

    index = BundleIndex()
    offset = 8
    while offset < len(data):
        record_start = offset
        (id_len,) = struct.unpack("<I", _read_exact(data, offset, 4, "id length", None))
        offset += 4
        raw_id = _read_exact(data, offset, id_len, "sentence id", None)
        try:
            sentence_id = raw_id.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EmbeddingFileError(f"sentence id is not valid UTF-8: {exc}", offset=offset) from None
        offset += id_len
        dims_raw = _read_exact(data, offset, 12, "shape header", sentence_id)
        num_layers, num_tokens, dim = struct.unpack("<III", dims_raw)
        offset += 12
        if min(num_layers, num_tokens, dim) < 1:
            raise EmbeddingFileError(
                f"non-positive shape ({num_layers}, {num_tokens}, {dim})",
                offset=record_start,
                sentence_id=sentence_id,
            )
        count = num_layers * num_tokens * dim
        payload = _read_exact(data, offset, 4 * count, f"{count} float32 values", sentence_id)
        values = np.frombuffer(payload, dtype="<f4").reshape(num_layers, num_tokens, dim)
        if not np.isfinite(values).all():
            bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
            raise EmbeddingFileError(
                f"non-finite value at flat index {bad}",
                offset=offset + 4 * bad,
                sentence_id=sentence_id,
            )
        offset += 4 * count
        bundle = EmbeddingBundle(sentence_id=sentence_id, values=values.copy())
        try:
            index.add(bundle)
        except ValueError as exc:
            raise EmbeddingFileError(str(exc), offset=record_start, sentence_id=sentence_id) from None
    return index


def write_embeddings(path: str | Path, bundles: Iterable[EmbeddingBundle]) -> None:
    """Serialize bundles in iteration order. Values are stored as float32."""
    parts: list[bytes] = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for bundle in bundles:
        bundle.validate()
        raw_id = bundle.sentence_id.encode("utf-8")
        num_layers, num_tokens, dim = bundle.values.shape
        parts.append(struct.pack("<I", len(raw_id)))
        parts.append(raw_id)
        parts.append(struct.pack("<III", num_layers, num_tokens, dim))
        parts.append(np.ascontiguousarray(bundle.values, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))
