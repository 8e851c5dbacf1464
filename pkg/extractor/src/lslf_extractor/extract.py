"""Per-layer hidden-state extraction with subword-to-token alignment.

Sentences arrive pre-tokenized; each word's vector per layer is pooled
(first or mean) over the subword positions the tokenizer assigned to
it. Layer index 0 is the encoder's embedding-layer output and 1..L its
transformer layers. Lexical mode bypasses the encoder entirely and
looks up the context-independent input-embedding table, so identical
word types always get identical vectors.

Sentences that exceed the length budget, or contain a word the
tokenizer maps to zero subwords, are skipped and logged by id; output
order follows input order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .corpus import read_corpus
from .writer import write_embedding_file

logger = logging.getLogger("lslf_extractor")

POOLING = ("mean", "first")


@dataclass
class ExtractionResult:
    output_path: Path
    written: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    num_layers: int = 0
    dim: int = 0


def parse_layer_spec(spec: str, available: int) -> list[int]:
    """"all" or comma-separated indices into [0, available)."""
    if spec == "all":
        return list(range(available))
    try:
        layers = [int(part) for part in spec.split(",")]
    except ValueError:
        raise ValueError(f"bad layer spec {spec!r}: use 'all' or comma-separated integers") from None
    if not layers:
        raise ValueError("empty layer spec")
    for layer in layers:
        if not 0 <= layer < available:
            raise ValueError(f"layer {layer} out of range [0, {available})")
    return layers


def _pool(vectors: np.ndarray, pooling: str) -> np.ndarray:
    # vectors: (num_subwords, dim)
    if pooling == "first":
        return vectors[0]
    return vectors.mean(axis=0)


def _word_groups(word_ids: list[int | None], num_words: int) -> list[list[int]] | None:
    groups: list[list[int]] = [[] for _ in range(num_words)]
    for position, word in enumerate(word_ids):
        if word is not None:
            groups[word].append(position)
    if any(not group for group in groups):
        return None
    return groups


def extract(
    model_id: str,
    corpus_path: str | Path,
    output_path: str | Path,
    layers: str = "all",
    lexical: bool = False,
    pooling: str = "mean",
    max_len: int | None = None,
    batch_size: int = 8,
) -> ExtractionResult:
    """Run the encoder over a corpus and write an LSLF embedding file."""
    if pooling not in POOLING:
        raise ValueError(f"pooling must be one of {POOLING}, got {pooling!r}")
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)
    model.eval()

    position_limit = int(getattr(model.config, "max_position_embeddings", 512))
    budget = position_limit if max_len is None else min(max_len, position_limit)

    sentences = read_corpus(corpus_path)
    result = ExtractionResult(output_path=Path(output_path))

    # alignment pre-pass: measure lengths and subword groups sentence by sentence
    todo: list[tuple[str, list[str], list[list[int]]]] = []
    for sentence_id, words in sentences:
        encoding = tokenizer(words, is_split_into_words=True)
        length = len(encoding["input_ids"])
        if length > budget:
            logger.warning("skipping %s: %d subword positions exceed max length %d",
                           sentence_id, length, budget)
            result.skipped.append((sentence_id, "too long"))
            continue
        groups = _word_groups(encoding.word_ids(), len(words))
        if groups is None:
            logger.warning("skipping %s: a token produced no subwords", sentence_id)
            result.skipped.append((sentence_id, "unalignable token"))
            continue
        todo.append((sentence_id, words, groups))

    if lexical:
        selected = [0]
    else:
        total_layers = int(model.config.num_hidden_layers) + 1  # embedding output included
        selected = parse_layer_spec(layers, total_layers)

    bundles: list[tuple[str, np.ndarray]] = []
    embedding_table = model.get_input_embeddings()
    with torch.no_grad():
        for start in range(0, len(todo), batch_size):
            chunk = todo[start : start + batch_size]
            encoding = tokenizer(
                [words for _, words, _ in chunk],
                is_split_into_words=True,
                padding=True,
                return_tensors="pt",
            )
            if lexical:
                # context-independent wordpiece embeddings only
                stack = embedding_table(encoding["input_ids"]).unsqueeze(0)
            else:
                output = model(**encoding, output_hidden_states=True)
                stack = torch.stack([output.hidden_states[i] for i in selected])
            # stack: (L, batch, seq, dim)
            stack = stack.cpu().numpy().astype(np.float32)
            for b, (sentence_id, words, groups) in enumerate(chunk):
                values = np.empty((stack.shape[0], len(words), stack.shape[3]), dtype=np.float32)
                for w, positions in enumerate(groups):
                    vectors = stack[:, b, positions, :]  # (L, subwords, dim)
                    for l in range(vectors.shape[0]):
                        values[l, w] = _pool(vectors[l], pooling)
                bundles.append((sentence_id, values))
                result.written.append(sentence_id)

    if bundles:
        result.num_layers = bundles[0][1].shape[0]
        result.dim = bundles[0][1].shape[2]
    write_embedding_file(output_path, bundles)
    return result
