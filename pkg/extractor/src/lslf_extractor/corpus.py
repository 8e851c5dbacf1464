"""Reader for record-per-line corpus files.

Only ``sentence_id`` and ``tokens`` matter here; other fields (gold
annotation, candidate spans) belong to the task-construction side and
are ignored.
"""

from __future__ import annotations

import json
from pathlib import Path


class CorpusError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


def read_corpus(path: str | Path) -> list[tuple[str, list[str]]]:
    sentences: list[tuple[str, list[str]]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from None
            if "sentence_id" not in record or "tokens" not in record:
                raise CorpusError("record needs 'sentence_id' and 'tokens'", lineno)
            sentence_id = record["sentence_id"]
            tokens = record["tokens"]
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise CorpusError("'tokens' must be a list of strings", lineno)
            if not tokens:
                raise CorpusError("empty token list", lineno)
            if sentence_id in seen:
                raise CorpusError(f"duplicate sentence id {sentence_id!r}", lineno)
            seen.add(sentence_id)
            sentences.append((sentence_id, tokens))
    return sentences
