"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .extract import POOLING, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lslf-extract",
        description="Dump per-layer transformer hidden states into an LSLF embedding file.",
    )
    parser.add_argument("--model", required=True, help="model hub id or local path")
    parser.add_argument("--corpus", type=Path, required=True, help="record-per-line corpus file")
    parser.add_argument("--out", type=Path, required=True, help="output embedding file")
    parser.add_argument("--layers", default="all",
                        help="'all' or comma-separated indices; 0 is the embedding layer output")
    parser.add_argument("--lexical", action="store_true",
                        help="emit only the context-independent wordpiece embeddings")
    parser.add_argument("--pool", choices=POOLING, default="mean",
                        help="subword-to-token pooling")
    parser.add_argument("--max-len", type=int, default=None,
                        help="skip sentences longer than this many subword positions")
    parser.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        result = extract(
            model_id=args.model,
            corpus_path=args.corpus,
            output_path=args.out,
            layers=args.layers,
            lexical=args.lexical,
            pooling=args.pool,
            max_len=args.max_len,
            batch_size=args.batch_size,
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({
        "command": "extract",
        "status": "ok",
        "out": str(args.out),
        "written": len(result.written),
        "skipped": [{"sentence_id": s, "reason": r} for s, r in result.skipped],
        "layers": result.num_layers,
        "dim": result.dim,
    }, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
