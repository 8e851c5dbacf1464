"""Transformer hidden-state extraction into the LSLF embedding format."""

from .corpus import CorpusError, read_corpus
from .extract import ExtractionResult, extract, parse_layer_spec
from .writer import write_embedding_file

__version__ = "0.1.0"

__all__ = [
    "CorpusError",
    "ExtractionResult",
    "extract",
    "parse_layer_spec",
    "read_corpus",
    "write_embedding_file",
]
