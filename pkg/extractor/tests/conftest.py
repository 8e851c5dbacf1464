"""Shared fixture: a tiny local BERT-style encoder with a WordPiece vocab.

The sandbox has no route to a model hub, so tests exercise the full
from_pretrained path against a directory built here. Weights are random
but deterministic; the extraction contracts under test (format,
alignment, pooling, lexical lookup) do not depend on trained weights.
"""

import json

import pytest
import torch


WORDS = [
    "the", "a", "cat", "dog", "sat", "ran", "on", "under", "mat", "tree",
    "bird", "fish", "big", "small", "red", "blue", "un", "##believ", "##able",
    "vin", "##ken", "jump", "##ed", "quick", "##ly",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    from tokenizers import Tokenizer, models, pre_tokenizers, processors
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    directory = tmp_path_factory.mktemp("tiny-bert")
    vocab = {w: i for i, w in enumerate(["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + WORDS)}
    tokenizer = Tokenizer(models.WordPiece(vocab, unk_token="[UNK]", max_input_chars_per_word=100))
    tokenizer.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    tokenizer.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]", sep_token="[SEP]",
    )

    config = BertConfig(
        vocab_size=len(vocab), hidden_size=16, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=32, max_position_embeddings=40,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(directory)
    fast.save_pretrained(directory)
    return directory


@pytest.fixture()
def toy_corpus(tmp_path):
    """20 varied sentences with repeated word types and multi-piece words."""
    sentence_words = [
        ["the", "cat", "sat", "on", "the", "mat"],
        ["a", "dog", "ran", "under", "a", "tree"],
        ["the", "bird", "sat", "on", "a", "tree"],
        ["a", "fish", "ran", "under", "the", "mat"],
        ["the", "big", "cat", "jumped", "quickly"],
        ["a", "small", "dog", "sat", "quickly"],
        ["the", "red", "bird", "jumped", "on", "the", "mat"],
        ["a", "blue", "fish", "sat", "under", "a", "tree"],
        ["vinken", "sat", "on", "the", "mat"],
        ["the", "unbelievable", "cat", "ran"],
        ["a", "cat", "and", "a", "dog"],
        ["the", "dog", "jumped", "under", "the", "tree"],
        ["a", "bird", "ran", "on", "a", "mat"],
        ["the", "fish", "jumped", "quickly"],
        ["vinken", "ran", "under", "a", "tree"],
        ["the", "small", "red", "cat", "sat"],
        ["a", "big", "blue", "dog", "ran"],
        ["unbelievable", "vinken", "jumped"],
        ["the", "mat", "sat", "on", "a", "cat"],
        ["a", "tree", "ran", "under", "the", "dog"],
    ]
    path = tmp_path / "corpus.jsonl"
    lines = [
        json.dumps({"sentence_id": f"s{i}", "tokens": words})
        for i, words in enumerate(sentence_words)
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
