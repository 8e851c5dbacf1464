"""Layer mixing, span pooling, and featurization."""

import numpy as np
import pytest

from lslprobe.data import SpanTarget, TaskDataset
from lslprobe.embfile import BundleIndex, EmbeddingBundle
from lslprobe.probe import (
    ProbeParams,
    featurize,
    forward_features,
    gather_features,
    init_probe_params,
    mix_layers,
    pool_span,
)


def _params(num_layers=2, dim=4, hidden=3, num_spans=1, seed=0):
    return init_probe_params(num_layers, dim, hidden, num_spans, np.random.default_rng(seed))


def _bundle(values):
    return EmbeddingBundle("s0", np.asarray(values, dtype=np.float32))


class TestMixLayers:
    def test_single_layer_ignores_logits(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((1, 3, 4)).astype(np.float32)
        params = _params(num_layers=1)
        params.mix_logits[:] = 17.0  # softmax of a singleton is 1 regardless
        params.mix_scale = 2.5
        out = mix_layers(_bundle(values), params)
        np.testing.assert_allclose(out, 2.5 * values[0].astype(np.float64), rtol=1e-7)

    def test_opposite_layers_cancel(self):
        rng = np.random.default_rng(1)
        layer = rng.standard_normal((3, 4)).astype(np.float32)
        values = np.stack([layer, -layer])
        params = _params()
        params.mix_logits[:] = 0.7  # equal weights
        out = mix_layers(_bundle(values), params)
        np.testing.assert_allclose(out, 0.0, atol=1e-7)

    def test_log3_weighting(self):
        # softmax(ln 3, 0) = (3/4, 1/4); constants 1 and 5 with scale 2
        # give 2 * (0.75 * 1 + 0.25 * 5) = 4 everywhere
        values = np.stack([np.full((2, 3), 1.0), np.full((2, 3), 5.0)]).astype(np.float32)
        params = _params(num_layers=2, dim=3)
        params.mix_logits = np.array([np.log(3.0), 0.0])
        params.mix_scale = 2.0
        out = mix_layers(_bundle(values), params)
        np.testing.assert_allclose(out, 4.0, rtol=1e-12)

    def test_layer_count_mismatch(self):
        with pytest.raises(ValueError, match="layers"):
            mix_layers(_bundle(np.zeros((3, 2, 4))), _params(num_layers=2))

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((3, 2, 4)).astype(np.float32)
        params = _params(num_layers=3)
        params.mix_logits = rng.standard_normal(3)
        base = mix_layers(_bundle(values), params)
        params.mix_logits = params.mix_logits + 11.3
        shifted = mix_layers(_bundle(values), params)
        np.testing.assert_allclose(base, shifted, rtol=1e-9)


class TestPoolSpan:
    def test_single_token_is_identity(self):
        rng = np.random.default_rng(3)
        tokens = rng.standard_normal((5, 4))
        params = _params()
        out = pool_span(tokens, (2, 3), params)
        np.testing.assert_allclose(out, tokens[2], rtol=1e-12)

    def test_zero_scorer_means_uniform(self):
        rng = np.random.default_rng(4)
        tokens = rng.standard_normal((5, 4))
        params = _params()
        params.attn_vector = np.zeros(4)
        out = pool_span(tokens, (1, 4), params)
        np.testing.assert_allclose(out, tokens[1:4].mean(axis=0), rtol=1e-12)

    def test_identical_tokens_return_that_vector(self):
        token = np.arange(4.0)
        tokens = np.stack([token, token])
        out = pool_span(tokens, (0, 2), _params())
        np.testing.assert_allclose(out, token, rtol=1e-12)

    def test_empty_span_rejected(self):
        with pytest.raises(ValueError, match="span"):
            pool_span(np.zeros((3, 4)), (2, 2), _params())

    def test_output_in_convex_hull(self):
        # attention weights are a convex combination; check coordinates
        # stay inside the span's per-dimension envelope
        rng = np.random.default_rng(5)
        for _ in range(50):
            tokens = rng.standard_normal((6, 3))
            params = _params(dim=3)
            params.attn_vector = rng.standard_normal(3)
            start = int(rng.integers(0, 4))
            end = int(rng.integers(start + 1, 7))
            out = pool_span(tokens, (start, end), params)
            window = tokens[start:end]
            assert np.all(out <= window.max(axis=0) + 1e-12)
            assert np.all(out >= window.min(axis=0) - 1e-12)


class TestFeaturize:
    def test_two_span_concatenation_shape(self):
        rng = np.random.default_rng(6)
        bundle = _bundle(rng.standard_normal((2, 5, 4)))
        params = _params(num_spans=2, hidden=7)
        target = SpanTarget("s0", (0, 2), span2=(3, 5))
        x = featurize(bundle, target, params)
        assert x.shape == (7,)
        assert np.all(x >= 0.0)  # ramp output

    def test_arity_mismatch_rejected(self):
        rng = np.random.default_rng(7)
        bundle = _bundle(rng.standard_normal((2, 5, 4)))
        with pytest.raises(ValueError, match="span"):
            featurize(bundle, SpanTarget("s0", (0, 2)), _params(num_spans=2))

    def test_matches_batched_path(self):
        rng = np.random.default_rng(8)
        index = BundleIndex()
        examples = []
        for i in range(6):
            num_tokens = int(rng.integers(2, 6))
            index.add(
                EmbeddingBundle(
                    f"s{i}", rng.standard_normal((3, num_tokens, 4)).astype(np.float32)
                )
            )
            start = int(rng.integers(0, num_tokens - 1))
            end = int(rng.integers(start + 1, num_tokens + 1))
            examples.append(SpanTarget(f"s{i}", (start, end), label=1, gold="g"))
        dataset = TaskDataset(name="t", split="train", examples=examples)
        params = _params(num_layers=3, dim=4, hidden=5)
        params.mix_logits = rng.standard_normal(3)
        params.mix_scale = 1.3
        params.attn_vector = rng.standard_normal(4)

        batch = gather_features(dataset, index)
        stacked = forward_features(batch, params).features
        for i, target in enumerate(examples):
            single = featurize(index[target.sentence_id], target, params)
            np.testing.assert_allclose(stacked[i], single, rtol=1e-10, atol=1e-12)

    def test_matches_batched_path_two_spans(self):
        rng = np.random.default_rng(9)
        index = BundleIndex()
        examples = []
        for i in range(5):
            num_tokens = 6
            index.add(
                EmbeddingBundle(
                    f"s{i}", rng.standard_normal((2, num_tokens, 3)).astype(np.float32)
                )
            )
            examples.append(SpanTarget(f"s{i}", (0, 2), span2=(3, 6), label=1, gold="g"))
        dataset = TaskDataset(name="t", split="train", examples=examples)
        params = _params(num_layers=2, dim=3, hidden=4, num_spans=2, seed=1)
        params.attn_vector = rng.standard_normal(3)

        batch = gather_features(dataset, index)
        stacked = forward_features(batch, params).features
        for i, target in enumerate(examples):
            single = featurize(index[target.sentence_id], target, params)
            np.testing.assert_allclose(stacked[i], single, rtol=1e-10, atol=1e-12)
