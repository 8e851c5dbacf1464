"""Probe input construction: scalar layer mix, self-attentive span pooling,
span concatenation, and a ramp-activated projection.

Two paths compute the same function. ``mix_layers`` / ``pool_span`` /
``featurize`` operate on one example and are the readable reference.
``gather_features`` + ``forward_features`` / ``backward_features`` run a
whole batch through padded arrays and carry the analytic gradients the
trainer needs; tests pin the two paths against each other.

The layer mix applies no per-layer normalization before weighting;
if comparisons against normalized mixes are ever needed, that is the
knob to add here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Span, SpanTarget, TaskDataset
from .embfile import BundleIndex, EmbeddingBundle


def softmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = values - np.max(values, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, grad: np.ndarray, axis: int = -1) -> np.ndarray:
    """Gradient through y = softmax(x): dx = y * (dy - sum(dy * y))."""
    inner = (grad * probs).sum(axis=axis, keepdims=True)
    return probs * (grad - inner)


@dataclass
class ProbeParams:
    """All learnable parameters below the classification head."""

    mix_logits: np.ndarray  # (L,) softmax-normalized mixing weights
    mix_scale: float        # global scale on the mixed representation
    attn_vector: np.ndarray  # (d,) span pooling scorer
    proj_weight: np.ndarray  # (h, d) or (h, 2d)
    proj_bias: np.ndarray    # (h,)

    @property
    def num_layers(self) -> int:
        return self.mix_logits.shape[0]

    @property
    def dim(self) -> int:
        return self.attn_vector.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.proj_weight.shape[0]

    @property
    def num_spans(self) -> int:
        cols = self.proj_weight.shape[1]
        if cols == self.dim:
            return 1
        if cols == 2 * self.dim:
            return 2
        raise ValueError(
            f"proj_weight has {cols} columns, expected {self.dim} or {2 * self.dim}"
        )

    def validate(self) -> None:
        for name, arr in self.named_arrays().items():
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite probe parameter {name}")
        self.num_spans  # raises on inconsistent shapes

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {
            "mix_logits": np.asarray(self.mix_logits, dtype=np.float64),
            "mix_scale": np.asarray(self.mix_scale, dtype=np.float64),
            "attn_vector": np.asarray(self.attn_vector, dtype=np.float64),
            "proj_weight": np.asarray(self.proj_weight, dtype=np.float64),
            "proj_bias": np.asarray(self.proj_bias, dtype=np.float64),
        }


def init_probe_params(
    num_layers: int,
    dim: int,
    hidden_size: int,
    num_spans: int,
    rng: np.random.Generator,
) -> ProbeParams:
    """Zero mix logits, unit scale, and uniform(+-1/sqrt(fan_in)) weights."""
    if num_spans not in (1, 2):
        raise ValueError(f"num_spans must be 1 or 2, got {num_spans}")
    attn_bound = 1.0 / np.sqrt(dim)
    proj_in = num_spans * dim
    proj_bound = 1.0 / np.sqrt(proj_in)
    return ProbeParams(
        mix_logits=np.zeros(num_layers),
        mix_scale=1.0,
        attn_vector=rng.uniform(-attn_bound, attn_bound, size=dim),
        proj_weight=rng.uniform(-proj_bound, proj_bound, size=(hidden_size, proj_in)),
        proj_bias=np.zeros(hidden_size),
    )


# ---------------------------------------------------------------------------
# reference single-example path

def mix_layers(bundle: EmbeddingBundle, params: ProbeParams) -> np.ndarray:
    """Softmax-weighted sum over layers times the global scale; (T, d)."""
    if bundle.num_layers != params.num_layers:
        raise ValueError(
            f"bundle has {bundle.num_layers} layers, params expect {params.num_layers}"
        )
    weights = softmax(np.asarray(params.mix_logits, dtype=np.float64))
    layers = np.asarray(bundle.values, dtype=np.float64)
    return params.mix_scale * np.tensordot(weights, layers, axes=(0, 0))


def pool_span(tokens: np.ndarray, span: Span, params: ProbeParams) -> np.ndarray:
    """Attention-weighted sum of the span's token vectors; (d,)."""
    start, end = span
    if not (0 <= start < end <= tokens.shape[0]):
        raise ValueError(f"span {span} outside token matrix of {tokens.shape[0]} rows")
    window = tokens[start:end]
    scores = window @ np.asarray(params.attn_vector, dtype=np.float64)
    weights = softmax(scores)
    return weights @ window


def featurize(bundle: EmbeddingBundle, target: SpanTarget, params: ProbeParams) -> np.ndarray:
    """Classifier input x = ramp(proj_weight @ concat(pooled spans) + bias); (h,)."""
    if target.num_spans != params.num_spans:
        raise ValueError(
            f"target has {target.num_spans} span(s) but proj_weight expects {params.num_spans}"
        )
    tokens = mix_layers(bundle, params)
    pooled = [pool_span(tokens, target.span1, params)]
    if target.span2 is not None:
        pooled.append(pool_span(tokens, target.span2, params))
    concat = np.concatenate(pooled)
    pre = params.proj_weight @ concat + params.proj_bias
    return np.maximum(pre, 0.0)


# ---------------------------------------------------------------------------
# batched path

@dataclass
class FeatureBatch:
    """Padded per-example span slices ready for the vectorized probe.

    feats is (B, k, L, S, d) with zeros beyond each span's length and
    mask (B, k, S) marking real tokens. Gathering happens once; slicing
    a batch out of a prepared dataset is an index operation.
    """

    feats: np.ndarray
    mask: np.ndarray
    labels: np.ndarray           # (B,) int
    example_ids: list[str]
    gold: list[str | None]

    def __len__(self) -> int:
        return self.feats.shape[0]

    @property
    def num_spans(self) -> int:
        return self.feats.shape[1]

    def take(self, indices: np.ndarray) -> "FeatureBatch":
        return FeatureBatch(
            feats=self.feats[indices],
            mask=self.mask[indices],
            labels=self.labels[indices],
            example_ids=[self.example_ids[int(i)] for i in indices],
            gold=[self.gold[int(i)] for i in indices],
        )


def gather_features(dataset: TaskDataset, embeddings: BundleIndex) -> FeatureBatch:
    """Slice every example's span tokens out of its bundle, zero-padded."""
    examples = dataset.examples
    if not examples:
        raise ValueError(f"task {dataset.name!r} has no examples")
    num_spans = dataset.num_spans
    first = embeddings[examples[0].sentence_id]
    num_layers, dim = first.num_layers, first.dim

    span_lists: list[list[Span]] = []
    max_len = 1
    for target in examples:
        spans = [target.span1] + ([target.span2] if target.span2 is not None else [])
        if len(spans) != num_spans:
            raise ValueError("mixed span arity within one dataset")
        span_lists.append(spans)
        max_len = max(max_len, *(end - start for start, end in spans))

    batch = len(examples)
    feats = np.zeros((batch, num_spans, num_layers, max_len, dim), dtype=np.float64)
    mask = np.zeros((batch, num_spans, max_len), dtype=bool)
    for i, (target, spans) in enumerate(zip(examples, span_lists)):
        bundle = embeddings[target.sentence_id]
        if bundle.num_layers != num_layers or bundle.dim != dim:
            raise ValueError(
                f"bundle {target.sentence_id!r} shape does not match the rest of the task"
            )
        for s, (start, end) in enumerate(spans):
            feats[i, s, :, : end - start] = bundle.values[:, start:end]
            mask[i, s, : end - start] = True

    return FeatureBatch(
        feats=feats,
        mask=mask,
        labels=np.array([t.label for t in examples], dtype=np.int64),
        example_ids=[f"{t.sentence_id}#{i}" for i, t in enumerate(examples)],
        gold=[t.gold for t in examples],
    )


@dataclass
class ProbeCache:
    """Intermediates saved by forward_features for the backward pass."""

    batch: FeatureBatch
    mix_weights: np.ndarray   # (L,)
    unscaled: np.ndarray      # (B, k, S, d) mix before the global scale
    mixed: np.ndarray         # (B, k, S, d)
    attn_weights: np.ndarray  # (B, k, S) zero at padding
    concat: np.ndarray        # (B, k*d)
    pre_act: np.ndarray       # (B, h)
    features: np.ndarray      # (B, h)


def forward_features(batch: FeatureBatch, params: ProbeParams) -> ProbeCache:
    if batch.feats.shape[2] != params.num_layers:
        raise ValueError(
            f"batch has {batch.feats.shape[2]} layers, params expect {params.num_layers}"
        )
    if batch.num_spans != params.num_spans:
        raise ValueError(
            f"batch has {batch.num_spans} span(s) but proj_weight expects {params.num_spans}"
        )
    mix_weights = softmax(np.asarray(params.mix_logits, dtype=np.float64))
    unscaled = np.einsum("l,bklsd->bksd", mix_weights, batch.feats)
    mixed = params.mix_scale * unscaled

    scores = mixed @ np.asarray(params.attn_vector, dtype=np.float64)
    scores = np.where(batch.mask, scores, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.where(batch.mask, np.exp(shifted), 0.0)
    attn_weights = exp / exp.sum(axis=-1, keepdims=True)

    pooled = np.einsum("bks,bksd->bkd", attn_weights, mixed)
    concat = pooled.reshape(len(batch), -1)
    pre_act = concat @ params.proj_weight.T + params.proj_bias
    features = np.maximum(pre_act, 0.0)
    return ProbeCache(
        batch=batch,
        mix_weights=mix_weights,
        unscaled=unscaled,
        mixed=mixed,
        attn_weights=attn_weights,
        concat=concat,
        pre_act=pre_act,
        features=features,
    )


def backward_features(
    cache: ProbeCache, grad_features: np.ndarray, params: ProbeParams
) -> dict[str, np.ndarray]:
    """Backpropagate d(loss)/d(features) to every probe parameter."""
    batch = cache.batch
    num_spans = batch.num_spans
    dim = params.dim

    grad_pre = grad_features * (cache.pre_act > 0.0)
    grad_proj_w = grad_pre.T @ cache.concat
    grad_proj_b = grad_pre.sum(axis=0)
    grad_concat = grad_pre @ params.proj_weight
    grad_pooled = grad_concat.reshape(len(batch), num_spans, dim)

    grad_attn_weights = np.einsum("bkd,bksd->bks", grad_pooled, cache.mixed)
    grad_scores = softmax_backward(cache.attn_weights, grad_attn_weights)
    grad_mixed = cache.attn_weights[..., None] * grad_pooled[:, :, None, :]
    grad_mixed += grad_scores[..., None] * np.asarray(params.attn_vector, dtype=np.float64)
    grad_attn_vector = np.einsum("bks,bksd->d", grad_scores, cache.mixed)

    grad_mix_scale = float(np.sum(grad_mixed * cache.unscaled))
    grad_unscaled = params.mix_scale * grad_mixed
    grad_mix_weights = np.einsum("bksd,bklsd->l", grad_unscaled, batch.feats)
    grad_mix_logits = softmax_backward(cache.mix_weights, grad_mix_weights)

    return {
        "mix_logits": grad_mix_logits,
        "mix_scale": np.asarray(grad_mix_scale),
        "attn_vector": grad_attn_vector,
        "proj_weight": grad_proj_w,
        "proj_bias": grad_proj_b,
    }
