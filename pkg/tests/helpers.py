"""Shared oracles and builders used by unit and acceptance tests."""

import numpy as np

from lslprobe.lsl import Model, init_model
from lslprobe.probe import FeatureBatch

PARAM_ORDER = ("mix_logits", "mix_scale", "attn_vector", "proj_weight", "proj_bias", "head_weight")


def model_to_vector(model: Model) -> np.ndarray:
    arrays = model.named_arrays()
    return np.concatenate([np.ravel(arrays[name]) for name in PARAM_ORDER])


def vector_to_model(model: Model, vector: np.ndarray) -> Model:
    arrays = model.named_arrays()
    deltas = {}
    offset = 0
    for name in PARAM_ORDER:
        size = arrays[name].size
        new = vector[offset : offset + size].reshape(arrays[name].shape)
        deltas[name] = new - arrays[name]
        offset += size
    assert offset == vector.size
    return model.apply_update(deltas)


def grads_to_vector(grads: dict) -> np.ndarray:
    return np.concatenate([np.ravel(np.asarray(grads[name])) for name in PARAM_ORDER])


def numeric_gradient(fn, model: Model, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of the model."""
    theta = model_to_vector(model)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = eps * max(1.0, abs(theta[i]))
        plus = theta.copy()
        plus[i] += step
        minus = theta.copy()
        minus[i] -= step
        grad[i] = (fn(vector_to_model(model, plus)) - fn(vector_to_model(model, minus))) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_feature_batch(
    rng: np.random.Generator,
    batch: int,
    num_spans: int,
    num_layers: int,
    max_span: int,
    dim: int,
) -> FeatureBatch:
    """Random padded batch with at least one valid token per span."""
    feats = np.zeros((batch, num_spans, num_layers, max_span, dim))
    mask = np.zeros((batch, num_spans, max_span), dtype=bool)
    for b in range(batch):
        for k in range(num_spans):
            length = int(rng.integers(1, max_span + 1))
            mask[b, k, :length] = True
            feats[b, k, :, :length, :] = rng.standard_normal((num_layers, length, dim))
    labels = rng.integers(0, 2, size=batch).astype(np.int64)
    return FeatureBatch(
        feats=feats,
        mask=mask,
        labels=labels,
        example_ids=[f"x{b}" for b in range(batch)],
        gold=[None] * batch,
    )


def random_model(
    rng: np.random.Generator,
    num_layers: int,
    dim: int,
    hidden: int,
    num_spans: int,
    num_classes: int,
) -> Model:
    model = init_model(num_layers, dim, hidden, num_spans, num_classes, rng)
    # perturb away from the structured init so every path carries signal
    deltas = {
        name: 0.3 * rng.standard_normal(arr.shape)
        for name, arr in model.named_arrays().items()
    }
    return model.apply_update(deltas)


def brute_force_b_cubed(gold, pred, restrict_to=None):
    """Per-point definition computed with explicit loops.

    Independent of the library implementation: walks every point and
    counts cluster and class mates directly.
    """
    points = list(range(len(gold)))
    scored = [i for i in points if restrict_to is None or gold[i] == restrict_to]
    if not scored:
        raise ValueError("nothing to score")
    precisions, recalls = [], []
    for i in scored:
        same_cluster = [j for j in points if pred[j] == pred[i]]
        same_gold = [j for j in points if gold[j] == gold[i]]
        both = [j for j in same_cluster if gold[j] == gold[i]]
        precisions.append(len(both) / len(same_cluster))
        recalls.append(len(both) / len(same_gold))
    precision = sum(precisions) / len(scored)
    recall = sum(recalls) / len(scored)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1
