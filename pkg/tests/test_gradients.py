"""Analytic gradients against central finite differences.

The finite-difference oracle only touches the forward pass, so agreement
pins the hand-written backward pass through the head, projection,
pooling, and layer mix. Draws that place a ramp pre-activation within
finite-difference reach of its kink are skipped; the stack is only
differentiable almost everywhere.
"""

import numpy as np
import pytest

from helpers import (
    grads_to_vector,
    model_to_vector,
    numeric_gradient,
    random_feature_batch,
    random_model,
    relative_error,
)
from lslprobe.lsl import loss_total
from lslprobe.probe import backward_features, forward_features

KINK_MARGIN = 1e-3


def _one_draw(seed: int, alpha: float, beta: float) -> float | None:
    rng = np.random.default_rng(seed)
    num_layers = int(rng.integers(1, 4))
    dim = int(rng.integers(2, 5))
    hidden = int(rng.integers(2, 6))
    num_classes = int(rng.integers(1, 5))
    num_spans = int(rng.integers(1, 3))
    batch = int(rng.integers(2, 7))
    max_span = int(rng.integers(1, 4))

    features = random_feature_batch(rng, batch, num_spans, num_layers, max_span, dim)
    model = random_model(rng, num_layers, dim, hidden, num_spans, num_classes)

    cache = forward_features(features, model.probe)
    if np.min(np.abs(cache.pre_act)) < KINK_MARGIN:
        return None

    _, grads, _ = loss_total(features, features.labels, model, alpha, beta)
    analytic = grads_to_vector(grads)
    numeric = numeric_gradient(
        lambda m: loss_total(features, features.labels, m, alpha, beta)[0], model
    )
    return relative_error(analytic, numeric)


@pytest.mark.parametrize("alpha,beta", [(1.5, 1.5), (0.0, 0.0), (0.7, 2.3)])
def test_loss_total_gradient_matches_finite_differences(alpha, beta):
    errors = []
    seed = 0
    while len(errors) < 20 and seed < 200:
        err = _one_draw(seed, alpha, beta)
        seed += 1
        if err is None:
            continue
        errors.append(err)
    assert len(errors) >= 20
    assert max(errors) < 1e-4, f"worst relative error {max(errors):.2e}"


def test_probe_backward_matches_finite_differences():
    # scalar function of the features: fixed random projection of x
    rng = np.random.default_rng(99)
    checked = 0
    for seed in range(60):
        draw = np.random.default_rng(1000 + seed)
        num_layers = int(draw.integers(1, 4))
        dim = int(draw.integers(2, 5))
        hidden = int(draw.integers(2, 6))
        num_spans = int(draw.integers(1, 3))
        batch = int(draw.integers(1, 5))
        max_span = int(draw.integers(1, 4))
        features = random_feature_batch(draw, batch, num_spans, num_layers, max_span, dim)
        model = random_model(draw, num_layers, dim, hidden, num_spans, 1)
        probe = model.probe
        weights = rng.standard_normal((batch, hidden))

        cache = forward_features(features, probe)
        if np.min(np.abs(cache.pre_act)) < KINK_MARGIN:
            continue
        grads = backward_features(cache, weights, probe)
        grads["head_weight"] = np.zeros_like(model.head.weight)
        analytic = grads_to_vector(grads)

        def scalar(m):
            return float(np.sum(weights * forward_features(features, m.probe).features))

        numeric = numeric_gradient(scalar, model)
        assert relative_error(analytic, numeric) < 1e-4
        checked += 1
    assert checked >= 30


def test_entropy_gradient_survives_saturated_distributions():
    # huge logits drive some q entries to exactly 0; the masked q log q
    # terms must stay finite
    rng = np.random.default_rng(5)
    features = random_feature_batch(rng, 4, 1, 1, 1, 3)
    model = random_model(rng, 1, 3, 3, 1, 4)
    boosted = model.apply_update(
        {
            name: (60.0 * np.sign(arr) if name == "head_weight" else np.zeros_like(arr))
            for name, arr in model.named_arrays().items()
        }
    )
    total, grads, _ = loss_total(features, features.labels, boosted, 1.5, 1.5)
    assert np.isfinite(total)
    for arr in grads.values():
        assert np.isfinite(arr).all()


def test_negative_coefficients_rejected():
    rng = np.random.default_rng(6)
    features = random_feature_batch(rng, 2, 1, 1, 1, 2)
    model = random_model(rng, 1, 2, 2, 1, 2)
    with pytest.raises(ValueError, match="non-negative"):
        loss_total(features, features.labels, model, -0.1, 0.0)
