"""Latent-subclass classifier head.

A binary classifier factored through N latent classes: latent logits Wx
are marginalized with a stable log-sum-exp into one binary logit, so the
positive probability is S / (1 + S) with S = sum_i exp((Wx)_i). This is
(N+1)-way multiclass regression with the null class pinned at logit 0,
trained only on binary labels. The softmax over latent logits defines a
distribution over subclasses; its argmax is the induced cluster.

Two entropy regularizers shape that distribution: the batch-level term
log N - H(mean distribution) spreads the clustering out, the
instance-level term mean H(distribution) sharpens each assignment. With
equal coefficients their sum is log N minus the mutual information
between inputs and latent classes, so minimizing them maximizes that
mutual information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probe import (
    FeatureBatch,
    ProbeParams,
    backward_features,
    forward_features,
    init_probe_params,
    softmax,
)

LOG_CLAMP = 1e-12


@dataclass
class LslHead:
    """Weight matrix mapping probe features to latent logits."""

    weight: np.ndarray  # (N, h)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.weight.shape[1]

    def validate(self) -> None:
        if self.weight.ndim != 2 or self.num_classes < 1:
            raise ValueError(f"head weight must be (N >= 1, h), got {self.weight.shape}")
        if not np.isfinite(self.weight).all():
            raise ValueError("non-finite head weight")


def init_head(num_classes: int, hidden_size: int, rng: np.random.Generator) -> LslHead:
    bound = 1.0 / np.sqrt(hidden_size)
    return LslHead(weight=rng.uniform(-bound, bound, size=(num_classes, hidden_size)))


@dataclass(frozen=True)
class LatentPosterior:
    """Everything the head infers for one input."""

    latent_logits: np.ndarray  # (N,)
    distribution: np.ndarray   # (N,) softmax of latent logits
    hard_class: int            # 1-based argmax, ties to the lowest index
    binary_prob: float         # sigma(logsumexp(latent logits))


@dataclass
class BatchPosteriors:
    """Stacked posteriors for a batch; rows align with the input order."""

    latent_logits: np.ndarray  # (B, N)
    distribution: np.ndarray   # (B, N)
    hard_class: np.ndarray     # (B,) 1-based
    binary_prob: np.ndarray    # (B,)

    def __len__(self) -> int:
        return self.latent_logits.shape[0]

    @property
    def num_classes(self) -> int:
        return self.latent_logits.shape[1]

    def posterior(self, i: int) -> LatentPosterior:
        return LatentPosterior(
            latent_logits=self.latent_logits[i],
            distribution=self.distribution[i],
            hard_class=int(self.hard_class[i]),
            binary_prob=float(self.binary_prob[i]),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form never exponentiates a positive argument
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _posterize(latent_logits: np.ndarray) -> BatchPosteriors:
    top = latent_logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(latent_logits - top).sum(axis=1))
    binary_prob = _sigmoid(lse)
    return BatchPosteriors(
        latent_logits=latent_logits,
        distribution=softmax(latent_logits, axis=1),
        hard_class=np.argmax(latent_logits, axis=1) + 1,
        binary_prob=binary_prob,
    )


def forward(x: np.ndarray, head: LslHead) -> LatentPosterior:
    """Posterior for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite feature vector")
    return forward_batch(x[None, :], head).posterior(0)


def forward_batch(features: np.ndarray, head: LslHead) -> BatchPosteriors:
    return _posterize(features @ head.weight.T)


# ---------------------------------------------------------------------------
# loss terms

def _entropy(dist: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats with the 0 log 0 = 0 convention."""
    plogp = np.where(dist > 0.0, dist * np.log(np.where(dist > 0.0, dist, 1.0)), 0.0)
    return -plogp.sum(axis=axis)


def loss_lsl(posteriors: BatchPosteriors, labels: np.ndarray) -> float:
    """Mean binary cross-entropy on the marginalized probability."""
    if len(posteriors) == 0:
        raise ValueError("empty batch")
    p = np.clip(posteriors.binary_prob, LOG_CLAMP, 1.0 - LOG_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def loss_batch_entropy(posteriors: BatchPosteriors) -> float:
    """log N minus the entropy of the batch-mean distribution; in [0, log N]."""
    if len(posteriors) == 0:
        raise ValueError("empty batch")
    mean_dist = posteriors.distribution.mean(axis=0)
    return float(np.log(posteriors.num_classes) - _entropy(mean_dist))


def loss_instance_entropy(posteriors: BatchPosteriors) -> float:
    """Mean per-item entropy of the latent distribution; in [0, log N]."""
    if len(posteriors) == 0:
        raise ValueError("empty batch")
    return float(_entropy(posteriors.distribution, axis=1).mean())


def mutual_information(posteriors: BatchPosteriors) -> float:
    """H(mean distribution) - mean H(distribution) over the batch."""
    if len(posteriors) == 0:
        raise ValueError("empty batch")
    mean_dist = posteriors.distribution.mean(axis=0)
    return float(_entropy(mean_dist) - _entropy(posteriors.distribution, axis=1).mean())


def _grad_latent_logits(
    posteriors: BatchPosteriors, labels: np.ndarray, alpha: float, beta: float
) -> np.ndarray:
    """d(total loss)/d(latent logits), shape (B, N).

    The cross-entropy term uses the exact gradient of the unclamped loss,
    (p - y) routed through the log-sum-exp: per item (p - y) * q. The
    entropy terms are differentiated through the softmax in closed form;
    q log q and q log q_bar terms vanish where q is 0, which the masked
    logs preserve without NaNs.
    """
    batch = len(posteriors)
    q = posteriors.distribution
    y = np.asarray(labels, dtype=np.float64)

    grad = ((posteriors.binary_prob - y) / batch)[:, None] * q

    if alpha != 0.0:
        mean_dist = q.mean(axis=0)
        log_mean = np.log(np.where(mean_dist > 0.0, mean_dist, 1.0))
        weighted = q * log_mean[None, :]
        grad += (alpha / batch) * (weighted - q * weighted.sum(axis=1, keepdims=True))

    if beta != 0.0:
        log_q = np.log(np.where(q > 0.0, q, 1.0))
        entropies = -(q * log_q).sum(axis=1, keepdims=True)
        grad += -(beta / batch) * (q * log_q + q * entropies)

    return grad


# ---------------------------------------------------------------------------
# full model

@dataclass
class Model:
    """Probe parameters plus the latent-subclass head."""

    probe: ProbeParams
    head: LslHead

    def validate(self) -> None:
        self.probe.validate()
        self.head.validate()
        if self.head.hidden_size != self.probe.hidden_size:
            raise ValueError(
                f"head expects {self.head.hidden_size}-d features, "
                f"probe produces {self.probe.hidden_size}"
            )

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = self.probe.named_arrays()
        arrays["head_weight"] = np.asarray(self.head.weight, dtype=np.float64)
        return arrays

    def apply_update(self, deltas: dict[str, np.ndarray]) -> "Model":
        probe = ProbeParams(
            mix_logits=self.probe.mix_logits + deltas["mix_logits"],
            mix_scale=float(self.probe.mix_scale + deltas["mix_scale"]),
            attn_vector=self.probe.attn_vector + deltas["attn_vector"],
            proj_weight=self.probe.proj_weight + deltas["proj_weight"],
            proj_bias=self.probe.proj_bias + deltas["proj_bias"],
        )
        head = LslHead(weight=self.head.weight + deltas["head_weight"])
        return Model(probe=probe, head=head)


def init_model(
    num_layers: int,
    dim: int,
    hidden_size: int,
    num_spans: int,
    num_classes: int,
    rng: np.random.Generator,
) -> Model:
    probe = init_probe_params(num_layers, dim, hidden_size, num_spans, rng)
    head = init_head(num_classes, hidden_size, rng)
    return Model(probe=probe, head=head)


@dataclass
class LossParts:
    lsl: float
    batch_entropy: float
    instance_entropy: float
    total: float


def run_model(batch: FeatureBatch, model: Model) -> BatchPosteriors:
    """Forward the whole stack without keeping gradient state."""
    cache = forward_features(batch, model.probe)
    return forward_batch(cache.features, model.head)


def loss_total(
    batch: FeatureBatch,
    labels: np.ndarray,
    model: Model,
    alpha: float,
    beta: float,
) -> tuple[float, dict[str, np.ndarray], LossParts]:
    """Regularized loss and its exact gradient for every trainable array.

    Returns (total, grads keyed like Model.named_arrays(), per-term values).
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"entropy coefficients must be non-negative, got a={alpha}, b={beta}")
    if len(batch) == 0:
        raise ValueError("empty batch")

    cache = forward_features(batch, model.probe)
    posteriors = forward_batch(cache.features, model.head)

    parts = LossParts(
        lsl=loss_lsl(posteriors, labels),
        batch_entropy=loss_batch_entropy(posteriors),
        instance_entropy=loss_instance_entropy(posteriors),
        total=0.0,
    )
    parts.total = parts.lsl + alpha * parts.batch_entropy + beta * parts.instance_entropy

    grad_logits = _grad_latent_logits(posteriors, labels, alpha, beta)
    grads = backward_features(cache, grad_logits @ model.head.weight, model.probe)
    grads["head_weight"] = grad_logits.T @ cache.features
    return parts.total, grads, parts
