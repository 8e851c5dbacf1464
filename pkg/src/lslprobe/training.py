"""Minibatch training, restart selection, ablation, and capacity tuning.

Runs are deterministic functions of (data, config): parameter init and
epoch shuffling both derive from config.seed, and early stopping watches
the dev-set total loss with a fixed patience. The best dev-loss snapshot
is what a run returns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .data import TaskDataset
from .embfile import BundleIndex
from .lsl import (
    LossParts,
    Model,
    forward_batch,
    init_model,
    loss_batch_entropy,
    loss_instance_entropy,
    loss_lsl,
    loss_total,
)
from .probe import FeatureBatch, forward_features, gather_features

OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered; message carries the failing step."""


@dataclass(frozen=True)
class TrainConfig:
    num_latent: int = 32
    alpha: float = 1.5
    beta: float = 1.5
    hidden_size: int = 64
    batch_size: int = 64
    max_epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    patience: int = 5

    def __post_init__(self):
        for name in ("num_latent", "hidden_size", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    def to_mapping(self) -> dict[str, str]:
        return {
            "num_latent": str(self.num_latent),
            "alpha": repr(self.alpha),
            "beta": repr(self.beta),
            "hidden_size": str(self.hidden_size),
            "batch_size": str(self.batch_size),
            "max_epochs": str(self.max_epochs),
            "learning_rate": repr(self.learning_rate),
            "seed": str(self.seed),
            "optimizer": self.optimizer,
            "patience": str(self.patience),
        }

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "TrainConfig":
        kwargs: dict = {}
        casts = {
            "num_latent": int,
            "alpha": float,
            "beta": float,
            "hidden_size": int,
            "batch_size": int,
            "max_epochs": int,
            "learning_rate": float,
            "seed": int,
            "optimizer": str,
            "patience": int,
        }
        for key, raw in mapping.items():
            if key not in casts:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = casts[key](raw)
        return cls(**kwargs)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno} has no '=': {line!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def format_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_mapping().items())


@dataclass
class EpochRecord:
    epoch: int
    train: LossParts
    dev: LossParts
    dev_accuracy: float


@dataclass
class RunArtifact:
    """Outcome of one training run evaluated on the dev split."""

    config: TrainConfig
    model: Model
    dev_example_ids: list[str]
    dev_labels: np.ndarray          # (B,) binary
    dev_gold: list[str | None]
    dev_hard: np.ndarray            # (B,) 1-based latent class
    dev_distribution: np.ndarray    # (B, N)
    dev_latent: np.ndarray          # (B, N) latent logits
    dev_binary_prob: np.ndarray     # (B,)
    dev_accuracy: float
    curve: list[EpochRecord] = field(default_factory=list)

    def positive_mask(self) -> np.ndarray:
        return self.dev_labels == 1


# ---------------------------------------------------------------------------
# optimizers

class _Sgd:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, model: Model, grads: dict[str, np.ndarray]) -> Model:
        return model.apply_update({k: -self.learning_rate * g for k, g in grads.items()})


class _Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, model: Model, grads: dict[str, np.ndarray]) -> Model:
        self.t += 1
        deltas = {}
        for name, grad in grads.items():
            grad = np.asarray(grad, dtype=np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            deltas[name] = -self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return model.apply_update(deltas)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return _Adam(config.learning_rate)
    return _Sgd(config.learning_rate)


# ---------------------------------------------------------------------------
# training

def _evaluate(features: FeatureBatch, model: Model, alpha: float, beta: float):
    cache = forward_features(features, model.probe)
    posteriors = forward_batch(cache.features, model.head)
    parts = LossParts(
        lsl=loss_lsl(posteriors, features.labels),
        batch_entropy=loss_batch_entropy(posteriors),
        instance_entropy=loss_instance_entropy(posteriors),
        total=0.0,
    )
    parts.total = parts.lsl + alpha * parts.batch_entropy + beta * parts.instance_entropy
    return parts, posteriors


def _snapshot(model: Model) -> Model:
    return model.apply_update({k: np.zeros_like(v) for k, v in model.named_arrays().items()})


def train_prepared(
    train_features: FeatureBatch,
    dev_features: FeatureBatch,
    config: TrainConfig,
    on_step=None,
) -> RunArtifact:
    """Train on pre-gathered features. See :func:`train` for the file path.

    ``on_step(epoch, step, loss)`` is invoked after each minibatch,
    before the parameter update is applied.
    """
    if len(train_features) == 0 or len(dev_features) == 0:
        raise ValueError("train and dev splits must be non-empty")
    num_layers = train_features.feats.shape[2]
    dim = train_features.feats.shape[4]
    rng = np.random.default_rng(config.seed)
    model = init_model(
        num_layers=num_layers,
        dim=dim,
        hidden_size=config.hidden_size,
        num_spans=train_features.num_spans,
        num_classes=config.num_latent,
        rng=rng,
    )
    optimizer = make_optimizer(config)

    best_model = _snapshot(model)
    best_dev = np.inf
    stale_epochs = 0
    curve: list[EpochRecord] = []
    num_examples = len(train_features)

    for epoch in range(config.max_epochs):
        order = rng.permutation(num_examples)
        sums = np.zeros(3)
        num_batches = 0
        for start in range(0, num_examples, config.batch_size):
            batch = train_features.take(order[start : start + config.batch_size])
            total, grads, parts = loss_total(batch, batch.labels, model, config.alpha, config.beta)
            if not np.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {num_batches}: "
                    f"lsl={parts.lsl}, be={parts.batch_entropy}, ie={parts.instance_entropy}"
                )
            if on_step is not None:
                on_step(epoch, num_batches, total)
            model = optimizer.step(model, grads)
            sums += (parts.lsl, parts.batch_entropy, parts.instance_entropy)
            num_batches += 1
        train_parts = LossParts(
            lsl=sums[0] / num_batches,
            batch_entropy=sums[1] / num_batches,
            instance_entropy=sums[2] / num_batches,
            total=0.0,
        )
        train_parts.total = (
            train_parts.lsl
            + config.alpha * train_parts.batch_entropy
            + config.beta * train_parts.instance_entropy
        )

        dev_parts, dev_posteriors = _evaluate(dev_features, model, config.alpha, config.beta)
        if not np.isfinite(dev_parts.total):
            raise TrainingDiverged(f"non-finite dev loss at epoch {epoch}")
        accuracy = metrics.binary_accuracy(dev_posteriors.binary_prob, dev_features.labels)
        curve.append(EpochRecord(epoch=epoch, train=train_parts, dev=dev_parts, dev_accuracy=accuracy))

        if dev_parts.total < best_dev:
            best_dev = dev_parts.total
            best_model = _snapshot(model)
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= config.patience:
                break

    _, dev_posteriors = _evaluate(dev_features, best_model, config.alpha, config.beta)
    return RunArtifact(
        config=config,
        model=best_model,
        dev_example_ids=list(dev_features.example_ids),
        dev_labels=dev_features.labels.copy(),
        dev_gold=list(dev_features.gold),
        dev_hard=dev_posteriors.hard_class.copy(),
        dev_distribution=dev_posteriors.distribution.copy(),
        dev_latent=dev_posteriors.latent_logits.copy(),
        dev_binary_prob=dev_posteriors.binary_prob.copy(),
        dev_accuracy=metrics.binary_accuracy(dev_posteriors.binary_prob, dev_features.labels),
        curve=curve,
    )


def train(
    dataset: TaskDataset,
    dev: TaskDataset,
    embeddings: BundleIndex,
    config: TrainConfig,
) -> RunArtifact:
    """Optimize the full stack on the regularized loss; deterministic per seed."""
    return train_prepared(gather_features(dataset, embeddings), gather_features(dev, embeddings), config)


# ---------------------------------------------------------------------------
# consistency-based selection

def pairwise_consistency(assignments: list[np.ndarray]) -> np.ndarray:
    """Mean pairwise B3 F1 of each run's assignment against the others.

    Each pair is scored in both directions (either run as reference) and
    averaged, which makes the score symmetric by construction.
    """
    num_runs = len(assignments)
    if num_runs < 2:
        raise ValueError("need at least two runs to compare")
    length = len(assignments[0])
    for arr in assignments:
        if len(arr) != length:
            raise ValueError("assignment vectors are not aligned")
    f1 = np.zeros((num_runs, num_runs))
    for i in range(num_runs):
        for j in range(i + 1, num_runs):
            _, _, forward_f1 = metrics.b_cubed(list(assignments[i]), list(assignments[j]))
            _, _, backward_f1 = metrics.b_cubed(list(assignments[j]), list(assignments[i]))
            f1[i, j] = f1[j, i] = (forward_f1 + backward_f1) / 2.0
    return f1.sum(axis=1) / (num_runs - 1)


def select_consistent(runs: list[RunArtifact]) -> int:
    """Index of the run with highest mean pairwise B3 F1 on dev positives.

    Ties resolve to the lowest index.
    """
    if len(runs) < 2:
        raise ValueError("need at least two runs to select from")
    mask = runs[0].positive_mask()
    for run in runs:
        if not np.array_equal(run.positive_mask(), mask):
            raise ValueError("runs were evaluated on different dev splits")
    scores = pairwise_consistency([run.dev_hard[mask] for run in runs])
    return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# evaluation helpers shared by ablation and reporting

def evaluate_run(run: RunArtifact) -> dict[str, float]:
    """Dev-split metric row: clustering scores on gold positives plus
    binary accuracy over the whole split."""
    mask = run.positive_mask()
    gold = [g for g, keep in zip(run.dev_gold, mask) if keep]
    if any(g is None for g in gold):
        raise ValueError("gold labels missing on positive dev examples")
    pred = list(run.dev_hard[mask])
    precision, recall, f1 = metrics.b_cubed(gold, pred)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": run.dev_accuracy,
        "diversity": metrics.diversity(pred),
        "uncertainty": metrics.uncertainty(run.dev_distribution[mask]),
    }


ABLATION_CELLS = ("none", "+be", "+ie", "+be+ie")


def ablation_grid(
    train_features: FeatureBatch,
    dev_features: FeatureBatch,
    base: TrainConfig,
) -> list[dict]:
    """Train the four regularizer on/off combinations and score each."""
    rows = []
    for cell in ABLATION_CELLS:
        config = replace(
            base,
            alpha=base.alpha if "be" in cell else 0.0,
            beta=base.beta if "ie" in cell else 0.0,
        )
        run = train_prepared(train_features, dev_features, config)
        row = {"cell": cell, "alpha": config.alpha, "beta": config.beta}
        row.update(evaluate_run(run))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# hidden size tuning

def select_hidden_size(sizes: list[int], accuracies: list[float], threshold: float = 0.97) -> int:
    """Smallest size whose accuracy reaches threshold * best accuracy."""
    if not sizes or len(sizes) != len(accuracies):
        raise ValueError("sizes and accuracies must be non-empty and aligned")
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    bar = threshold * max(accuracies)
    for size, accuracy in zip(sizes, accuracies):
        if accuracy >= bar:
            return size
    raise AssertionError("unreachable: the best size always passes its own bar")


def tune_hidden_size(
    train_features: FeatureBatch,
    dev_features: FeatureBatch,
    sizes: list[int],
    base: TrainConfig,
    threshold: float = 0.97,
) -> tuple[int, list[float]]:
    """Train a plain binary probe per size and apply the threshold rule."""
    accuracies = []
    for size in sizes:
        config = replace(base, hidden_size=size, num_latent=1, alpha=0.0, beta=0.0)
        run = train_prepared(train_features, dev_features, config)
        accuracies.append(run.dev_accuracy)
    return select_hidden_size(sizes, accuracies, threshold), accuracies


# ---------------------------------------------------------------------------
# run directory layout

def _float(v: float) -> str:
    return f"{v:.9g}"


def save_run(run_dir: str | Path, run: RunArtifact) -> None:
    """Write config snapshot, checkpoint, dev assignments, labels, curves."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(format_config(run.config), encoding="utf-8", newline="\n")
    save_checkpoint(run_dir / "checkpoint.bin", run.model)

    lines = []
    for i, example_id in enumerate(run.dev_example_ids):
        dist = ",".join(_float(v) for v in run.dev_distribution[i])
        lines.append(f"{example_id}\t{int(run.dev_hard[i])}\t{dist}")
    (run_dir / "assignments.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    label_lines = [
        f"{example_id}\t{int(label)}\t{gold if gold is not None else ''}"
        for example_id, label, gold in zip(run.dev_example_ids, run.dev_labels, run.dev_gold)
    ]
    (run_dir / "labels.tsv").write_text("\n".join(label_lines) + "\n", encoding="utf-8", newline="\n")

    logit_lines = [
        f"{example_id}\t{','.join(_float(v) for v in run.dev_latent[i])}"
        for i, example_id in enumerate(run.dev_example_ids)
    ]
    (run_dir / "logits.tsv").write_text("\n".join(logit_lines) + "\n", encoding="utf-8", newline="\n")

    prob_lines = [
        f"{example_id}\t{_float(run.dev_binary_prob[i])}"
        for i, example_id in enumerate(run.dev_example_ids)
    ]
    (run_dir / "probs.tsv").write_text("\n".join(prob_lines) + "\n", encoding="utf-8", newline="\n")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["epoch", "train_total", "train_lsl", "train_be", "train_ie",
         "dev_total", "dev_lsl", "dev_be", "dev_ie", "dev_accuracy"]
    )
    for record in run.curve:
        writer.writerow(
            [record.epoch]
            + [_float(v) for v in (
                record.train.total, record.train.lsl, record.train.batch_entropy,
                record.train.instance_entropy, record.dev.total, record.dev.lsl,
                record.dev.batch_entropy, record.dev.instance_entropy, record.dev_accuracy,
            )]
        )
    (run_dir / "losses.csv").write_text(buffer.getvalue(), encoding="utf-8", newline="\n")


@dataclass
class SavedRun:
    """The on-disk slice of a run that selection and reporting need."""

    path: Path
    config: TrainConfig
    model: Model
    example_ids: list[str]
    hard: np.ndarray
    distribution: np.ndarray
    latent: np.ndarray
    binary_prob: np.ndarray
    labels: np.ndarray
    gold: list[str | None]


def _read_vector_tsv(path: Path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        example_id, values = line.split("\t")
        ids.append(example_id)
        rows.append([float(v) for v in values.split(",")])
    return ids, np.asarray(rows, dtype=np.float64)


def load_run(run_dir: str | Path) -> SavedRun:
    run_dir = Path(run_dir)
    config = TrainConfig.from_mapping(parse_config_text((run_dir / "config.txt").read_text(encoding="utf-8")))
    model = load_checkpoint(run_dir / "checkpoint.bin")

    example_ids: list[str] = []
    hard: list[int] = []
    dists: list[list[float]] = []
    for line in (run_dir / "assignments.tsv").read_text(encoding="utf-8").splitlines():
        example_id, hard_class, dist = line.split("\t")
        example_ids.append(example_id)
        hard.append(int(hard_class))
        dists.append([float(v) for v in dist.split(",")])

    labels: list[int] = []
    gold: list[str | None] = []
    for line in (run_dir / "labels.tsv").read_text(encoding="utf-8").splitlines():
        _, label, gold_value = line.split("\t")
        labels.append(int(label))
        gold.append(gold_value or None)

    _, latent = _read_vector_tsv(run_dir / "logits.tsv")
    probs = np.asarray(
        [float(line.split("\t")[1]) for line in (run_dir / "probs.tsv").read_text(encoding="utf-8").splitlines()],
        dtype=np.float64,
    )

    return SavedRun(
        path=run_dir,
        config=config,
        model=model,
        example_ids=example_ids,
        hard=np.asarray(hard, dtype=np.int64),
        distribution=np.asarray(dists, dtype=np.float64),
        latent=latent,
        binary_prob=probs,
        labels=np.asarray(labels, dtype=np.int64),
        gold=gold,
    )


def select_saved(runs: list[SavedRun]) -> int:
    """select_consistent over runs reloaded from disk."""
    if len(runs) < 2:
        raise ValueError("need at least two runs to select from")
    mask = runs[0].labels == 1
    for run in runs:
        if not np.array_equal(run.labels == 1, mask):
            raise ValueError("runs were evaluated on different dev splits")
    scores = pairwise_consistency([run.hard[mask] for run in runs])
    return int(np.argmax(scores))
