"""Synthetic benchmark with planted latent subclasses.

Positive points come from K isotropic Gaussians whose centers form a
regular simplex with edge separation * noise (so the mean pairwise
center separation is exactly that), randomly rotated and shifted as a
group away from the negatives. The shared shift mirrors real encoder
features, where positives share a dominant direction; without it every
blob locks onto its own latent class even with no diversity pressure
and the regularizer ablation loses its contrast.

Negatives come from a background mixture of equally noisy blobs
scattered on a sphere displaced from every positive cluster. The binary
task stays easy, while the background still carries enough structure
that the batch-entropy regularizer can diversify over it instead of
being forced to shred the positive clusters.

Everything is emitted through the real on-disk formats (one single-token
sentence per point) so loading a benchmark exercises the full parser
path, and a manifest records the generation parameters, the planted
centers, and a nearest-centroid oracle accuracy per split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SpanTarget, TaskDataset, load_task, write_task
from .embfile import BundleIndex, EmbeddingBundle, load_embeddings, write_embeddings

MANIFEST_NAME = "manifest.json"


@dataclass
class SynthBenchmark:
    out_dir: Path
    embeddings_path: Path
    train_path: Path
    dev_path: Path
    manifest_path: Path
    manifest: dict
    bundles: BundleIndex
    train: TaskDataset
    dev: TaskDataset


def _simplex_centers(num_subclasses: int, dim: int, edge: float, rng: np.random.Generator) -> np.ndarray:
    """Centered regular simplex with the given edge length, randomly rotated."""
    if num_subclasses > dim + 1:
        raise ValueError(
            f"cannot place {num_subclasses} equidistant centers in {dim} dimensions"
        )
    if num_subclasses == 1:
        return np.zeros((1, dim))
    eye = np.eye(num_subclasses)
    centered = eye - eye.mean(axis=0, keepdims=True)
    centers = np.zeros((num_subclasses, dim))
    centers[:, :num_subclasses] = centered * (edge / np.sqrt(2.0))
    # random rotation for generic (non axis-aligned) features
    raw = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    return centers @ q.T


def _nearest_centroid_accuracy(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(distances, axis=1) == labels))


def generate(
    out_dir: str | Path,
    num_subclasses: int,
    points_per_class: int,
    dim: int,
    separation: float,
    noise: float,
    negative_fraction: float = 0.5,
    seed: int = 0,
    layers: int = 1,
    signal_layer: int | None = None,
    dev_points_per_class: int | None = None,
    background_components: int | None = None,
) -> SynthBenchmark:
    """Write embeddings, train/dev task files, and a manifest; reload them.

    ``negative_fraction`` is the negative share of each split, so 0.5
    pairs every positive with one negative. With ``layers`` > 1 the
    class signal lives only in ``signal_layer`` (default: the middle
    layer) and the other layers carry pure noise, which gives the layer
    mix something to learn. ``background_components`` controls how many
    blobs make up the negative background (default 4 per subclass).
    """
    if num_subclasses < 1:
        raise ValueError(f"need at least one subclass, got {num_subclasses}")
    if separation <= 0:
        raise ValueError(f"separation must be positive, got {separation}")
    if noise <= 0:
        raise ValueError(f"noise must be positive, got {noise}")
    if not 0 <= negative_fraction < 1:
        raise ValueError(f"negative_fraction must be in [0, 1), got {negative_fraction}")
    if layers < 1:
        raise ValueError(f"layers must be positive, got {layers}")
    if signal_layer is None:
        signal_layer = layers // 2
    if not 0 <= signal_layer < layers:
        raise ValueError(f"signal_layer {signal_layer} outside [0, {layers})")
    if dev_points_per_class is None:
        dev_points_per_class = max(1, points_per_class // 5)
    if background_components is None:
        background_components = 4 * num_subclasses
    if background_components < 1:
        raise ValueError("background_components must be positive")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    spread = separation * noise
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    # shared offset away from the background: every positive carries it
    centers = _simplex_centers(num_subclasses, dim, spread, rng) - direction * spread
    reach = float(np.linalg.norm(centers, axis=1).max())
    bg_dirs = rng.standard_normal((background_components, dim))
    bg_dirs /= np.linalg.norm(bg_dirs, axis=1, keepdims=True)
    bg_centers = bg_dirs * (reach + spread + 6.0 * noise)

    bundles: list[EmbeddingBundle] = []
    split_targets: dict[str, list[SpanTarget]] = {}
    oracle_accuracy: dict[str, float] = {}
    planted_assignments: dict[str, dict[str, str]] = {}

    for split, prefix, per_class in (
        ("train", "t", points_per_class),
        ("dev", "d", dev_points_per_class),
    ):
        num_positives = num_subclasses * per_class
        num_negatives = int(round(num_positives * negative_fraction / (1.0 - negative_fraction)))
        planted = np.repeat(np.arange(num_subclasses), per_class)
        positives = centers[planted] + noise * rng.standard_normal((num_positives, dim))
        component = rng.integers(0, background_components, size=num_negatives)
        negatives = bg_centers[component] + noise * rng.standard_normal((num_negatives, dim))

        points = np.concatenate([positives, negatives])
        labels = np.concatenate([np.ones(num_positives, int), np.zeros(num_negatives, int)])
        targets = []
        planted_assignments[split] = {}
        for i in range(len(points)):
            sentence_id = f"{prefix}{i:06d}"
            values = np.empty((layers, 1, dim), dtype=np.float32)
            for layer in range(layers):
                if layer == signal_layer:
                    values[layer, 0] = points[i]
                else:
                    values[layer, 0] = noise * rng.standard_normal(dim)
            bundles.append(EmbeddingBundle(sentence_id=sentence_id, values=values))
            gold = f"k{planted[i]}" if labels[i] == 1 else None
            targets.append(SpanTarget(sentence_id, (0, 1), label=int(labels[i]), gold=gold))
            if gold is not None:
                planted_assignments[split][sentence_id] = gold
        split_targets[split] = targets
        oracle_accuracy[split] = _nearest_centroid_accuracy(
            positives.astype(np.float32).astype(np.float64), planted, centers
        )

    embeddings_path = out_dir / "embeddings.lslf"
    train_path = out_dir / "task.train.jsonl"
    dev_path = out_dir / "task.dev.jsonl"
    manifest_path = out_dir / MANIFEST_NAME

    write_embeddings(embeddings_path, bundles)
    write_task(train_path, split_targets["train"])
    write_task(dev_path, split_targets["dev"])

    manifest = {
        "parameters": {
            "num_subclasses": num_subclasses,
            "points_per_class": points_per_class,
            "dev_points_per_class": dev_points_per_class,
            "dim": dim,
            "separation": separation,
            "noise": noise,
            "negative_fraction": negative_fraction,
            "seed": seed,
            "layers": layers,
            "signal_layer": signal_layer,
            "background_components": background_components,
        },
        "centers": [[float(v) for v in row] for row in centers],
        "background_centers": [[float(v) for v in row] for row in bg_centers],
        "planted_assignments": planted_assignments,
        "oracle_accuracy": {k: float(v) for k, v in oracle_accuracy.items()},
        "files": {
            "embeddings": embeddings_path.name,
            "train": train_path.name,
            "dev": dev_path.name,
        },
        "labels": [f"k{j}" for j in range(num_subclasses)],
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )

    index = load_embeddings(embeddings_path)
    return SynthBenchmark(
        out_dir=out_dir,
        embeddings_path=embeddings_path,
        train_path=train_path,
        dev_path=dev_path,
        manifest_path=manifest_path,
        manifest=manifest,
        bundles=index,
        train=load_task(train_path, index, name="synth", split="train"),
        dev=load_task(dev_path, index, name="synth", split="dev"),
    )
