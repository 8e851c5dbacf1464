"""Clustering evaluation against gold label sets.

All functions score points that the caller has already restricted to the
gold-positive class. Entropies are in nats, so the exponentiated metrics
(diversity, uncertainty) are natural perplexities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

Label = Hashable


@dataclass
class Contingency:
    """Gold-label x predicted-cluster co-occurrence counts."""

    counts: np.ndarray       # (G, C) non-negative ints
    gold_labels: list[Label]
    clusters: list[Label]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or (self.counts < 0).any():
            raise ValueError("counts must be a non-negative 2-d matrix")
        if self.counts.shape != (len(self.gold_labels), len(self.clusters)):
            raise ValueError("counts shape does not match label lists")

    @classmethod
    def from_assignments(cls, gold: Sequence[Label], pred: Sequence[Label]) -> "Contingency":
        if len(gold) != len(pred):
            raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
        if len(gold) == 0:
            raise ValueError("empty input")
        gold_labels = sorted(set(gold), key=str)
        clusters = sorted(set(pred), key=str)
        gold_index = {g: i for i, g in enumerate(gold_labels)}
        cluster_index = {c: j for j, c in enumerate(clusters)}
        counts = np.zeros((len(gold_labels), len(clusters)), dtype=np.int64)
        for g, c in zip(gold, pred):
            counts[gold_index[g], cluster_index[c]] += 1
        return cls(counts=counts, gold_labels=gold_labels, clusters=clusters)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def gold_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def cluster_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def add(self, other: "Contingency") -> "Contingency":
        """Sum counts across runs, aligning labels and clusters by name."""
        gold_labels = sorted(set(self.gold_labels) | set(other.gold_labels), key=str)
        clusters = sorted(set(self.clusters) | set(other.clusters), key=str)
        counts = np.zeros((len(gold_labels), len(clusters)), dtype=np.int64)
        for source in (self, other):
            rows = [gold_labels.index(g) for g in source.gold_labels]
            cols = [clusters.index(c) for c in source.clusters]
            counts[np.ix_(rows, cols)] += source.counts
        return Contingency(counts=counts, gold_labels=gold_labels, clusters=clusters)


def b_cubed(
    gold: Sequence[Label],
    pred: Sequence[Label],
    restrict_to: Label | None = None,
) -> tuple[float, float, float]:
    """Point-averaged clustering precision/recall/F1.

    Per point, precision is the fraction of its predicted cluster sharing
    its gold label and recall the fraction of its gold class sharing its
    cluster; both are averaged over points (over points with the given
    gold label when restrict_to is set) and combined by harmonic mean.
    """
    table = Contingency.from_assignments(gold, pred)
    counts = table.counts.astype(np.float64)
    cluster_sizes = table.cluster_marginal.astype(np.float64)
    gold_sizes = table.gold_marginal.astype(np.float64)

    # Sum per-point fractions cell by cell: every point in cell (g, c)
    # contributes counts[g, c] / cluster_size and counts[g, c] / gold_size.
    with np.errstate(invalid="ignore", divide="ignore"):
        precision_cells = counts * (counts / cluster_sizes[None, :])
        recall_cells = counts * (counts / gold_sizes[:, None])
    precision_cells = np.nan_to_num(precision_cells)
    recall_cells = np.nan_to_num(recall_cells)

    if restrict_to is None:
        num_points = table.total
        precision_sum = precision_cells.sum()
        recall_sum = recall_cells.sum()
    else:
        if restrict_to not in table.gold_labels:
            raise ValueError(f"no points with gold label {restrict_to!r}")
        row = table.gold_labels.index(restrict_to)
        num_points = int(gold_sizes[row])
        precision_sum = precision_cells[row].sum()
        recall_sum = recall_cells[row].sum()

    precision = precision_sum / num_points
    recall = recall_sum / num_points
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return float(precision), float(recall), float(f1)


def npmi_matrix(contingency: Contingency) -> np.ndarray:
    """Pairwise normalized PMI of gold labels co-occurring through clusters.

    Co-occurrence is defined by shared cluster membership: draw a cluster
    with probability proportional to its size, then two member labels
    independently, giving joint(x, y) = sum_c p(c) p(x|c) p(y|c) with
    marginal p(x) = sum_c p(c) p(x|c). Normalized PMI is
    PMI / -log joint. A zero joint with non-zero marginals is the
    never-together limit and maps to exactly -1; a label with zero count
    has no defined association and yields a NaN row and column.
    """
    counts = contingency.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty contingency")
    cluster_sizes = counts.sum(axis=0)
    occupied = cluster_sizes > 0
    cluster_prob = cluster_sizes / total
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(occupied[None, :], counts / cluster_sizes[None, :], 0.0)

    joint = np.einsum("c,xc,yc->xy", cluster_prob, share, share)
    marginal = counts.sum(axis=1) / total

    num_labels = counts.shape[0]
    out = np.full((num_labels, num_labels), np.nan)
    present = marginal > 0
    for i in range(num_labels):
        if not present[i]:
            continue
        for j in range(num_labels):
            if not present[j]:
                continue
            if joint[i, j] == 0.0:
                out[i, j] = -1.0
            elif joint[i, j] >= 1.0:
                # single fully shared cluster; independence and the
                # denominator both degenerate, limit value 0
                out[i, j] = 0.0
            else:
                pmi = np.log(joint[i, j]) - np.log(marginal[i]) - np.log(marginal[j])
                out[i, j] = pmi / -np.log(joint[i, j])
    return out


def diversity(pred: Sequence[Label]) -> float:
    """Exponentiated entropy of the hard-assignment distribution; the
    effective number of clusters, in [1, number of distinct clusters]."""
    pred = list(pred)
    if not pred:
        raise ValueError("empty input")
    _, counts = np.unique(np.asarray(pred, dtype=object), return_counts=True)
    freq = counts / counts.sum()
    return float(np.exp(-(freq * np.log(freq)).sum()))


def uncertainty(posteriors: np.ndarray) -> float:
    """Mean exponentiated per-point entropy of the latent distribution;
    how many classes the model is confused between on average, in [1, N]."""
    dist = np.asarray(posteriors, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] == 0:
        raise ValueError("expected a non-empty (points, classes) matrix")
    plogp = np.where(dist > 0.0, dist * np.log(np.where(dist > 0.0, dist, 1.0)), 0.0)
    return float(np.exp(-plogp.sum(axis=1)).mean())


def binary_accuracy(probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape or probs.size == 0:
        raise ValueError("probs and labels must be equal-length and non-empty")
    return float(np.mean((probs >= threshold).astype(np.int64) == labels))
