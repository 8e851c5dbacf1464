"""Analysis artifacts: label-wise score tables, summary tables, pairwise
association matrices, and projector-ready exports of latent logits.

Everything is written as plain UTF-8 text with LF newlines so output is
byte-stable across invocations. Floats use 9 significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import Contingency, b_cubed, npmi_matrix


def _float(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.9g}"


@dataclass(frozen=True)
class LabelRow:
    label: str
    precision: float
    recall: float
    f1: float
    count: int


def labelwise_table(gold: Sequence, pred: Sequence) -> list[LabelRow]:
    """Per-gold-label precision/recall/F1, sorted by descending F1.

    Labels without points never appear; ties go alphabetically.
    """
    table = Contingency.from_assignments(gold, pred)
    rows = []
    for label, count in zip(table.gold_labels, table.gold_marginal):
        if count == 0:
            continue
        precision, recall, f1 = b_cubed(gold, pred, restrict_to=label)
        rows.append(LabelRow(str(label), precision, recall, f1, int(count)))
    return sorted(rows, key=lambda row: (-row.f1, row.label))


def write_labelwise_csv(path: str | Path, rows: list[LabelRow]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["label", "precision", "recall", "f1", "count"])
    for row in rows:
        writer.writerow([row.label, _float(row.precision), _float(row.recall), _float(row.f1), row.count])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# summary tables

SUMMARY_COLUMNS = ("precision", "recall", "f1", "accuracy", "diversity", "uncertainty")


def summary_table(records: list[dict]) -> str:
    """Render metric rows (one per encoder x task) as an aligned table.

    Each record needs "encoder", "task", and the metric columns; rows are
    grouped by task then encoder.
    """
    header = ["task", "encoder", "P", "R", "F1", "Acc", "Div", "Unc"]
    body = []
    for record in sorted(records, key=lambda r: (r["task"], r["encoder"])):
        body.append(
            [record["task"], record["encoder"]]
            + [f"{record[c]:.3f}" for c in SUMMARY_COLUMNS]
        )
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header] + body]
    return "\n".join(lines) + "\n"


def write_summary_csv(path: str | Path, records: list[dict]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["task", "encoder", *SUMMARY_COLUMNS])
    for record in sorted(records, key=lambda r: (r["task"], r["encoder"])):
        writer.writerow(
            [record["task"], record["encoder"]] + [_float(record[c]) for c in SUMMARY_COLUMNS]
        )
    Path(path).write_text(buffer.getvalue(), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# projector export

def export_projector(
    latent_logits: np.ndarray,
    gold: Sequence,
    pred: Sequence,
    vectors_path: str | Path,
    metadata_path: str | Path,
) -> None:
    """Write aligned vector and metadata TSVs for embedding-projector tools.

    The vector file is headerless, one tab-separated logit row per point;
    the metadata file carries a header and the gold label plus hard
    cluster per point.
    """
    logits = np.asarray(latent_logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError("latent_logits must be (points, classes)")
    if not (logits.shape[0] == len(gold) == len(pred)):
        raise ValueError("latent_logits, gold, and pred must be aligned")
    vector_lines = ["\t".join(_float(v) for v in row) for row in logits]
    Path(vectors_path).write_text("\n".join(vector_lines) + "\n", encoding="utf-8", newline="\n")
    meta_lines = ["gold\tcluster"] + [f"{g}\t{c}" for g, c in zip(gold, pred)]
    Path(metadata_path).write_text("\n".join(meta_lines) + "\n", encoding="utf-8", newline="\n")


def read_projector(vectors_path: str | Path, metadata_path: str | Path):
    vectors = [
        [float(v) for v in line.split("\t")]
        for line in Path(vectors_path).read_text(encoding="utf-8").splitlines()
    ]
    meta_lines = Path(metadata_path).read_text(encoding="utf-8").splitlines()
    if meta_lines[0] != "gold\tcluster":
        raise ValueError("metadata file missing 'gold\\tcluster' header")
    gold, pred = [], []
    for line in meta_lines[1:]:
        g, c = line.split("\t")
        gold.append(g)
        pred.append(c)
    return np.asarray(vectors, dtype=np.float64), gold, pred


# ---------------------------------------------------------------------------
# pairwise association reports

@dataclass
class NpmiReport:
    labels: list[str]
    matrix: np.ndarray  # (G, G), NaN rows for zero-count labels
    records: list[tuple[str, str, float]]  # long format, upper triangle incl. diagonal


def npmi_report(
    contingencies: Contingency | list[Contingency],
    label_subset: Sequence | None = None,
) -> NpmiReport:
    """Association matrix from one or many runs' co-occurrence counts.

    Multiple contingencies are summed count-wise before any probability
    is formed, so pooled runs behave like one big run. ``label_subset``
    only selects which rows and columns to emit; probabilities are
    always computed over the full table, so a selected pair's value does
    not depend on which other labels are displayed.
    """
    if isinstance(contingencies, Contingency):
        combined = contingencies
    else:
        if not contingencies:
            raise ValueError("no contingencies given")
        combined = contingencies[0]
        for other in contingencies[1:]:
            combined = combined.add(other)

    matrix = npmi_matrix(combined)
    kept = combined.gold_labels
    if label_subset is not None:
        wanted = set(label_subset)
        rows = [i for i, label in enumerate(combined.gold_labels) if label in wanted]
        matrix = matrix[np.ix_(rows, rows)]
        kept = [combined.gold_labels[i] for i in rows]
    labels = [str(label) for label in kept]
    records = [
        (labels[i], labels[j], float(matrix[i, j]))
        for i in range(len(labels))
        for j in range(i, len(labels))
    ]
    return NpmiReport(labels=labels, matrix=matrix, records=records)


def write_npmi_csv(path: str | Path, report: NpmiReport) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["label", *report.labels])
    for label, row in zip(report.labels, report.matrix):
        writer.writerow([label] + [_float(v) for v in row])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8", newline="\n")


def write_npmi_long(path: str | Path, report: NpmiReport) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["label_a", "label_b", "npmi"])
    for a, b, value in report.records:
        writer.writerow([a, b, _float(value)])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8", newline="\n")


def write_metrics_report(path_txt: str | Path, path_json: str | Path, values: dict[str, float]) -> None:
    """Flat key/value text table plus a structured record file."""
    import json

    lines = [f"{k} = {_float(float(v))}" for k, v in values.items()]
    Path(path_txt).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    Path(path_json).write_text(
        json.dumps({k: float(v) for k, v in values.items()}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )
