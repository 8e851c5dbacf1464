"""Command-line surface for the probing pipeline.

Every command is deterministic given an explicit --seed and finishes by
printing one machine-readable JSON line on stdout. Exit code 0 means
all outputs were written and validated.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, reporting, synth, training
from .embfile import load_embeddings
from .metrics import Contingency, binary_accuracy, diversity, uncertainty
from .probe import gather_features


def _emit(command: str, **payload) -> None:
    record = {"command": command, "status": "ok"}
    record.update(payload)
    print(json.dumps(record, sort_keys=True))


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    group = parser.add_argument_group("config overrides")
    group.add_argument("--num-latent", type=int)
    group.add_argument("--alpha", type=float)
    group.add_argument("--beta", type=float)
    group.add_argument("--hidden-size", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--max-epochs", type=int)
    group.add_argument("--learning-rate", type=float)
    group.add_argument("--seed", type=int)
    group.add_argument("--optimizer", choices=training.OPTIMIZERS)
    group.add_argument("--patience", type=int)


_CONFIG_KEYS = (
    "num_latent", "alpha", "beta", "hidden_size", "batch_size",
    "max_epochs", "learning_rate", "seed", "optimizer", "patience",
)


def _resolve_config(args: argparse.Namespace) -> training.TrainConfig:
    mapping: dict[str, str] = {}
    if args.config is not None:
        mapping = training.parse_config_text(args.config.read_text(encoding="utf-8"))
    config = training.TrainConfig.from_mapping(mapping)
    overrides = {
        key: getattr(args, key) for key in _CONFIG_KEYS if getattr(args, key, None) is not None
    }
    return replace(config, **overrides) if overrides else config


# ---------------------------------------------------------------------------
# commands

def _cmd_make_task(args: argparse.Namespace) -> None:
    sentences = data.load_corpus(args.corpus, strict=args.strict)
    examples: list[data.SpanTarget] = []
    exhausted = 0
    for i, sentence in enumerate(sentences):
        examples.extend(data.positives_as_targets(sentence))
        # distinct deterministic stream per sentence
        seed = args.seed * 1_000_003 + i
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", data.SamplingWarning)
            if args.strategy in ("from_candidates", "random_spans"):
                negatives = data.sample_negative_spans(sentence, args.strategy, args.ratio, seed)
            else:
                negatives = data.sample_negative_pairs(
                    sentence, args.strategy, args.ratio, seed, scope=args.scope
                )
        exhausted += sum(1 for w in caught if issubclass(w.category, data.SamplingWarning))
        examples.extend(negatives)
    data.write_task(args.out, examples)
    positives = sum(1 for e in examples if e.label == 1)
    _emit(
        "make-task",
        out=str(args.out),
        examples=len(examples),
        positives=positives,
        negatives=len(examples) - positives,
        exhausted_sentences=exhausted,
    )


def _cmd_tune_hidden(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    embeddings = load_embeddings(args.embeddings)
    train_features = gather_features(data.load_task(args.train, embeddings, strict=args.strict), embeddings)
    dev_features = gather_features(data.load_task(args.dev, embeddings, strict=args.strict), embeddings)
    sizes = sorted({int(s) for s in args.sizes.split(",")})
    chosen, accuracies = training.tune_hidden_size(
        train_features, dev_features, sizes, config, threshold=args.threshold
    )
    lines = [f"chosen = {chosen}"] + [
        f"size {size} accuracy = {acc:.9g}" for size, acc in zip(sizes, accuracies)
    ]
    args.out.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    _emit("tune-hidden", out=str(args.out), chosen=chosen,
          accuracies={str(s): a for s, a in zip(sizes, accuracies)})


def _train_one(
    train_path: str, dev_path: str, emb_path: str, config: training.TrainConfig,
    run_dir: str, strict: bool,
) -> float:
    embeddings = load_embeddings(emb_path)
    train_set = data.load_task(train_path, embeddings, strict=strict)
    dev_set = data.load_task(dev_path, embeddings, strict=strict)
    run = training.train(train_set, dev_set, embeddings, config)
    training.save_run(run_dir, run)
    return run.dev_accuracy


def _cmd_train(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i in range(args.runs):
        run_config = replace(config, seed=config.seed + i)
        jobs.append((str(args.train), str(args.dev), str(args.embeddings), run_config,
                     str(args.out / f"run-{i}"), args.strict))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            accuracies = list(pool.map(_train_one, *zip(*jobs)))
    else:
        accuracies = [_train_one(*job) for job in jobs]
    _emit(
        "train",
        out=str(args.out),
        runs=[f"run-{i}" for i in range(args.runs)],
        dev_accuracy={f"run-{i}": acc for i, acc in enumerate(accuracies)},
    )


def _cmd_select(args: argparse.Namespace) -> None:
    runs = [training.load_run(d) for d in args.run_dirs]
    chosen = training.select_saved(runs)
    mask = runs[0].labels == 1
    scores = training.pairwise_consistency([run.hard[mask] for run in runs])
    marker = args.out if args.out is not None else Path(args.run_dirs[0]).parent / "selected.txt"
    lines = [f"chosen = {Path(args.run_dirs[chosen]).name}"] + [
        f"{Path(d).name} mean_pairwise_f1 = {score:.9g}"
        for d, score in zip(args.run_dirs, scores)
    ]
    marker.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    link = marker.parent / "selected"
    try:
        if link.is_symlink() or link.exists():
            link.unlink()
        link.symlink_to(Path(args.run_dirs[chosen]).resolve())
    except OSError:
        pass  # marker file is the canonical record; symlink is best effort
    _emit(
        "select",
        chosen=str(args.run_dirs[chosen]),
        chosen_index=chosen,
        marker=str(marker),
        scores={Path(d).name: float(s) for d, s in zip(args.run_dirs, scores)},
    )


def _restricted(run: training.SavedRun) -> tuple[list[str], list[int], np.ndarray, np.ndarray]:
    mask = run.labels == 1
    gold = [g for g, keep in zip(run.gold, mask) if keep]
    if any(g is None for g in gold):
        raise ValueError("positive dev examples are missing gold labels")
    return gold, list(run.hard[mask]), run.distribution[mask], run.latent[mask]


def _cmd_report(args: argparse.Namespace) -> None:
    run = training.load_run(args.run)
    dataset = data.load_task(args.task, strict=args.strict)
    if len(dataset.examples) != len(run.example_ids):
        raise ValueError(
            f"task file has {len(dataset.examples)} records but run evaluated {len(run.example_ids)}"
        )
    for i, (example_id, target) in enumerate(zip(run.example_ids, dataset.examples)):
        if example_id != f"{target.sentence_id}#{i}":
            raise ValueError(
                f"task file does not match the run's dev split at record {i + 1}: "
                f"run saw {example_id!r}, file has {target.sentence_id!r}"
            )
    # gold comes from the task file, the canonical source
    run.gold = [t.gold for t in dataset.examples]
    run.labels = np.asarray([t.label for t in dataset.examples], dtype=np.int64)
    gold, pred, dist, latent = _restricted(run)

    args.out.mkdir(parents=True, exist_ok=True)
    outputs = []

    from .metrics import b_cubed

    precision, recall, f1 = b_cubed(gold, pred)
    values = {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": binary_accuracy(run.binary_prob, run.labels),
        "diversity": diversity(pred),
        "uncertainty": uncertainty(dist),
    }
    reporting.write_metrics_report(args.out / "metrics.txt", args.out / "metrics.json", values)
    outputs += ["metrics.txt", "metrics.json"]

    if args.labelwise:
        rows = reporting.labelwise_table(gold, pred)
        reporting.write_labelwise_csv(args.out / "labelwise.csv", rows)
        outputs.append("labelwise.csv")
    if args.npmi:
        report = reporting.npmi_report(Contingency.from_assignments(gold, pred))
        reporting.write_npmi_csv(args.out / "npmi.csv", report)
        reporting.write_npmi_long(args.out / "npmi_long.csv", report)
        outputs += ["npmi.csv", "npmi_long.csv"]
    if args.projector:
        reporting.export_projector(
            latent, gold, pred, args.out / "vectors.tsv", args.out / "metadata.tsv"
        )
        outputs += ["vectors.tsv", "metadata.tsv"]
    if args.summary:
        record = {"task": args.task_name, "encoder": args.encoder, **values}
        reporting.write_summary_csv(args.out / "summary.csv", [record])
        (args.out / "summary.txt").write_text(
            reporting.summary_table([record]), encoding="utf-8", newline="\n"
        )
        outputs += ["summary.csv", "summary.txt"]

    _emit("report", out=str(args.out), outputs=outputs, **{k: float(v) for k, v in values.items()})


def _cmd_ablate(args: argparse.Namespace) -> None:
    config = _resolve_config(args)
    embeddings = load_embeddings(args.embeddings)
    train_features = gather_features(data.load_task(args.train, embeddings, strict=args.strict), embeddings)
    dev_features = gather_features(data.load_task(args.dev, embeddings, strict=args.strict), embeddings)
    rows = training.ablation_grid(train_features, dev_features, config)

    import csv
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    columns = ["cell", "alpha", "beta", "precision", "recall", "f1", "accuracy", "diversity", "uncertainty"]
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row["cell"], f"{row['alpha']:.9g}", f"{row['beta']:.9g}"]
                        + [f"{row[c]:.9g}" for c in columns[3:]])
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "ablation.csv").write_text(buffer.getvalue(), encoding="utf-8", newline="\n")
    _emit(
        "ablate",
        out=str(args.out / "ablation.csv"),
        cells={row["cell"]: {"f1": row["f1"], "diversity": row["diversity"],
                            "uncertainty": row["uncertainty"]} for row in rows},
    )


def _cmd_synth(args: argparse.Namespace) -> None:
    bench = synth.generate(
        out_dir=args.out,
        num_subclasses=args.subclasses,
        points_per_class=args.points_per_class,
        dim=args.dim,
        separation=args.separation,
        noise=args.noise,
        negative_fraction=args.negative_fraction,
        seed=args.seed,
        layers=args.layers,
        signal_layer=args.signal_layer,
        dev_points_per_class=args.dev_points_per_class,
    )
    _emit(
        "synth",
        out=str(args.out),
        files=sorted(bench.manifest["files"].values()) + [synth.MANIFEST_NAME],
        oracle_accuracy=bench.manifest["oracle_accuracy"],
        train_examples=len(bench.train.examples),
        dev_examples=len(bench.dev.examples),
    )


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lslprobe",
        description="Train latent-subclass probes over precomputed embeddings and "
        "evaluate the induced clusterings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-task", help="build a binary task file from an annotated corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument(
        "--strategy",
        required=True,
        choices=["from_candidates", "random_spans", "random_unattached", "closest_unattached"],
    )
    p.add_argument("--ratio", type=float, default=1.0, help="negatives per positive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scope", choices=["per_anchor", "per_sentence"], default="per_anchor")
    p.add_argument("--strict", action="store_true", help="reject unknown record fields")
    p.set_defaults(func=_cmd_make_task)

    p = sub.add_parser("tune-hidden", help="pick the smallest adequate hidden size")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--dev", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--sizes", required=True, help="comma-separated candidate sizes")
    p.add_argument("--threshold", type=float, default=0.97)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strict", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_tune_hidden)

    p = sub.add_parser("train", help="run one or more training restarts")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--dev", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="worker pool size for restarts")
    p.add_argument("--strict", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("select", help="pick the most consistent run")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", type=Path, default=None, help="marker file path")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("report", help="emit analysis artifacts for a run")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--task", type=Path, required=True, help="gold dev task file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--npmi", action="store_true")
    p.add_argument("--labelwise", action="store_true")
    p.add_argument("--projector", action="store_true")
    p.add_argument("--summary", action="store_true")
    p.add_argument("--encoder", default="unknown", help="encoder name for summary rows")
    p.add_argument("--task-name", default="task", help="task name for summary rows")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("ablate", help="run the regularizer on/off grid")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--dev", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strict", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("synth", help="generate a planted-subclass benchmark")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subclasses", type=int, required=True)
    p.add_argument("--points-per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--separation", type=float, required=True)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--negative-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--signal-layer", type=int, default=None)
    p.add_argument("--dev-points-per-class", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # surface a clean one-line failure
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
