"""Command-line surface: outputs, determinism, strict parsing."""

import json

import numpy as np
import pytest

from lslprobe.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    assert code == 0, captured.err
    return json.loads(captured.out.strip().splitlines()[-1])


def _tree_bytes(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    """Small shared benchmark for CLI commands."""
    out = tmp_path_factory.mktemp("bench")
    code = main([
        "synth", "--out", str(out), "--subclasses", "3", "--points-per-class", "40",
        "--dim", "8", "--separation", "6", "--noise", "1", "--seed", "5",
    ])
    assert code == 0
    return out


def _fast_train_args(bench_dir, out, runs=1):
    return [
        "train",
        "--train", bench_dir / "task.train.jsonl",
        "--dev", bench_dir / "task.dev.jsonl",
        "--embeddings", bench_dir / "embeddings.lslf",
        "--out", out,
        "--runs", runs,
        "--num-latent", "8",
        "--hidden-size", "8",
        "--max-epochs", "4",
        "--seed", "3",
    ]


class TestSynthCommand:
    def test_deterministic(self, tmp_path, capsys):
        args = ["synth", "--subclasses", "2", "--points-per-class", "10", "--dim", "4",
                "--separation", "5", "--seed", "9"]
        _run(capsys, *args, "--out", tmp_path / "a")
        _run(capsys, *args, "--out", tmp_path / "b")
        assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")

    def test_summary_line(self, tmp_path, capsys):
        record = _run(capsys, "synth", "--out", tmp_path / "s", "--subclasses", "2",
                      "--points-per-class", "5", "--dim", "4", "--separation", "5")
        assert record["command"] == "synth"
        assert record["status"] == "ok"
        assert record["train_examples"] == 20


class TestMakeTask:
    @pytest.fixture()
    def corpus(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        lines = []
        for i in range(4):
            lines.append(json.dumps({
                "sentence_id": f"s{i}",
                "tokens": ["a", "b", "c", "d", "e"],
                "positive_units": [{"span1": [0, 2], "gold": "X"}, {"span1": [2, 3], "gold": "Y"}],
                "candidate_spans": [[0, 2], [2, 3], [3, 5], [1, 4], [0, 1]],
            }))
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_builds_balanced_task(self, corpus, tmp_path, capsys):
        out = tmp_path / "task.jsonl"
        record = _run(capsys, "make-task", "--corpus", corpus, "--out", out,
                      "--strategy", "from_candidates", "--ratio", "1.0", "--seed", "1")
        assert record["positives"] == 8
        assert record["negatives"] == 8
        assert out.exists()

    def test_deterministic(self, corpus, tmp_path, capsys):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            _run(capsys, "make-task", "--corpus", corpus, "--out", out,
                 "--strategy", "from_candidates", "--ratio", "1.0", "--seed", "7")
        assert a.read_bytes() == b.read_bytes()

    def test_strict_rejects_unknown_field(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({
            "sentence_id": "s0", "tokens": ["a"], "positive_units": [], "surprise": 1,
        }) + "\n")
        code = main(["make-task", "--corpus", str(path), "--out", str(tmp_path / "o.jsonl"),
                     "--strategy", "random_spans", "--strict"])
        captured = capsys.readouterr()
        assert code == 1
        assert "unknown" in captured.err

    def test_pair_strategy(self, tmp_path, capsys):
        path = tmp_path / "pairs.jsonl"
        path.write_text(json.dumps({
            "sentence_id": "s0",
            "tokens": ["a", "b", "c", "d"],
            "positive_units": [{"span1": [0, 1], "span2": [2, 3], "gold": "rel"}],
        }) + "\n")
        out = tmp_path / "task.jsonl"
        record = _run(capsys, "make-task", "--corpus", path, "--out", out,
                      "--strategy", "closest_unattached", "--ratio", "1.0", "--seed", "0")
        assert record["negatives"] == 1


class TestTrainSelectReport:
    def test_train_writes_run_dirs(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        record = _run(capsys, *_fast_train_args(bench_dir, out, runs=2))
        assert record["runs"] == ["run-0", "run-1"]
        for name in ("config.txt", "checkpoint.bin", "assignments.tsv", "labels.tsv",
                     "logits.tsv", "probs.tsv", "losses.csv"):
            assert (out / "run-0" / name).exists()

    def test_train_deterministic(self, bench_dir, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        _run(capsys, *_fast_train_args(bench_dir, a))
        _run(capsys, *_fast_train_args(bench_dir, b))
        assert _tree_bytes(a) == _tree_bytes(b)

    def test_parallel_jobs_match_sequential(self, bench_dir, tmp_path, capsys):
        seq, par = tmp_path / "seq", tmp_path / "par"
        _run(capsys, *_fast_train_args(bench_dir, seq, runs=2))
        _run(capsys, *_fast_train_args(bench_dir, par, runs=2), "--jobs", "2")
        assert _tree_bytes(seq) == _tree_bytes(par)

    def test_select_marks_choice(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        _run(capsys, *_fast_train_args(bench_dir, out, runs=3))
        record = _run(capsys, "select", out / "run-0", out / "run-1", out / "run-2")
        assert record["chosen_index"] in (0, 1, 2)
        marker = out / "selected.txt"
        assert marker.exists()
        assert f"run-{record['chosen_index']}" in marker.read_text()

    def test_report_outputs(self, bench_dir, tmp_path, capsys):
        runs = tmp_path / "runs"
        _run(capsys, *_fast_train_args(bench_dir, runs))
        report_dir = tmp_path / "report"
        record = _run(
            capsys, "report", "--run", runs / "run-0",
            "--task", bench_dir / "task.dev.jsonl", "--out", report_dir,
            "--npmi", "--labelwise", "--projector", "--summary",
            "--encoder", "synth-enc", "--task-name", "synth",
        )
        for name in ("metrics.txt", "metrics.json", "labelwise.csv", "npmi.csv",
                     "npmi_long.csv", "vectors.tsv", "metadata.tsv", "summary.csv", "summary.txt"):
            assert (report_dir / name).exists(), name
        metrics = json.loads((report_dir / "metrics.json").read_text())
        assert set(metrics) == {"precision", "recall", "f1", "accuracy", "diversity", "uncertainty"}
        vectors = (report_dir / "vectors.tsv").read_text().splitlines()
        metadata = (report_dir / "metadata.tsv").read_text().splitlines()
        assert len(vectors) == len(metadata) - 1
        assert record["f1"] == pytest.approx(metrics["f1"])

    def test_report_deterministic(self, bench_dir, tmp_path, capsys):
        runs = tmp_path / "runs"
        _run(capsys, *_fast_train_args(bench_dir, runs))
        for d in ("r1", "r2"):
            _run(capsys, "report", "--run", runs / "run-0",
                 "--task", bench_dir / "task.dev.jsonl", "--out", tmp_path / d,
                 "--npmi", "--labelwise", "--projector")
        assert _tree_bytes(tmp_path / "r1") == _tree_bytes(tmp_path / "r2")


class TestTuneAndAblate:
    def test_tune_hidden(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "chosen.txt"
        record = _run(
            capsys, "tune-hidden",
            "--train", bench_dir / "task.train.jsonl",
            "--dev", bench_dir / "task.dev.jsonl",
            "--embeddings", bench_dir / "embeddings.lslf",
            "--sizes", "2,4", "--out", out, "--max-epochs", "3", "--seed", "0",
        )
        assert record["chosen"] in (2, 4)
        assert out.read_text().startswith("chosen = ")

    def test_ablate_writes_grid(self, bench_dir, tmp_path, capsys):
        record = _run(
            capsys, "ablate",
            "--train", bench_dir / "task.train.jsonl",
            "--dev", bench_dir / "task.dev.jsonl",
            "--embeddings", bench_dir / "embeddings.lslf",
            "--out", tmp_path, "--num-latent", "8", "--hidden-size", "8",
            "--max-epochs", "3", "--seed", "0",
        )
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert len(lines) == 5
        assert set(record["cells"]) == {"none", "+be", "+ie", "+be+ie"}

    def test_config_file_with_flag_override(self, bench_dir, tmp_path, capsys):
        config = tmp_path / "cfg.txt"
        config.write_text("num_latent = 8\nhidden_size = 4\nmax_epochs = 2\nseed = 1\n")
        out = tmp_path / "runs"
        _run(capsys, "train",
             "--train", bench_dir / "task.train.jsonl",
             "--dev", bench_dir / "task.dev.jsonl",
             "--embeddings", bench_dir / "embeddings.lslf",
             "--out", out, "--config", config, "--hidden-size", "8")
        text = (out / "run-0" / "config.txt").read_text()
        assert "hidden_size = 8" in text  # flag wins
        assert "num_latent = 8" in text   # file value survives


def test_unknown_command_fails():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_missing_file_is_clean_error(tmp_path, capsys):
    code = main(["train", "--train", str(tmp_path / "nope.jsonl"),
                 "--dev", str(tmp_path / "nope.jsonl"),
                 "--embeddings", str(tmp_path / "nope.lslf"),
                 "--out", str(tmp_path / "o")])
    captured = capsys.readouterr()
    assert code == 1
    assert "error:" in captured.err
