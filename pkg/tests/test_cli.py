import json
import re

import numpy as np
import pytest

from patcls.cli import main
from patcls.dataset import EmbeddingStore, load_manifest, write_embeddings


def build_workspace(root, dim=8, per_class=10, sigma=0.05, seed=0):
    """Embeddings + manifest for three image-type classes, cleanly separable."""
    rng = np.random.default_rng(seed)
    labels = ("graph", "maths", "table")
    centers = rng.normal(size=(len(labels), dim)) * 3.0
    rows = ["id,split,label,caption,path"]
    entries = {}
    serial = 0
    for class_idx, label in enumerate(labels):
        for k in range(per_class):
            split = "train" if k < 6 else ("val" if k < 8 else "test")
            rec_id = f"r{serial:03d}"
            serial += 1
            entries[rec_id] = (
                centers[class_idx] + rng.normal(scale=sigma, size=dim)
            ).astype(np.float32)
            rows.append(f"{rec_id},{split},{label},,")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    pemb = root / "features.pemb"
    write_embeddings(EmbeddingStore(dim=dim, entries=entries), str(pemb))
    return manifest, pemb


def run_train(root, manifest, pemb, epochs=25, seed=3):
    out = root / "model.pmlp"
    code = main([
        "train", "--manifest", str(manifest), "--embeddings", str(pemb),
        "--task", "image_type", "--out", str(out),
        "--epochs", str(epochs), "--batch", "8", "--seed", str(seed),
    ])
    assert code == 0
    return out


class TestTrainCommand:
    def test_writes_checkpoint_and_history(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        out = run_train(tmp_path, manifest, pemb)
        assert out.exists()
        history = tmp_path / "history.csv"
        lines = history.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_acc"
        assert len(lines) == 26
        assert "best epoch" in capsys.readouterr().out

    def test_fixed_seed_reproduces_bytes(self, tmp_path):
        manifest, pemb = build_workspace(tmp_path)
        run1 = tmp_path / "run1"
        run2 = tmp_path / "run2"
        for d in (run1, run2):
            d.mkdir()
            code = main([
                "train", "--manifest", str(manifest), "--embeddings", str(pemb),
                "--task", "image_type", "--out", str(d / "model.pmlp"),
                "--epochs", "10", "--batch", "8", "--seed", "7",
            ])
            assert code == 0
        assert (run1 / "model.pmlp").read_bytes() == \
            (run2 / "model.pmlp").read_bytes()
        assert (run1 / "history.csv").read_bytes() == \
            (run2 / "history.csv").read_bytes()

    def test_missing_val_split_fails(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        text = manifest.read_text().replace(",val,", ",train,")
        manifest.write_text(text)
        code = main([
            "train", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--task", "image_type", "--out", str(tmp_path / "m.pmlp"),
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "\n" not in err.rstrip("\n")

    def test_help_lists_paper_defaults(self, capsys):
        with pytest.raises(SystemExit):
            main(["train", "--help"])
        text = capsys.readouterr().out
        assert re.search(r"--epochs.*\n?.*200", text)
        assert re.search(r"--batch.*\n?.*32", text)
        assert "0.001" in text

    def test_strict_join_failure_without_lenient(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        with open(manifest, "a", encoding="utf-8") as fh:
            fh.write("ghost,train,graph,,\n")
        code = main([
            "train", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--task", "image_type", "--out", str(tmp_path / "m.pmlp"),
            "--epochs", "2",
        ])
        assert code == 1
        assert "ghost" in capsys.readouterr().err

    def test_lenient_join_trains(self, tmp_path):
        manifest, pemb = build_workspace(tmp_path)
        with open(manifest, "a", encoding="utf-8") as fh:
            fh.write("ghost,train,graph,,\n")
        code = main([
            "train", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--task", "image_type", "--out", str(tmp_path / "m.pmlp"),
            "--epochs", "2", "--lenient",
        ])
        assert code == 0


class TestEvalCommand:
    def test_perfect_synthetic_predictions(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb)
        outdir = tmp_path / "reports"
        code = main([
            "eval", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--checkpoint", str(ckpt), "--split", "test",
            "--out", str(outdir),
        ])
        assert code == 0
        report = json.loads((outdir / "report.json").read_text())
        assert report["task"] == "image_type"
        assert report["macro_top1"] == 1.0
        assert (outdir / "report_confusion.csv").exists()
        assert (outdir / "report_metrics.csv").exists()
        assert "macro top-1 100.00%" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, tmp_path):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb)
        outs = []
        for name in ("r1", "r2"):
            outdir = tmp_path / name
            assert main([
                "eval", "--manifest", str(manifest), "--embeddings", str(pemb),
                "--checkpoint", str(ckpt), "--out", str(outdir),
            ]) == 0
            outs.append((outdir / "report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_granularity_rejected_for_image_type(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb, epochs=2)
        code = main([
            "eval", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--checkpoint", str(ckpt), "--out", str(tmp_path / "r"),
            "--granularity", "c4",
        ])
        assert code == 1
        assert "perspective task only" in capsys.readouterr().err


def build_perspective_workspace(root, dim=6, per_class=8, seed=1):
    rng = np.random.default_rng(seed)
    from patcls.taxonomy import PERSPECTIVE_LEAF_NAMES
    centers = rng.normal(size=(7, dim)) * 3.0
    rows = ["id,split,label,caption,path"]
    entries = {}
    serial = 0
    for class_idx, label in enumerate(PERSPECTIVE_LEAF_NAMES):
        for k in range(per_class):
            split = "train" if k < 5 else ("val" if k < 7 else "test")
            rec_id = f"p{serial:03d}"
            serial += 1
            entries[rec_id] = (
                centers[class_idx] + rng.normal(scale=0.05, size=dim)
            ).astype(np.float32)
            rows.append(f"{rec_id},{split},{label},,")
    manifest = root / "pmanifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    pemb = root / "pfeatures.pemb"
    write_embeddings(EmbeddingStore(dim=dim, entries=entries), str(pemb))
    return manifest, pemb


class TestPerspectiveEval:
    def test_granularity_all_emits_three_reports(self, tmp_path):
        manifest, pemb = build_perspective_workspace(tmp_path)
        ckpt = tmp_path / "p.pmlp"
        assert main([
            "train", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--task", "perspective", "--out", str(ckpt),
            "--epochs", "25", "--batch", "8", "--seed", "0",
        ]) == 0
        outdir = tmp_path / "reports"
        assert main([
            "eval", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--checkpoint", str(ckpt), "--out", str(outdir),
            "--granularity", "all",
        ]) == 0
        produced = sorted(p.name for p in outdir.glob("*.json"))
        assert produced == ["report_c2.json", "report_c4.json", "report_c7.json"]
        c2 = json.loads((outdir / "report_c2.json").read_text())
        c7 = json.loads((outdir / "report_c7.json").read_text())
        assert c2["class_names"] == ["perspective_view", "non_perspective"]
        assert c2["micro_top1"] >= c7["micro_top1"]

    def test_single_granularity(self, tmp_path):
        manifest, pemb = build_perspective_workspace(tmp_path)
        ckpt = tmp_path / "p.pmlp"
        assert main([
            "train", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--task", "perspective", "--out", str(ckpt),
            "--epochs", "3", "--batch", "8",
        ]) == 0
        outdir = tmp_path / "only_c4"
        assert main([
            "eval", "--manifest", str(manifest), "--embeddings", str(pemb),
            "--checkpoint", str(ckpt), "--out", str(outdir),
            "--granularity", "c4",
        ]) == 0
        assert [p.name for p in sorted(outdir.glob("*.json"))] == ["report_c4.json"]


class TestPredictCommand:
    def test_rows_follow_store_order(self, tmp_path):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb, epochs=5)
        out = tmp_path / "preds.csv"
        assert main([
            "predict", "--embeddings", str(pemb), "--checkpoint", str(ckpt),
            "--out", str(out),
        ]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "id,predicted_label,probability"
        ids = [line.split(",")[0] for line in lines[1:]]
        assert ids == [f"r{i:03d}" for i in range(30)]
        for line in lines[1:]:
            prob = float(line.split(",")[2])
            assert 0.0 < prob <= 1.0

    def test_tie_logits_pick_first_class(self, tmp_path):
        from patcls.neuralnet import init_mlp
        from patcls.training import CheckpointMeta, save_checkpoint
        model = init_mlp(4, 3, seed=0, class_names=("graph", "maths", "table"))
        for w in model.weights:
            w[:] = 0.0
        ckpt = tmp_path / "zero.pmlp"
        save_checkpoint(model, CheckpointMeta("image_type", 0, 0), str(ckpt))
        pemb = tmp_path / "e.pemb"
        write_embeddings(
            EmbeddingStore(dim=4, entries={
                "x": np.ones(4, dtype=np.float32)}), str(pemb))
        out = tmp_path / "preds.csv"
        assert main(["predict", "--embeddings", str(pemb),
                     "--checkpoint", str(ckpt), "--out", str(out)]) == 0
        row = out.read_text().splitlines()[1].split(",")
        assert row[1] == "graph"
        assert float(row[2]) == pytest.approx(1 / 3)

    def test_dim_mismatch_fails(self, tmp_path, capsys):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb, epochs=2)
        other = tmp_path / "other.pemb"
        write_embeddings(
            EmbeddingStore(dim=5, entries={
                "x": np.ones(5, dtype=np.float32)}), str(other))
        assert main(["predict", "--embeddings", str(other),
                     "--checkpoint", str(ckpt),
                     "--out", str(tmp_path / "p.csv")]) == 1
        assert "dim" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, tmp_path):
        manifest, pemb = build_workspace(tmp_path)
        ckpt = run_train(tmp_path, manifest, pemb, epochs=5)
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main(["predict", "--embeddings", str(pemb),
                         "--checkpoint", str(ckpt), "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestBuildManifestCommand:
    CAPTIONS = (
        "c1\ttrain\tFIG. 1 is a perspective view of the widget\n"
        "c2\ttest\ta rear elevational view of the housing\n"
        "c3\ttrain\ta cross-sectional view taken along line 2-2\n"
    )

    def test_parseable_and_rejected_rows_split(self, tmp_path, capsys):
        captions = tmp_path / "captions.tsv"
        captions.write_text(self.CAPTIONS, encoding="utf-8")
        out = tmp_path / "manifest.csv"
        assert main(["build-manifest", "--captions", str(captions),
                     "--out", str(out), "--task", "perspective"]) == 0
        manifest = load_manifest(str(out), "perspective")
        assert [r.id for r in manifest.records] == ["c1", "c2"]
        assert [r.label for r in manifest.records] == \
            ["perspective_view", "rear"]
        rejects = (tmp_path / "manifest.rejects.tsv").read_text().splitlines()
        assert len(rejects) == 1 and rejects[0].startswith("c3\t")
        stdout = capsys.readouterr().out
        assert "2 records" in stdout and "1 rejects" in stdout

    def test_summary_counts_match_histogram(self, tmp_path, capsys):
        from patcls.dataset import class_histogram
        captions = tmp_path / "captions.tsv"
        captions.write_text(self.CAPTIONS, encoding="utf-8")
        out = tmp_path / "manifest.csv"
        main(["build-manifest", "--captions", str(captions),
              "--out", str(out), "--task", "perspective"])
        stdout = capsys.readouterr().out
        manifest = load_manifest(str(out), "perspective")
        train_hist = class_histogram(manifest, "train")
        line = next(l for l in stdout.splitlines()
                    if l.startswith("perspective_view"))
        assert int(line.split()[1]) == train_hist["perspective_view"] == 1

    def test_malformed_row_names_line(self, tmp_path, capsys):
        captions = tmp_path / "captions.tsv"
        captions.write_text("c1\ttrain\tok view\nc2 only-one-field\n",
                            encoding="utf-8")
        assert main(["build-manifest", "--captions", str(captions),
                     "--out", str(tmp_path / "m.csv"),
                     "--task", "perspective"]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_empty_captions_file_warns(self, tmp_path, capsys):
        captions = tmp_path / "captions.tsv"
        captions.write_text("", encoding="utf-8")
        out = tmp_path / "m.csv"
        assert main(["build-manifest", "--captions", str(captions),
                     "--out", str(out), "--task", "perspective"]) == 0
        assert "warning" in capsys.readouterr().err
        assert load_manifest(str(out), "perspective").records == ()

    def test_rules_file_flag(self, tmp_path):
        rules = tmp_path / "rules.tsv"
        rules.write_text("1\tbird's eye view\ttop\n", encoding="utf-8")
        captions = tmp_path / "captions.tsv"
        captions.write_text("c1\ttrain\ta bird's eye view of the park\n",
                            encoding="utf-8")
        out = tmp_path / "m.csv"
        assert main(["build-manifest", "--captions", str(captions),
                     "--out", str(out), "--task", "perspective",
                     "--rules", str(rules)]) == 0
        manifest = load_manifest(str(out), "perspective")
        assert manifest.records[0].label == "top"

    def test_rules_env_var(self, tmp_path, monkeypatch):
        rules = tmp_path / "rules.tsv"
        rules.write_text("1\tworm's eye view\tbottom\n", encoding="utf-8")
        monkeypatch.setenv("PATCLS_RULES", str(rules))
        captions = tmp_path / "captions.tsv"
        captions.write_text("c1\ttrain\tthe worm's eye view thereof\n",
                            encoding="utf-8")
        out = tmp_path / "m.csv"
        assert main(["build-manifest", "--captions", str(captions),
                     "--out", str(out), "--task", "perspective"]) == 0
        assert load_manifest(str(out), "perspective").records[0].label == "bottom"


class TestInspectCommand:
    def test_embedding_summary_line(self, tmp_path, capsys):
        pemb = tmp_path / "e.pemb"
        entries = {f"id{i}": np.zeros(512, dtype=np.float32) for i in range(10)}
        write_embeddings(EmbeddingStore(dim=512, entries=entries), str(pemb))
        assert main(["inspect", "--embeddings", str(pemb)]) == 0
        assert capsys.readouterr().out.strip() == "dim=512 count=10"

    def test_truncated_embeddings_exit_2(self, tmp_path, capsys):
        pemb = tmp_path / "e.pemb"
        entries = {"a": np.zeros(4, dtype=np.float32)}
        write_embeddings(EmbeddingStore(dim=4, entries=entries), str(pemb))
        pemb.write_bytes(pemb.read_bytes()[:-3])
        assert main(["inspect", "--embeddings", str(pemb)]) == 2
        assert "truncated" in capsys.readouterr().err

    def test_manifest_histogram(self, tmp_path, capsys):
        manifest, _ = build_workspace(tmp_path)
        assert main(["inspect", "--manifest", str(manifest)]) == 0
        out = capsys.readouterr().out
        assert "task: image_type" in out
        line = next(l for l in out.splitlines() if l.startswith("graph"))
        assert line.split()[1:] == ["6", "2", "2"]

    def test_perspective_manifest_detected(self, tmp_path, capsys):
        manifest, _ = build_perspective_workspace(tmp_path)
        assert main(["inspect", "--manifest", str(manifest)]) == 0
        out = capsys.readouterr().out
        assert "task: perspective" in out
        line = next(l for l in out.splitlines() if l.startswith("front"))
        assert line.split()[1:] == ["5", "2", "1"]

    def test_missing_file_exit_2(self, tmp_path, capsys):
        assert main(["inspect", "--embeddings",
                     str(tmp_path / "nope.pemb")]) == 2
        assert capsys.readouterr().err.startswith("error:")
