"""Command-line entry point: build-manifest, train, eval, predict, inspect.

Exit codes: 0 success, 1 validation error, 2 I/O or file-format error.
Every failure prints a single ``error: ...`` line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import taxonomy
from .dataset import (
    DatasetManifest,
    ManifestRecord,
    class_histogram,
    join,
    load_manifest,
    read_embeddings,
    save_manifest,
)
from .errors import FileFormatError, TrainingError, ValidationError
from .evaluation import (
    EvalReport,
    build_report,
    emit_report,
    hierarchical_report,
)
from .neuralnet import forward, predict, softmax
from .training import (
    CheckpointMeta,
    TrainConfig,
    l2_normalize_rows,
    load_checkpoint,
    save_checkpoint,
    train,
)

RULES_ENV_VAR = "PATCLS_RULES"


def _load_rules(args) -> tuple[taxonomy.CaptionRule, ...]:
    path = args.rules or os.environ.get(RULES_ENV_VAR)
    if path:
        return taxonomy.load_caption_rules(path)
    return taxonomy.default_caption_rules()


def _rejects_path(out: str) -> str:
    stem, ext = os.path.splitext(out)
    return f"{stem}.rejects.tsv"


def _print_manifest_table(manifest: DatasetManifest) -> None:
    per_split = {s: class_histogram(manifest, s) for s in ("train", "val", "test")}
    print(f"{'class':<18} {'train':>8} {'val':>8} {'test':>8}")
    for name in manifest.class_names:
        print(
            f"{name:<18} {per_split['train'][name]:>8} "
            f"{per_split['val'][name]:>8} {per_split['test'][name]:>8}"
        )
    totals = [sum(per_split[s].values()) for s in ("train", "val", "test")]
    print(f"{'total':<18} {totals[0]:>8} {totals[1]:>8} {totals[2]:>8}")


def cmd_build_manifest(args) -> int:
    if args.task != "perspective":
        raise ValidationError("caption labeling applies to the perspective task only")
    rules = _load_rules(args)
    records: list[ManifestRecord] = []
    rejects: list[str] = []
    seen: set[str] = set()
    with open(args.captions, encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh]
    for lineno, line in enumerate(rows, start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise ValidationError(
                f"{args.captions}:{lineno}: expected id<TAB>split<TAB>caption"
            )
        rec_id, split, caption = parts
        if not rec_id:
            raise ValidationError(f"{args.captions}:{lineno}: empty id")
        if rec_id in seen:
            raise ValidationError(f"{args.captions}:{lineno}: duplicate id {rec_id!r}")
        if split not in ("train", "val", "test"):
            raise ValidationError(
                f"{args.captions}:{lineno}: unknown split {split!r}"
            )
        seen.add(rec_id)
        label = taxonomy.parse_perspective_caption(caption, rules)
        if label is None:
            rejects.append(line)
        else:
            records.append(ManifestRecord(rec_id, split, label, caption, ""))
    if not records and not rejects:
        print("warning: captions file has no rows", file=sys.stderr)
    manifest = DatasetManifest(
        task="perspective",
        records=tuple(records),
        class_names=taxonomy.task_class_names("perspective"),
    )
    save_manifest(manifest, args.out)
    with open(_rejects_path(args.out), "w", encoding="utf-8") as fh:
        for line in rejects:
            fh.write(line + "\n")
    print(f"wrote {len(records)} records to {args.out}, "
          f"{len(rejects)} rejects to {_rejects_path(args.out)}")
    _print_manifest_table(manifest)
    return 0


def cmd_train(args) -> int:
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        normalize_features=args.normalize,
        strict_join=not args.lenient,
    )
    manifest = load_manifest(args.manifest, args.task)
    store = read_embeddings(args.embeddings)
    train_set = join(manifest, store, "train", strict=config.strict_join)
    val_set = join(manifest, store, "val", strict=config.strict_join)
    model, history = train(train_set, val_set, config)
    meta = CheckpointMeta(task=args.task, seed=args.seed,
                          best_epoch=history.best_epoch)
    save_checkpoint(model, meta, args.out)

    history_path = os.path.join(os.path.dirname(args.out) or ".", "history.csv")
    with open(history_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "train_loss", "val_loss", "val_acc"))
        for epoch in range(len(history.train_loss)):
            writer.writerow(
                (
                    epoch,
                    repr(history.train_loss[epoch]),
                    repr(history.val_loss[epoch]),
                    repr(history.val_accuracy[epoch]),
                )
            )
    print(
        f"trained {config.epochs} epochs on {len(train_set)} samples; "
        f"best epoch {history.best_epoch} "
        f"(val loss {history.val_loss[history.best_epoch]:.6f}, "
        f"val acc {history.val_accuracy[history.best_epoch] * 100:.2f}%)"
    )
    print(f"checkpoint: {args.out}")
    print(f"history: {history_path}")
    return 0


def _report_summary(report: EvalReport) -> str:
    tag = report.granularity or report.task
    return (
        f"{tag}: macro top-1 {report.macro_top1 * 100:.2f}%  "
        f"micro top-1 {report.micro_top1 * 100:.2f}%  (n={report.n_test})"
    )


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    if meta.task == "image_type" and args.granularity is not None:
        raise ValidationError("granularity applies to the perspective task only")
    manifest = load_manifest(args.manifest, meta.task)
    if tuple(model.class_names) != manifest.class_names:
        raise ValidationError(
            "checkpoint class names do not match the manifest task"
        )
    store = read_embeddings(args.embeddings)
    dataset = join(manifest, store, args.split, strict=not args.lenient)
    if len(dataset) == 0:
        raise ValidationError(f"split {args.split!r} has no joined records")
    if dataset.X.shape[1] != model.input_dim:
        raise ValidationError(
            f"embedding dim {dataset.X.shape[1]} does not match "
            f"checkpoint input dim {model.input_dim}"
        )
    X = l2_normalize_rows(dataset.X) if args.normalize else dataset.X
    y_pred = predict(model, X)

    os.makedirs(args.out, exist_ok=True)
    if meta.task == "image_type":
        report = build_report(
            "image_type", None, dataset.y, y_pred, manifest.class_names
        )
        emit_report(report, os.path.join(args.out, "report.json"), "json")
        emit_report(report, os.path.join(args.out, "report"), "csv")
        print(_report_summary(report))
    else:
        reports = hierarchical_report(dataset.y, y_pred)
        tags = (
            ("C7", "C4", "C2")
            if args.granularity in (None, "all")
            else (args.granularity.upper(),)
        )
        for tag in tags:
            report = reports[tag]
            base = os.path.join(args.out, f"report_{tag.lower()}")
            emit_report(report, f"{base}.json", "json")
            emit_report(report, base, "csv")
            print(_report_summary(report))
    return 0


def cmd_predict(args) -> int:
    model, _meta = load_checkpoint(args.checkpoint)
    store = read_embeddings(args.embeddings)
    if store.dim != model.input_dim:
        raise ValidationError(
            f"embedding dim {store.dim} does not match "
            f"checkpoint input dim {model.input_dim}"
        )
    ids = list(store.entries)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", "predicted_label", "probability"))
        if ids:
            X = np.stack([store.entries[i] for i in ids])
            if args.normalize:
                X = l2_normalize_rows(X)
            logits, _ = forward(model, X)
            probs = softmax(logits)
            indices = np.argmax(logits, axis=1)
            for row, rec_id in enumerate(ids):
                k = indices[row]
                writer.writerow(
                    (rec_id, model.class_names[k], repr(float(probs[row, k])))
                )
    print(f"wrote {len(ids)} predictions to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    if args.embeddings:
        store = read_embeddings(args.embeddings)
        print(f"dim={store.dim} count={len(store.entries)}")
        return 0
    # Task is not stated in the file; detect it from the labels.
    last_error: ValidationError | None = None
    for task in taxonomy.TASKS:
        try:
            manifest = load_manifest(args.manifest, task)
            break
        except ValidationError as exc:
            last_error = exc
    else:
        raise ValidationError(f"labels match no known task ({last_error})")
    print(f"task: {manifest.task}")
    _print_manifest_table(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patcls",
        description="Patent image classification: taxonomy-aware MLP training "
        "and evaluation on frozen image embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "build-manifest",
        formatter_class=fmt,
        help="label captions via the keyword rule table and write a manifest",
    )
    p.add_argument("--captions", required=True,
                   help="TSV file with id<TAB>split<TAB>caption rows")
    p.add_argument("--out", required=True, help="manifest CSV to write")
    p.add_argument("--task", required=True, choices=["perspective"],
                   help="target task (captions only label perspectives)")
    p.add_argument("--rules", default=None,
                   help=f"caption rules file (overrides ${RULES_ENV_VAR} and the "
                        "built-in table)")
    p.set_defaults(func=cmd_build_manifest)

    p = sub.add_parser(
        "train",
        formatter_class=fmt,
        help="train the MLP head on embedding features",
    )
    p.add_argument("--manifest", required=True, help="manifest CSV")
    p.add_argument("--embeddings", required=True, help="PEMB feature file")
    p.add_argument("--task", required=True, choices=list(taxonomy.TASKS),
                   help="label space the manifest uses")
    p.add_argument("--out", required=True, help="checkpoint file to write (PMLP)")
    p.add_argument("--epochs", type=int, default=200, help="training epochs")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for init and batch shuffling")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize feature rows before training")
    p.add_argument("--lenient", action="store_true",
                   help="skip manifest ids missing from the store instead of failing")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "eval",
        formatter_class=fmt,
        help="evaluate a checkpoint and write report files",
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--granularity", default=None,
                   choices=["c7", "c4", "c2", "all"],
                   help="perspective task only; 'all' writes all three reports")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize features (match the training flag)")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "predict",
        formatter_class=fmt,
        help="predict classes for every vector in a PEMB file",
    )
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize features (match the training flag)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser(
        "inspect",
        formatter_class=fmt,
        help="print summary statistics for a manifest or embedding file",
    )
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--embeddings")
    group.add_argument("--manifest")
    p.set_defaults(func=cmd_inspect)

    return parser


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or exc.__class__.__name__


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, TrainingError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (FileFormatError, OSError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
