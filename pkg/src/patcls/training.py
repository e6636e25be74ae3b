"""Mini-batch training with Adam and validation-loss model selection.

A run is: for each epoch, shuffle the training indices with a PCG64
generator seeded from ``config.seed + epoch``, walk sequential mini-batches
(the last one may be short), and apply one Adam step per batch. After each
epoch the full validation loss is computed; the returned model is the
in-memory snapshot from the epoch with the lowest validation loss (first
epoch on ties). Everything is deterministic for a fixed config.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import LabeledDataset
from .errors import FileFormatError, TrainingError, ValidationError
from .neuralnet import (
    HIDDEN_DIMS,
    MlpModel,
    adam_init,
    adam_step,
    backward,
    cross_entropy,
    forward,
    grad_list,
    init_mlp,
    model_params,
    predict,
    softmax,
)

PMLP_MAGIC = b"PMLP"
PMLP_VERSION = 1

TASK_TAGS = {"image_type": 0, "perspective": 1}
TAG_TASKS = {v: k for k, v in TASK_TAGS.items()}


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    normalize_features: bool = False
    strict_join: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {self.seed}")


@dataclass
class TrainHistory:
    train_loss: list[float]
    val_loss: list[float]
    val_accuracy: list[float]
    best_epoch: int


@dataclass
class EpochInfo:
    """Instrumentation payload handed to the optional per-epoch hook.

    ``model`` is the live model; copy() it before keeping a reference.
    """

    epoch: int
    order: np.ndarray
    train_loss: float
    val_loss: float
    val_accuracy: float
    model: MlpModel


@dataclass(frozen=True)
class CheckpointMeta:
    task: str
    seed: int
    best_epoch: int


def l2_normalize_rows(X: np.ndarray) -> np.ndarray:
    """Unit-normalize feature rows; all-zero rows are left at zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=X.copy(), where=norms > 0)


def _mean_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(model, X)
    return cross_entropy(softmax(logits), y)


def evaluate_loss(model: MlpModel, dataset: LabeledDataset) -> float:
    """Mean cross-entropy over the whole dataset, single pass, no shuffling."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate loss on an empty dataset")
    return _mean_loss(model, dataset.X, dataset.y)


def train(
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    config: TrainConfig,
    epoch_hook: Callable[[EpochInfo], None] | None = None,
) -> tuple[MlpModel, TrainHistory]:
    """Run the full training protocol and return (best model, history)."""
    config.validate()
    if len(train_set) == 0:
        raise ValidationError("training split is empty")
    if len(val_set) == 0:
        raise ValidationError("validation split is empty")
    if train_set.class_names != val_set.class_names:
        raise ValidationError("train and val splits disagree on class names")
    if train_set.X.shape[1] != val_set.X.shape[1]:
        raise ValidationError(
            f"feature dim mismatch: train {train_set.X.shape[1]}, "
            f"val {val_set.X.shape[1]}"
        )

    Xtr = np.asarray(train_set.X, dtype=np.float64)
    Xva = np.asarray(val_set.X, dtype=np.float64)
    if config.normalize_features:
        Xtr = l2_normalize_rows(Xtr)
        Xva = l2_normalize_rows(Xva)
    ytr = np.asarray(train_set.y, dtype=np.int64)
    yva = np.asarray(val_set.y, dtype=np.int64)

    n = len(train_set)
    model = init_mlp(
        Xtr.shape[1], len(train_set.class_names), config.seed, train_set.class_names
    )
    params = model_params(model)
    state = adam_init(params, lr=config.lr)

    history = TrainHistory([], [], [], best_epoch=0)
    best_loss = math.inf
    best_model = model.copy()

    for epoch in range(config.epochs):
        rng = np.random.default_rng(config.seed + epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            logits, cache = forward(model, Xtr[idx])
            loss = cross_entropy(softmax(logits), ytr[idx])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}, batch {batch_no}"
                )
            grads = backward(model, cache, ytr[idx])
            adam_step(params, grad_list(grads), state)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n

        val_loss = _mean_loss(model, Xva, yva)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss after epoch {epoch}")
        val_acc = float(np.mean(predict(model, Xva) == yva))

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        if val_loss < best_loss:
            best_loss = val_loss
            best_model = model.copy()
            history.best_epoch = epoch

        if epoch_hook is not None:
            epoch_hook(
                EpochInfo(
                    epoch=epoch,
                    order=order,
                    train_loss=train_loss,
                    val_loss=val_loss,
                    val_accuracy=val_acc,
                    model=model,
                )
            )

    return best_model, history


def save_checkpoint(model: MlpModel, meta: CheckpointMeta, path: str) -> None:
    """Persist a model as a PMLP v1 file (parameters downcast to float32)."""
    if meta.task not in TASK_TAGS:
        raise ValidationError(f"unknown task {meta.task!r}")
    if not 0 <= meta.seed < 2**64:
        raise ValidationError(f"seed {meta.seed} does not fit in u64")
    if len(model.layer_dims) != 5:
        raise ValidationError(f"expected 5 layer dims, got {len(model.layer_dims)}")
    chunks = [
        PMLP_MAGIC,
        struct.pack("<IB", PMLP_VERSION, TASK_TAGS[meta.task]),
        struct.pack("<I", model.class_count),
    ]
    for name in model.class_names:
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValidationError(f"class name too long: {name[:32]!r}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
    chunks.append(struct.pack("<I", len(model.layer_dims)))
    chunks.append(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
    chunks.append(struct.pack("<QI", meta.seed, meta.best_epoch))
    for w, b in zip(model.weights, model.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.asarray(b, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path: str) -> tuple[MlpModel, CheckpointMeta]:
    """Load a PMLP v1 file back into a model and its metadata."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(count: int, what: str) -> None:
        if offset + count > len(data):
            raise FileFormatError(f"{path}: truncated while reading {what}")

    offset = 0
    need(9, "header")
    if data[:4] != PMLP_MAGIC:
        raise FileFormatError(f"{path}: bad magic {data[:4]!r}")
    version, tag = struct.unpack_from("<IB", data, 4)
    offset = 9
    if version != PMLP_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if tag not in TAG_TASKS:
        raise FileFormatError(f"{path}: unknown task tag {tag}")
    need(4, "class count")
    (class_count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    names: list[str] = []
    for i in range(class_count):
        need(2, f"class name {i}")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        need(name_len, f"class name {i}")
        names.append(data[offset : offset + name_len].decode("utf-8"))
        offset += name_len
    need(4, "layer count")
    (layer_count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if layer_count != 5:
        raise FileFormatError(f"{path}: expected 5 layer dims, got {layer_count}")
    need(4 * layer_count, "layer dims")
    dims = struct.unpack_from(f"<{layer_count}I", data, offset)
    offset += 4 * layer_count
    if dims[1:4] != HIDDEN_DIMS:
        raise FileFormatError(
            f"{path}: hidden dims {dims[1:4]} do not match {HIDDEN_DIMS}"
        )
    if dims[0] == 0 or dims[-1] != class_count:
        raise FileFormatError(
            f"{path}: layer dims {dims} inconsistent with {class_count} classes"
        )
    need(12, "seed and best epoch")
    seed, best_epoch = struct.unpack_from("<QI", data, offset)
    offset += 12
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        need(4 * fan_out * fan_in, "weights")
        w = np.frombuffer(data, dtype="<f4", count=fan_out * fan_in, offset=offset)
        offset += 4 * fan_out * fan_in
        need(4 * fan_out, "biases")
        b = np.frombuffer(data, dtype="<f4", count=fan_out, offset=offset)
        offset += 4 * fan_out
        weights.append(w.reshape(fan_out, fan_in).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(data):
        raise FileFormatError(f"{path}: {len(data) - offset} trailing bytes")
    model = MlpModel(tuple(dims), weights, biases, tuple(names))
    meta = CheckpointMeta(task=TAG_TASKS[tag], seed=seed, best_epoch=best_epoch)
    return model, meta
