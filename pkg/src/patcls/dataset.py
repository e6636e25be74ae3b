"""Dataset manifests, the PEMB embedding interchange format, and joins.

A manifest is a hand-editable CSV listing one image per row (id, split,
label, optional caption/path). Embeddings live in a little-endian binary
file (PEMB v1) keyed by id. Joining the two yields aligned arrays ready
for training. The primary pipeline never touches image files.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, ValidationError
from .taxonomy import task_class_names

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

MANIFEST_HEADER = ("id", "split", "label", "caption", "path")

PEMB_MAGIC = b"PEMB"
PEMB_VERSION = 1


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    split: str
    label: str
    caption: str = ""
    path: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    task: str
    records: tuple[ManifestRecord, ...]
    class_names: tuple[str, ...]


@dataclass
class EmbeddingStore:
    """Fixed-dimension float32 vectors keyed by id, in insertion order."""

    dim: int
    entries: dict[str, np.ndarray]


@dataclass
class LabeledDataset:
    """Row-aligned feature matrix, class indices, and ids for one split."""

    X: np.ndarray
    y: np.ndarray
    ids: tuple[str, ...]
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


def load_manifest(path: str, task: str) -> DatasetManifest:
    """Load and validate a manifest CSV for the given task.

    Row order is preserved. Raises ValidationError naming the offending
    line for malformed rows, unknown labels/splits, or duplicate ids.
    """
    class_names = task_class_names(task)
    records = _read_manifest_rows(path, set(class_names))
    return DatasetManifest(task=task, records=records, class_names=class_names)


def _read_manifest_rows(
    path: str, label_set: set[str] | None
) -> tuple[ManifestRecord, ...]:
    """Shared CSV reader; label_set None skips label validation (inspect)."""
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file, expected header "
                                  f"{','.join(MANIFEST_HEADER)}")
        if tuple(header) != MANIFEST_HEADER:
            raise ValidationError(
                f"{path}: bad header {','.join(header)!r}, "
                f"expected {','.join(MANIFEST_HEADER)}"
            )
        for row in reader:
            line = reader.line_num
            if len(row) != len(MANIFEST_HEADER):
                raise ValidationError(
                    f"{path}:{line}: expected {len(MANIFEST_HEADER)} fields, "
                    f"got {len(row)}"
                )
            rec_id, split, label, caption, img_path = row
            if not rec_id:
                raise ValidationError(f"{path}:{line}: empty id")
            if rec_id in seen:
                raise ValidationError(f"{path}:{line}: duplicate id {rec_id!r}")
            if split not in SPLITS:
                raise ValidationError(
                    f"{path}:{line}: unknown split {split!r} "
                    f"(expected one of {', '.join(SPLITS)})"
                )
            if label_set is not None and label not in label_set:
                raise ValidationError(
                    f"{path}:{line}: unknown label {label!r} for this task"
                )
            seen.add(rec_id)
            records.append(ManifestRecord(rec_id, split, label, caption, img_path))
    return tuple(records)


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    """Write a manifest CSV (standard quoting, record order preserved)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            writer.writerow((r.id, r.split, r.label, r.caption, r.path))


def class_histogram(manifest: DatasetManifest, split: str) -> dict[str, int]:
    """Per-class record counts over one split; absent classes map to 0."""
    if split not in SPLITS:
        raise ValidationError(
            f"unknown split {split!r} (expected one of {', '.join(SPLITS)})"
        )
    counts = {name: 0 for name in manifest.class_names}
    for r in manifest.records:
        if r.split == split:
            counts[r.label] += 1
    return counts


def write_embeddings(store: EmbeddingStore, path: str) -> None:
    """Write a PEMB v1 file. Refuses stores violating the format invariants."""
    if store.dim <= 0:
        raise ValidationError(f"embedding dim must be positive, got {store.dim}")
    chunks = [
        PEMB_MAGIC,
        struct.pack("<III", PEMB_VERSION, len(store.entries), store.dim),
    ]
    for rec_id, vec in store.entries.items():
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (store.dim,):
            raise ValidationError(
                f"vector for id {rec_id!r} has shape {arr.shape}, "
                f"expected ({store.dim},)"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(
                f"vector for id {rec_id!r} contains non-finite values"
            )
        id_bytes = rec_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValidationError(f"id too long for format: {rec_id[:32]!r}...")
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_embeddings(path: str) -> EmbeddingStore:
    """Read a PEMB v1 file, validating structure byte-for-byte."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise FileFormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != PEMB_MAGIC:
        raise FileFormatError(f"{path}: bad magic {data[:4]!r}")
    version, count, dim = struct.unpack_from("<III", data, 4)
    if version != PEMB_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise FileFormatError(f"{path}: embedding dim is 0")
    offset = 16
    entries: dict[str, np.ndarray] = {}
    vec_bytes = dim * 4
    for i in range(count):
        if offset + 2 > len(data):
            raise FileFormatError(f"{path}: truncated at record {i}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise FileFormatError(f"{path}: truncated at record {i}")
        rec_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        if rec_id in entries:
            raise FileFormatError(f"{path}: duplicate id {rec_id!r} at record {i}")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise FileFormatError(
                f"{path}: non-finite value in record {i} (id {rec_id!r})"
            )
        entries[rec_id] = vec
    if offset != len(data):
        raise FileFormatError(
            f"{path}: {len(data) - offset} trailing bytes after {count} records"
        )
    return EmbeddingStore(dim=dim, entries=entries)


def join(
    manifest: DatasetManifest,
    store: EmbeddingStore,
    split: str,
    strict: bool = True,
) -> LabeledDataset:
    """Align one split's manifest records with their stored embeddings.

    Returns rows in manifest order for records whose ids are in the store.
    Missing ids are an error in strict mode; in lenient mode they are
    skipped with a warning listing them.
    """
    if split not in SPLITS:
        raise ValidationError(
            f"unknown split {split!r} (expected one of {', '.join(SPLITS)})"
        )
    wanted = [r for r in manifest.records if r.split == split]
    missing = [r.id for r in wanted if r.id not in store.entries]
    if missing:
        listed = ", ".join(missing[:20]) + ("..." if len(missing) > 20 else "")
        if strict:
            raise ValidationError(
                f"{len(missing)} {split} id(s) missing from embedding store: {listed}"
            )
        log.warning(
            "skipping %d %s record(s) with no embedding: %s",
            len(missing), split, listed,
        )
        wanted = [r for r in wanted if r.id in store.entries]
    index = {name: i for i, name in enumerate(manifest.class_names)}
    if wanted:
        X = np.stack([store.entries[r.id] for r in wanted]).astype(np.float32)
    else:
        X = np.empty((0, store.dim), dtype=np.float32)
    y = np.array([index[r.label] for r in wanted], dtype=np.int64)
    return LabeledDataset(
        X=X,
        y=y,
        ids=tuple(r.id for r in wanted),
        class_names=manifest.class_names,
    )
