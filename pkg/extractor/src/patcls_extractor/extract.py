"""Batch feature extraction: manifest rows -> PEMB file."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import FrozenEncoder
from .manifest import ManifestRow, read_manifest
from .pemb import write_pemb

log = logging.getLogger(__name__)


@dataclass
class ExtractResult:
    count: int
    dim: int
    skipped: tuple[str, ...]
    transform_file: str


def _load_image(images_dir: str, row: ManifestRow) -> Image.Image:
    if not row.path:
        raise ValueError(f"record {row.id!r} has no image path")
    full = os.path.join(images_dir, row.path)
    try:
        with Image.open(full) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode image for id {row.id!r} "
                         f"({full}): {exc}") from exc


def extract_features(
    images_dir: str,
    manifest_path: str,
    encoder: FrozenEncoder,
    out_path: str,
    batch_size: int = 64,
    strict: bool = True,
) -> ExtractResult:
    """Encode every manifest image in order and write one PEMB record each.

    Undecodable images abort in strict mode; in lenient mode they are
    skipped with a warning. A sidecar text file records the preprocessing
    transform applied.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    rows = read_manifest(manifest_path)
    entries: dict[str, np.ndarray] = {}
    skipped: list[str] = []
    pending: list[tuple[str, Image.Image]] = []

    def flush():
        if not pending:
            return
        vectors = encoder.encode([img for _, img in pending])
        for (rec_id, _), vec in zip(pending, vectors):
            entries[rec_id] = vec
        pending.clear()

    for row in rows:
        try:
            image = _load_image(images_dir, row)
        except ValueError as exc:
            if strict:
                raise
            log.warning("skipping %s: %s", row.id, exc)
            skipped.append(row.id)
            continue
        pending.append((row.id, image))
        if len(pending) >= batch_size:
            flush()
    flush()

    write_pemb(out_path, encoder.spec.output_dim, entries)
    transform_file = f"{out_path}.transform.txt"
    with open(transform_file, "w", encoding="utf-8") as fh:
        fh.write(f"encoder={encoder.spec.name}\n"
                 f"transform={encoder.transform_name}\n")
    return ExtractResult(
        count=len(entries),
        dim=encoder.spec.output_dim,
        skipped=tuple(skipped),
        transform_file=transform_file,
    )
