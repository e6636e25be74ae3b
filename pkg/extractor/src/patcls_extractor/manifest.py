"""Minimal reader for the pipeline's manifest CSV interface.

Only the fields the extractor needs (id, path) are interpreted; labels are
passed through untouched so any task's manifest works.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

HEADER = ("id", "split", "label", "caption", "path")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    split: str
    label: str
    caption: str
    path: str


def read_manifest(path: str) -> list[ManifestRow]:
    rows: list[ManifestRow] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise ValueError(
                f"{path}: expected manifest header {','.join(HEADER)}"
            )
        for row in reader:
            line = reader.line_num
            if len(row) != len(HEADER):
                raise ValueError(
                    f"{path}:{line}: expected {len(HEADER)} fields, got {len(row)}"
                )
            if not row[0]:
                raise ValueError(f"{path}:{line}: empty id")
            if row[0] in seen:
                raise ValueError(f"{path}:{line}: duplicate id {row[0]!r}")
            seen.add(row[0])
            rows.append(ManifestRow(*row))
    return rows
