"""Writer for the PEMB v1 embedding interchange format.

Layout (little-endian, no padding): magic ``PEMB``, u32 version=1,
u32 count, u32 dim, then per record a u16 id byte-length, the UTF-8 id
bytes, and dim float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

PEMB_MAGIC = b"PEMB"
PEMB_VERSION = 1


def write_pemb(path: str, dim: int, entries: dict[str, np.ndarray]) -> None:
    if dim <= 0:
        raise ValueError(f"embedding dim must be positive, got {dim}")
    chunks = [PEMB_MAGIC, struct.pack("<III", PEMB_VERSION, len(entries), dim)]
    for rec_id, vec in entries.items():
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (dim,):
            raise ValueError(
                f"vector for id {rec_id!r} has shape {arr.shape}, expected ({dim},)"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"vector for id {rec_id!r} contains non-finite values")
        id_bytes = rec_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"id too long for format: {rec_id[:32]!r}...")
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))
