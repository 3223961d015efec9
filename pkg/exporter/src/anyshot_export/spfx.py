"""Writer for the engine's SPFX feature container.

Little-endian layout (version 1):

    magic "SPFX" | u32 version | u8 modality (0=sketch, 1=image)
    u32 N | u32 d | u32 C | u8 has_pair_ids
    C null-terminated UTF-8 class names
    N u32 labels | [N u64 pair ids] | N*d float32 vectors, row-major

Only the writer lives here; reading stays in the engine.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ExportError

MAGIC = b"SPFX"
VERSION = 1
MODALITIES = ("sketch", "image")


def write_spfx(
    path,
    modality: str,
    vectors: np.ndarray,
    labels: np.ndarray,
    class_names: list[str],
) -> None:
    if modality not in MODALITIES:
        raise ExportError(f"unknown modality {modality!r}")
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    labels = np.ascontiguousarray(labels, dtype=np.uint32)
    if vectors.ndim != 2:
        raise ExportError("vectors must be 2-d (N, d)")
    if labels.shape != (vectors.shape[0],):
        raise ExportError("labels must align with vector rows")
    if not all(class_names):
        raise ExportError("class names must be non-empty")
    if labels.size and int(labels.max()) >= len(class_names):
        raise ExportError("label index out of range")
    if not np.isfinite(vectors).all():
        raise ExportError("non-finite feature values")
    head = struct.pack(
        "<4sIBIIIB",
        MAGIC,
        VERSION,
        MODALITIES.index(modality),
        vectors.shape[0],
        vectors.shape[1],
        len(class_names),
        0,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for name in class_names:
            fh.write(name.encode("utf-8") + b"\0")
        fh.write(labels.astype("<u4").tobytes())
        fh.write(vectors.astype("<f4").tobytes())
