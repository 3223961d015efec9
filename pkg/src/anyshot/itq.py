"""Iterative-quantization binarization and Hamming ranking.

Fit centers the data, projects onto the top PCA directions, then
alternates sign assignment with an orthogonal Procrustes rotation
update.  Codes pack most-significant-bit-first into uint8 rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, nets
from .errors import CheckpointError, ContractError, RankError, ShapeError


@dataclass
class ItqCodec:
    """Fitted centering, projection, and rotation for b-bit codes."""

    mean: np.ndarray
    projection: np.ndarray
    rotation: np.ndarray
    bits: int


def itq_fit(
    train_embeddings: np.ndarray,
    bits: int,
    iterations: int = 50,
    seed: int = 0,
) -> tuple[ItqCodec, list[float]]:
    """Fit a codec on training embeddings; also return the error trace.

    The per-iteration quantization error ||B - V R||_F^2 never
    increases: each half-step minimizes it exactly.
    """
    x = np.asarray(train_embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("embeddings must be 2-d")
    n, m = x.shape
    if bits < 1 or bits > m:
        raise ContractError(f"bits must be in [1, {m}], got {bits}")
    if n <= bits:
        raise ContractError(f"need more than {bits} rows, got {n}")
    if iterations < 1:
        raise ContractError("iterations must be >= 1")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:bits]
    top = evals[order]
    if top[-1] <= max(top[0], 0.0) * 1e-12:
        raise RankError(
            f"covariance rank below {bits}: smallest kept eigenvalue {top[-1]:.3e}"
        )
    proj = evecs[:, order]
    # Deterministic eigenvector orientation: largest-magnitude entry positive.
    for j in range(bits):
        col = proj[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            proj[:, j] = -col
    v = xc @ proj

    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((bits, bits)))
    rotation = q * np.sign(np.diag(r))
    errors = []
    for _ in range(iterations):
        b = np.where(v @ rotation >= 0, 1.0, -1.0)
        u, _, wt = np.linalg.svd(v.T @ b)
        rotation = u @ wt
        errors.append(float(np.square(b - v @ rotation).sum()))
    codec = ItqCodec(mean=mean, projection=proj, rotation=rotation, bits=bits)
    return codec, errors


def itq_encode(codec: ItqCodec, embeddings: np.ndarray) -> np.ndarray:
    """Packed uint8 codes, one row per embedding, sign(0) = +1."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codec.mean.shape[0]:
        raise ShapeError(
            f"embedding width {x.shape[-1]} != codec width {codec.mean.shape[0]}"
        )
    z = (x - codec.mean) @ codec.projection @ codec.rotation
    return np.packbits(z >= 0, axis=1, bitorder="big")


def hamming_rank(query_code: np.ndarray, gallery_codes: np.ndarray) -> np.ndarray:
    """Gallery order by ascending Hamming distance, stable on ties."""
    q = np.asarray(query_code, dtype=np.uint8).reshape(1, -1)
    g = np.asarray(gallery_codes, dtype=np.uint8)
    if g.ndim != 2 or g.shape[1] != q.shape[1]:
        raise ShapeError(f"code widths differ: {q.shape[1]} vs {g.shape}")
    dist = kernels.hamming_distances(q, g)[0]
    return np.argsort(dist, kind="stable")


def save_codec(path, codec: ItqCodec) -> None:
    """Store under reserved tensor names; payloads downcast to float32."""
    nets.save_tensors(
        path,
        [
            ("itq.mean", codec.mean),
            ("itq.projection", codec.projection),
            ("itq.rotation", codec.rotation),
        ],
    )


def load_codec(path) -> ItqCodec:
    named = dict(nets.load_tensors(path))
    for key in ("itq.mean", "itq.projection", "itq.rotation"):
        if key not in named:
            raise CheckpointError(f"codec file lacks tensor {key!r}")
    proj = named["itq.projection"].astype(np.float64)
    return ItqCodec(
        mean=named["itq.mean"].astype(np.float64),
        projection=proj,
        rotation=named["itq.rotation"].astype(np.float64),
        bits=proj.shape[1],
    )
