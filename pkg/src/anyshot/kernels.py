"""Hot loops behind retrieval metrics and packed-code Hamming distance.

Two interchangeable implementations live here: plain numpy and numba
``@njit`` loops.  The active one is picked at import from the
``ANYSHOT_KERNELS`` environment variable (``auto`` | ``numba`` | ``numpy``,
default ``auto`` = numba when importable).  Both produce the same values;
tests compare them directly and ``benchmarks/bench_kernels.py`` times them.

Dense-layer matmuls are deliberately not here: BLAS already owns those.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, ShapeError

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def ranked_stats_numpy(rel: np.ndarray, k: int):
    """Per-query metrics from a ranked relevance matrix.

    ``rel`` is (nq, ng) with 1 where the gallery item at that rank is
    relevant to the query.  Returns ``(ap, nrel, prec_at_k, prec_sum,
    rec_sum)`` where the last two are per-rank sums over queries that
    have at least one relevant item; queries with none contribute zero
    everywhere and their ``ap``/``prec_at_k`` slots are 0.
    """
    rel = np.ascontiguousarray(rel, dtype=np.float64)
    nq, ng = rel.shape
    k_eff = min(k, ng)
    cum = np.cumsum(rel, axis=1)
    ranks = np.arange(1, ng + 1, dtype=np.float64)
    prec = cum / ranks
    nrel = cum[:, -1].astype(np.int64)
    valid = nrel > 0
    ap = np.zeros(nq, dtype=np.float64)
    ap[valid] = (prec[valid] * rel[valid]).sum(axis=1) / nrel[valid]
    prec_at_k = np.zeros(nq, dtype=np.float64)
    prec_at_k[valid] = cum[valid, k_eff - 1] / k_eff
    prec_sum = prec[valid].sum(axis=0)
    rec_sum = (cum[valid] / nrel[valid, None]).sum(axis=0)
    return ap, nrel, prec_at_k, prec_sum, rec_sum


@njit(cache=True)
def _ranked_stats_jit(rel, k_eff):  # pragma: no cover - measured via dispatch
    nq, ng = rel.shape
    ap = np.zeros(nq, dtype=np.float64)
    nrel = np.zeros(nq, dtype=np.int64)
    prec_at_k = np.zeros(nq, dtype=np.float64)
    prec_sum = np.zeros(ng, dtype=np.float64)
    rec_sum = np.zeros(ng, dtype=np.float64)
    for q in range(nq):
        total = 0
        for j in range(ng):
            total += rel[q, j]
        nrel[q] = total
        if total == 0:
            continue
        hits = 0
        ap_acc = 0.0
        for j in range(ng):
            hits += rel[q, j]
            p = hits / (j + 1.0)
            if rel[q, j]:
                ap_acc += p
            prec_sum[j] += p
            rec_sum[j] += hits / total
            if j + 1 == k_eff:
                prec_at_k[q] = p
        ap[q] = ap_acc / total
    return ap, nrel, prec_at_k, prec_sum, rec_sum


def ranked_stats_numba(rel: np.ndarray, k: int):
    rel8 = np.ascontiguousarray(rel, dtype=np.uint8)
    k_eff = min(k, rel8.shape[1])
    return _ranked_stats_jit(rel8, k_eff)


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def hamming_distances_numpy(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Hamming distance between packed uint8 code rows, (nq, ng) int32."""
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ShapeError(f"code widths differ: {q.shape} vs {g.shape}")
    out = np.empty((q.shape[0], g.shape[0]), dtype=np.int32)
    # Chunk queries so the xor temporary stays small.
    step = max(1, (1 << 22) // max(1, g.shape[0] * g.shape[1]))
    for lo in range(0, q.shape[0], step):
        hi = min(lo + step, q.shape[0])
        x = q[lo:hi, None, :] ^ g[None, :, :]
        out[lo:hi] = _POPCOUNT[x].sum(axis=2, dtype=np.int32)
    return out


@njit(cache=True)
def _hamming_jit(q, g, table):  # pragma: no cover - measured via dispatch
    nq, nb = q.shape
    ng = g.shape[0]
    out = np.empty((nq, ng), dtype=np.int32)
    for i in range(nq):
        for j in range(ng):
            d = 0
            for b in range(nb):
                d += table[q[i, b] ^ g[j, b]]
            out[i, j] = d
    return out


def hamming_distances_numba(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ShapeError(f"code widths differ: {q.shape} vs {g.shape}")
    return _hamming_jit(
        np.ascontiguousarray(q), np.ascontiguousarray(g), _POPCOUNT
    )


_BACKENDS = {
    "numpy": (ranked_stats_numpy, hamming_distances_numpy),
    "numba": (ranked_stats_numba, hamming_distances_numba),
}

_active = "numpy"


def set_backend(name: str) -> str:
    """Select the kernel implementation; ``auto`` prefers numba."""
    global _active
    if name == "auto":
        name = "numba" if HAS_NUMBA else "numpy"
    if name not in _BACKENDS:
        raise ConfigError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("ANYSHOT_KERNELS=numba but numba is not importable")
    _active = name
    return _active


def active_backend() -> str:
    return _active


def ranked_stats(rel: np.ndarray, k: int):
    return _BACKENDS[_active][0](rel, k)


def hamming_distances(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    return _BACKENDS[_active][1](q, g)


set_backend(os.environ.get("ANYSHOT_KERNELS", "auto"))
