"""Gallery ranking and retrieval metrics for every evaluation setting.

Queries are sketches, galleries are images.  Euclidean ranking runs on
semantic embeddings; the binary path ranks packed codes by Hamming
distance.  Queries with no relevant gallery item are excluded from all
means with a logged warning.  ANYSHOT_THREADS caps query parallelism.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import itq, kernels
from .errors import ContractError, EvaluationError
from .features import FeatureSet
from .model import SemPcycModel, encode

log = logging.getLogger(__name__)

SETTINGS = (
    "zero_shot",
    "generalized_zero_shot",
    "few_shot",
    "generalized_few_shot",
    "fine_grained",
)
RELEVANCES = ("same_class", "same_pair_id")


@dataclass
class GallerySpec:
    """One retrieval problem: queries, gallery, and what counts as a hit."""

    setting: str
    queries: FeatureSet
    gallery: FeatureSet
    relevance: str = "same_class"

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise ContractError(f"unknown setting {self.setting!r}")
        if self.relevance not in RELEVANCES:
            raise ContractError(f"unknown relevance {self.relevance!r}")
        if self.queries.modality != "sketch" or self.gallery.modality != "image":
            raise ContractError("queries must be sketches and the gallery images")
        if self.relevance == "same_pair_id" and (
            self.queries.pair_ids is None or self.gallery.pair_ids is None
        ):
            raise ContractError("pair-id relevance requires pair ids on both sides")


@dataclass
class EvalReport:
    map_at_all: float
    precision_at_100: float
    pr_curve: list[tuple[float, float]]
    per_query_ap: list[float]
    mean_query_seconds: float
    n_queries: int = 0
    n_excluded: int = 0


def _concat_features(a: FeatureSet, b: FeatureSet) -> FeatureSet:
    pair_ids = None
    if a.pair_ids is not None and b.pair_ids is not None:
        pair_ids = np.concatenate([a.pair_ids, b.pair_ids])
    return FeatureSet(
        modality=a.modality,
        vectors=np.vstack([a.vectors, b.vectors]),
        labels=np.concatenate([a.labels, b.labels]),
        label_names=list(a.label_names),
        pair_ids=pair_ids,
    )


def make_gallery_spec(episode, setting: str) -> GallerySpec:
    """Assemble the query/gallery pair a setting prescribes."""
    if setting not in SETTINGS:
        raise ContractError(f"unknown setting {setting!r}")
    queries = episode.test_sketches
    gallery = episode.test_images
    relevance = "same_class"
    if setting in ("generalized_zero_shot", "generalized_few_shot"):
        gallery = _concat_features(gallery, episode.train_images)
    elif setting == "fine_grained":
        relevance = "same_pair_id"
    return GallerySpec(setting, queries, gallery, relevance)


def rank_gallery(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Gallery indices by ascending Euclidean distance, stable on ties."""
    gallery = np.asarray(gallery)
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise ContractError("gallery must be a non-empty 2-d array")
    diff = gallery.astype(np.float64) - np.asarray(query, dtype=np.float64)
    return np.argsort(np.einsum("ij,ij->i", diff, diff), kind="stable")


def average_precision(ranked_relevance) -> float:
    """Mean of precision at each relevant rank over the full list."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    hits = int(rel.sum())
    if hits == 0:
        raise EvaluationError("average precision undefined without relevant items")
    cum = np.cumsum(rel, dtype=np.float64)
    ranks = np.arange(1, rel.size + 1, dtype=np.float64)
    return float((cum[rel] / ranks[rel]).sum() / hits)


def precision_at_k(ranked_relevance, k: int) -> float:
    if k < 1:
        raise ContractError("k must be >= 1")
    rel = np.asarray(ranked_relevance, dtype=bool)
    k_eff = min(k, rel.size)
    return float(rel[:k_eff].sum() / k_eff)


def pr_curve(ranked_relevance) -> list[tuple[float, float]]:
    """(recall, precision) at every rank; recall ends at 1."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    hits = int(rel.sum())
    if hits == 0:
        raise EvaluationError("PR curve undefined without relevant items")
    cum = np.cumsum(rel, dtype=np.float64)
    ranks = np.arange(1, rel.size + 1, dtype=np.float64)
    return list(zip((cum / hits).tolist(), (cum / ranks).tolist()))


def _relevance_matrix(spec: GallerySpec) -> np.ndarray:
    if spec.relevance == "same_pair_id":
        return spec.queries.pair_ids[:, None] == spec.gallery.pair_ids[None, :]
    return spec.queries.labels[:, None] == spec.gallery.labels[None, :]


def _thread_count() -> int:
    raw = os.environ.get("ANYSHOT_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer ANYSHOT_THREADS=%r", raw)
    return max(1, min(4, os.cpu_count() or 1))


def _rank_block(
    q_emb: np.ndarray, g_emb: np.ndarray, rel: np.ndarray, binary: bool
) -> np.ndarray:
    if binary:
        dist = kernels.hamming_distances(q_emb, g_emb)
    else:
        q2 = np.square(q_emb, dtype=np.float64).sum(axis=1)
        g2 = np.square(g_emb, dtype=np.float64).sum(axis=1)
        dist = q2[:, None] + g2[None, :] - 2.0 * (
            q_emb.astype(np.float64) @ g_emb.astype(np.float64).T
        )
    order = np.argsort(dist, axis=1, kind="stable")
    return np.take_along_axis(rel, order, axis=1)


def evaluate(
    model: SemPcycModel,
    spec: GallerySpec,
    hash_codec: itq.ItqCodec | None = None,
    precision_k: int = 100,
) -> EvalReport:
    """Rank the gallery for every query and aggregate the metrics.

    With a fitted codec, embeddings are binarized and ranked by Hamming
    distance instead of Euclidean distance.
    """
    if spec.queries.n == 0 or spec.gallery.n == 0:
        raise ContractError("queries and gallery must be non-empty")
    q_emb = encode(model, spec.queries.vectors, "sketch")
    g_emb = encode(model, spec.gallery.vectors, "image")
    if hash_codec is not None:
        q_emb = itq.itq_encode(hash_codec, q_emb)
        g_emb = itq.itq_encode(hash_codec, g_emb)
    rel = _relevance_matrix(spec)

    nq, ng = rel.shape
    chunk = 64
    blocks = [(i, min(i + chunk, nq)) for i in range(0, nq, chunk)]
    started = time.perf_counter()

    def work(block):
        lo, hi = block
        ranked = _rank_block(q_emb[lo:hi], g_emb, rel[lo:hi], hash_codec is not None)
        return kernels.ranked_stats(ranked, precision_k)

    threads = _thread_count()
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    elapsed = time.perf_counter() - started

    ap = np.concatenate([p[0] for p in parts])
    nrel = np.concatenate([p[1] for p in parts])
    p_at_k = np.concatenate([p[2] for p in parts])
    prec_sum = np.sum([p[3] for p in parts], axis=0)
    rec_sum = np.sum([p[4] for p in parts], axis=0)

    valid = nrel > 0
    n_valid = int(valid.sum())
    n_excluded = nq - n_valid
    if n_valid == 0:
        raise EvaluationError("every query has an empty relevant set")
    if n_excluded:
        log.warning(
            "excluded %d of %d queries with no relevant gallery item", n_excluded, nq
        )
    curve = list(zip((rec_sum / n_valid).tolist(), (prec_sum / n_valid).tolist()))
    return EvalReport(
        map_at_all=float(ap[valid].sum() / n_valid),
        precision_at_100=float(p_at_k[valid].sum() / n_valid),
        pr_curve=curve,
        per_query_ap=ap[valid].tolist(),
        mean_query_seconds=elapsed / nq,
        n_queries=nq,
        n_excluded=n_excluded,
    )


def write_report(report: EvalReport, metrics_path, curve_path) -> None:
    """Deterministic TSV artifacts; timing stays out of them by design."""
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(f"map_at_all\t{report.map_at_all:.12g}\n")
        fh.write(f"precision_at_100\t{report.precision_at_100:.12g}\n")
        fh.write(f"n_queries\t{report.n_queries}\n")
        fh.write(f"n_excluded\t{report.n_excluded}\n")
    log.info("mean_query_seconds %.3e", report.mean_query_seconds)
    with open(curve_path, "w", encoding="utf-8") as fh:
        for recall, precision in report.pr_curve:
            fh.write(f"{recall:.12g}\t{precision:.12g}\n")


def read_report(metrics_path) -> dict[str, float]:
    out = {}
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if "\t" in line:
                key, value = line.rstrip("\n").split("\t", 1)
                out[key] = float(value)
    return out
