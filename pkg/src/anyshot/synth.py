"""Synthetic cross-modal benchmark: Gaussian clusters with shared class
means, per-modality offsets, a small family taxonomy, and text vectors
correlated with the class geometry.

Thirteen classes fall into six families; the 20-node taxonomy is
root -> family -> class.  Class means live in a low-rank latent
subspace that the text vectors also express, so alignment learned on
seen classes genuinely extends to unseen ones without saturating the
task.
"""
from __future__ import annotations

import os

import numpy as np

from .features import FeatureSet, write_features

N_CLASSES = 13
FAMILY_OF = (0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5)
N_FAMILIES = 6
LATENT_DIM = 8
PAIR_DIM = 6


def class_names(n_classes: int = N_CLASSES) -> list[str]:
    return [f"class{c:02d}" for c in range(n_classes)]


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def make_benchmark(
    seed: int,
    d: int = 512,
    per_class: int = 100,
    text_dim: int = 50,
    family_scale: float = 2.2,
    class_scale: float = 2.0,
    feature_scale: float = 8.0,
    modality_scale: float = 8.0,
    pair_scale: float = 2.0,
    noise: float = 1.2,
    text_noise: float = 0.25,
) -> tuple[FeatureSet, FeatureSet, str, str]:
    """Build (sketches, images, taxonomy text, word-vector text).

    Latent class codes z_c = family center + personal offset; feature
    means are a fixed linear lift of z_c, text vectors another; the
    modality offset lives mostly outside the semantic subspace.  Each
    sketch/image pair shares a per-pair latent offset so pair-level
    retrieval is learnable, plus independent isotropic noise.
    """
    rng = np.random.default_rng([seed, 2024])
    fam_centers = rng.standard_normal((N_FAMILIES, LATENT_DIM)) * family_scale
    personal = rng.standard_normal((N_CLASSES, LATENT_DIM)) * class_scale
    latents = np.stack(
        [fam_centers[FAMILY_OF[c]] + personal[c] for c in range(N_CLASSES)]
    )
    lift_feat = _orthonormal_columns(rng, d, LATENT_DIM) * feature_scale
    lift_text = _orthonormal_columns(rng, text_dim, LATENT_DIM)
    lift_pair = _orthonormal_columns(rng, d, PAIR_DIM) * pair_scale
    means = latents @ lift_feat.T
    mod_dirs = rng.standard_normal((2, d))
    mod_dirs *= modality_scale / np.linalg.norm(mod_dirs, axis=1, keepdims=True)

    n_total = N_CLASSES * per_class
    pair_offsets = rng.standard_normal((n_total, PAIR_DIM)) @ lift_pair.T

    names = class_names()
    sets = []
    pair_base = np.arange(n_total, dtype=np.uint64)
    for mod_idx, modality in enumerate(("sketch", "image")):
        vecs = np.empty((n_total, d), dtype=np.float32)
        labels = np.empty(n_total, dtype=np.uint32)
        for c in range(N_CLASSES):
            block = slice(c * per_class, (c + 1) * per_class)
            samples = rng.standard_normal((per_class, d)) * noise
            vecs[block] = (
                means[c] + mod_dirs[mod_idx] + pair_offsets[block] + samples
            ).astype(np.float32)
            labels[block] = c
        sets.append(
            FeatureSet(
                modality=modality,
                vectors=vecs,
                labels=labels,
                label_names=names,
                pair_ids=pair_base.copy(),
            )
        )

    lines = ["[nodes]", "root"]
    lines += [f"family{f}" for f in range(N_FAMILIES)]
    lines += names
    lines.append("[edges]")
    lines += [f"family{f}\troot" for f in range(N_FAMILIES)]
    lines += [f"{names[c]}\tfamily{FAMILY_OF[c]}" for c in range(N_CLASSES)]
    lines.append("[classes]")
    lines += [f"{names[c]}\t{names[c]}" for c in range(N_CLASSES)]
    taxonomy_text = "\n".join(lines) + "\n"

    text_vecs = latents @ lift_text.T
    text_vecs += rng.standard_normal(text_vecs.shape) * text_noise
    wv_lines = [
        names[c] + " " + " ".join(f"{x:.6f}" for x in text_vecs[c])
        for c in range(N_CLASSES)
    ]
    wordvec_text = "\n".join(wv_lines) + "\n"

    return sets[0], sets[1], taxonomy_text, wordvec_text


def write_benchmark(out_dir, seed: int, **kwargs) -> dict[str, str]:
    """Write the benchmark files plus a ready-to-run experiment config."""
    os.makedirs(out_dir, exist_ok=True)
    sketches, images, taxonomy_text, wordvec_text = make_benchmark(seed, **kwargs)
    paths = {
        "sketches": os.path.join(out_dir, "sketches.spfx"),
        "images": os.path.join(out_dir, "images.spfx"),
        "taxonomy": os.path.join(out_dir, "taxonomy.txt"),
        "word_vectors": os.path.join(out_dir, "wordvecs.txt"),
        "config": os.path.join(out_dir, "experiment.cfg"),
    }
    write_features(paths["sketches"], sketches)
    write_features(paths["images"], images)
    with open(paths["taxonomy"], "w", encoding="utf-8") as fh:
        fh.write(taxonomy_text)
    with open(paths["word_vectors"], "w", encoding="utf-8") as fh:
        fh.write(wordvec_text)
    cfg = [
        f"data.sketches = {paths['sketches']}",
        f"data.images = {paths['images']}",
        f"data.taxonomy = {paths['taxonomy']}",
        f"data.word_vectors = {paths['word_vectors']}",
        "split.n_unseen = 3",
        f"seed = {seed}",
        f"out.dir = {os.path.join(out_dir, 'runs')}",
    ]
    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(cfg) + "\n")
    return paths
