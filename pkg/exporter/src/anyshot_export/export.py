"""Folder walking, image decoding, feature extraction, and the two CLIs."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
from PIL import Image

from . import backbone as bb
from .errors import ExportError, ManifestError, MissingTokenError
from .manifest import ExportManifest, load_manifest
from .spfx import write_spfx
from .wordvecs import read_class_list, subset_word_vectors, write_word_vectors

log = logging.getLogger("anyshot_export")

IMAGE_SUFFIXES = {
    ".png", ".jpg", ".jpeg", ".bmp", ".gif",
    ".ppm", ".pgm", ".webp", ".tif", ".tiff",
}


def list_class_folders(root: str) -> list[tuple[str, list[str]]]:
    """(class name, sorted image paths) per subfolder, sorted by name."""
    try:
        entries = sorted(os.listdir(root))
    except OSError as exc:
        raise ExportError(f"cannot list dataset root {root}: {exc}") from exc
    out = []
    for name in entries:
        folder = os.path.join(root, name)
        if not os.path.isdir(folder):
            continue
        files = sorted(
            os.path.join(folder, f)
            for f in os.listdir(folder)
            if os.path.splitext(f)[1].lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise ExportError(f"class folder has no images: {folder}")
        out.append((name, files))
    if not out:
        raise ExportError(f"dataset root has no class folders: {root}")
    return out


def load_image(path: str, side: int) -> np.ndarray:
    """(side, side, 3) float32 in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.float32) / 255.0


def extract_folder(
    root: str, net: bb.Backbone, side: int
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Features, labels, and class names for one dataset root."""
    classes = list_class_folders(root)
    names = [name for name, _ in classes]
    vectors, labels = [], []
    for label, (name, files) in enumerate(classes):
        ok = 0
        for path in files:
            try:
                image = load_image(path, side)
            except OSError as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            vectors.append(bb.extract(net, image))
            labels.append(label)
            ok += 1
        if ok == 0:
            raise ExportError(f"class {name!r} has no readable images")
    return (
        np.stack(vectors),
        np.asarray(labels, dtype=np.uint32),
        names,
    )


def run_export(manifest: ExportManifest) -> list[str]:
    """Write every SPFX file the manifest asks for; returns the paths."""
    net = bb.load_backbone(manifest.weights, manifest.weights_seed)
    written = []
    jobs = (
        ("sketch", manifest.sketches_dir, manifest.out_sketches),
        ("image", manifest.images_dir, manifest.out_images),
    )
    for modality, root, out_path in jobs:
        if root is None:
            continue
        vectors, labels, names = extract_folder(root, net, manifest.image_side)
        write_spfx(out_path, modality, vectors, labels, names)
        log.info(
            "%s: %d vectors x %d dims, %d classes -> %s",
            modality, vectors.shape[0], vectors.shape[1], len(names), out_path,
        )
        written.append(out_path)
    return written


def main_features(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    parser = argparse.ArgumentParser(
        prog="export-features",
        description="Extract backbone features from image folders into SPFX files",
    )
    parser.add_argument("--manifest", required=True, help="export manifest file")
    args = parser.parse_args(argv)
    try:
        run_export(load_manifest(args.manifest))
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main_wordvecs(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    parser = argparse.ArgumentParser(
        prog="export-wordvecs",
        description="Subset a word-vector text file to a class vocabulary",
    )
    parser.add_argument("--classes", required=True, help="one class name per line")
    parser.add_argument("--source", required=True, help="full word-vector file")
    parser.add_argument("--out", required=True, help="output subset file")
    args = parser.parse_args(argv)
    try:
        names = read_class_list(args.classes)
        lines = subset_word_vectors(names, args.source)
        write_word_vectors(args.out, lines)
        log.info("%d classes -> %d vector lines -> %s", len(names), len(lines), args.out)
    except MissingTokenError as exc:
        for name in exc.names:
            print(f"missing: {name}", file=sys.stderr)
        return 1
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
