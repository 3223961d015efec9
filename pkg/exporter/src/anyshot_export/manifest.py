"""Export manifest: ``key = value`` lines with ``#`` comments."""
from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import ManifestError

MIN_SIDE = 16  # four 2x2 pools must leave at least one spatial cell


@dataclass
class ExportManifest:
    """Validated description of one export run."""

    sketches_dir: str | None
    images_dir: str | None
    out_sketches: str | None
    out_images: str | None
    backbone: str = "vgg16"
    weights: str = "random"
    weights_seed: int = 0
    image_side: int = 224


_KEYS = {
    "data.sketches",
    "data.images",
    "out.sketches",
    "out.images",
    "backbone",
    "weights",
    "weights.seed",
    "image.side",
}


def parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ManifestError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return out


def load_manifest(path) -> ExportManifest:
    raw = parse_kv_file(path)
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ManifestError(f"unknown manifest keys: {', '.join(unknown)}")

    def _int(key: str, default: int) -> int:
        if key not in raw:
            return default
        try:
            return int(raw[key])
        except ValueError as exc:
            raise ManifestError(f"bad value for {key}: {raw[key]!r}") from exc

    m = ExportManifest(
        sketches_dir=raw.get("data.sketches"),
        images_dir=raw.get("data.images"),
        out_sketches=raw.get("out.sketches"),
        out_images=raw.get("out.images"),
        backbone=raw.get("backbone", "vgg16"),
        weights=raw.get("weights", "random"),
        weights_seed=_int("weights.seed", 0),
        image_side=_int("image.side", 224),
    )
    if m.sketches_dir is None and m.images_dir is None:
        raise ManifestError("manifest names neither data.sketches nor data.images")
    for src, dst, what in (
        (m.sketches_dir, m.out_sketches, "sketches"),
        (m.images_dir, m.out_images, "images"),
    ):
        if src is not None:
            if not os.path.isdir(src):
                raise ManifestError(f"data.{what} is not a directory: {src}")
            if dst is None:
                raise ManifestError(f"data.{what} given without out.{what}")
    if m.backbone != "vgg16":
        raise ManifestError(f"unknown backbone {m.backbone!r}")
    if m.image_side < MIN_SIDE:
        raise ManifestError(f"image.side must be >= {MIN_SIDE}, got {m.image_side}")
    return m
