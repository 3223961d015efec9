"""Shared fixtures: a tiny two-class image tree and a manifest writer."""
from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

CLASSES = ("cat", "dog")
PER_CLASS = 3
SOURCE_SIDE = 24


def _toy_image(class_idx: int, image_idx: int) -> Image.Image:
    """Deterministic, visibly distinct patterns per class and index."""
    rng = np.random.default_rng([class_idx, image_idx])
    base = rng.integers(0, 256, (SOURCE_SIDE, SOURCE_SIDE, 3), dtype=np.uint8)
    base[..., class_idx] = 220  # dominant channel per class
    return Image.fromarray(base, mode="RGB")


@pytest.fixture(scope="session")
def toy_tree(tmp_path_factory):
    """Root with two class folders of three PNGs each."""
    root = tmp_path_factory.mktemp("toy_images")
    for ci, name in enumerate(CLASSES):
        folder = root / name
        folder.mkdir()
        for ii in range(PER_CLASS):
            _toy_image(ci, ii).save(folder / f"img{ii}.png")
    return str(root)


@pytest.fixture()
def write_manifest(tmp_path):
    def _write(**keys) -> str:
        path = tmp_path / "export.cfg"
        lines = [f"{k} = {v}" for k, v in keys.items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture(scope="session")
def wordvec_source(tmp_path_factory):
    """Small source file covering the toy classes plus extra tokens."""
    path = tmp_path_factory.mktemp("wv") / "source.txt"
    rng = np.random.default_rng(17)
    lines = []
    for token in ("cat", "dog", "hot", "car", "tree"):
        values = " ".join(f"{v:.4f}" for v in rng.standard_normal(6))
        lines.append(f"{token} {values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
