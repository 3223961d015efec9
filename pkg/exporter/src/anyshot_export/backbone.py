"""Numpy convolutional backbone: the 16-layer architecture's thirteen
3x3 conv layers, with the final 512-channel map globally average-pooled
into one 512-d feature vector per image.

Weights come from a seeded random initialization, an ``.npz`` dump, or a
host-ecosystem pretrained model converted on the fly.  Inference is pure
numpy, single-threaded apart from BLAS.
"""
from __future__ import annotations

import numpy as np

from .errors import BackboneError

# (in_channels, out_channels) per conv layer; pools follow the indices in
# POOL_AFTER.  The fifth block keeps its spatial map: features are taken
# before the last pooling stage.
CONV_CHANNELS = (
    (3, 64), (64, 64),
    (64, 128), (128, 128),
    (128, 256), (256, 256), (256, 256),
    (256, 512), (512, 512), (512, 512),
    (512, 512), (512, 512), (512, 512),
)
POOL_AFTER = frozenset({1, 3, 6, 9})
FEATURE_DIM = CONV_CHANNELS[-1][1]

# Channel statistics the pretrained weights expect; fixed for all modes
# so random-weight runs stay comparable.
INPUT_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
INPUT_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class Backbone:
    """Thirteen (w, b) pairs; w is (3, 3, c_in, c_out), b is (c_out,)."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        if len(layers) != len(CONV_CHANNELS):
            raise BackboneError(
                f"expected {len(CONV_CHANNELS)} conv layers, got {len(layers)}"
            )
        for i, ((w, b), (cin, cout)) in enumerate(zip(layers, CONV_CHANNELS)):
            if w.shape != (3, 3, cin, cout) or b.shape != (cout,):
                raise BackboneError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not fit "
                    f"3x3x{cin}x{cout}"
                )
        self.layers = [
            (np.ascontiguousarray(w, np.float32), np.ascontiguousarray(b, np.float32))
            for w, b in layers
        ]


def random_backbone(seed: int) -> Backbone:
    layers = []
    for i, (cin, cout) in enumerate(CONV_CHANNELS):
        rng = np.random.default_rng([seed, i])
        limit = np.sqrt(6.0 / (9 * cin + 9 * cout))
        w = rng.uniform(-limit, limit, (3, 3, cin, cout)).astype(np.float32)
        layers.append((w, np.zeros(cout, np.float32)))
    return Backbone(layers)


def npz_backbone(path: str) -> Backbone:
    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise BackboneError(f"cannot read weights {path}: {exc}") from exc
    layers = []
    for i in range(len(CONV_CHANNELS)):
        for suffix in ("w", "b"):
            if f"conv{i}.{suffix}" not in archive:
                raise BackboneError(f"{path} lacks array conv{i}.{suffix}")
        layers.append((archive[f"conv{i}.w"], archive[f"conv{i}.b"]))
    return Backbone(layers)


def torchvision_backbone() -> Backbone:
    """Convert the host ecosystem's pretrained 16-layer model."""
    try:
        from torchvision.models import vgg16
    except ImportError as exc:
        raise BackboneError("torchvision is not installed") from exc
    try:
        model = vgg16(weights="IMAGENET1K_V1")
    except Exception as exc:  # weight download/cache failure
        raise BackboneError(f"pretrained weights unavailable: {exc}") from exc
    layers = []
    for module in model.features:
        if type(module).__name__ == "Conv2d":
            w = module.weight.detach().numpy().transpose(2, 3, 1, 0)
            b = module.bias.detach().numpy()
            layers.append((w, b))
    return Backbone(layers)


def load_backbone(weights: str, seed: int) -> Backbone:
    if weights == "random":
        return random_backbone(seed)
    if weights == "torchvision":
        return torchvision_backbone()
    return npz_backbone(weights)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    h, width, cin = x.shape
    cout = w.shape[3]
    padded = np.zeros((h + 2, width + 2, cin), dtype=np.float32)
    padded[1:-1, 1:-1] = x
    acc = np.zeros((h * width, cout), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            window = padded[dy : dy + h, dx : dx + width].reshape(h * width, cin)
            acc += window @ w[dy, dx]
    return (acc + b).reshape(h, width, cout)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    return x[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2, c).max(axis=(1, 3))


def extract(backbone: Backbone, image: np.ndarray) -> np.ndarray:
    """(side, side, 3) float array in [0, 1] -> 512-d float32 feature."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise BackboneError(f"expected (H, W, 3) input, got {image.shape}")
    x = ((image.astype(np.float32) - INPUT_MEAN) / INPUT_STD).astype(np.float32)
    for i, (w, b) in enumerate(backbone.layers):
        x = np.maximum(_conv3x3(x, w, b), 0.0)
        if i in POOL_AFTER:
            x = _maxpool2(x)
    return x.mean(axis=(0, 1)).astype(np.float32)
