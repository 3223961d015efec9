"""Feature container, binary codec, class splits, and episode sampling.

Feature files use a little-endian layout:

    magic "SPFX" | u32 version=1 | u8 modality (0=sketch, 1=image)
    u32 N | u32 d | u32 C | u8 has_pair_ids
    C null-terminated UTF-8 class names
    N u32 labels | [N u64 pair ids] | N*d float32 vectors, row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    EpisodeError,
    FeatureCorruptionError,
    FeatureFormatError,
    FeatureTruncationError,
    SplitError,
)

MAGIC = b"SPFX"
VERSION = 1
MODALITIES = ("sketch", "image")


@dataclass
class FeatureSet:
    """Precomputed vectors for one modality; treated as immutable once built."""

    modality: str
    vectors: np.ndarray
    labels: np.ndarray
    label_names: list[str]
    pair_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ContractError(f"unknown modality {self.modality!r}")
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        if self.vectors.ndim != 2:
            raise ContractError("vectors must be 2-d (N, d)")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ContractError("labels must align with vector rows")
        if self.pair_ids is not None:
            self.pair_ids = np.ascontiguousarray(self.pair_ids, dtype=np.uint64)
            if self.pair_ids.shape != self.labels.shape:
                raise ContractError("pair_ids must align with vector rows")
        if not all(self.label_names):
            raise ContractError("class names must be non-empty")
        if self.labels.size and int(self.labels.max()) >= len(self.label_names):
            raise FeatureCorruptionError("label index out of range")
        if not np.isfinite(self.vectors).all():
            raise FeatureCorruptionError("non-finite feature values")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def subset(self, idx: np.ndarray) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureSet(
            modality=self.modality,
            vectors=self.vectors[idx],
            labels=self.labels[idx],
            label_names=list(self.label_names),
            pair_ids=None if self.pair_ids is None else self.pair_ids[idx],
        )


def write_features(path, fs: FeatureSet) -> None:
    """Serialize a FeatureSet; loading the result reproduces it bit for bit."""
    has_pairs = fs.pair_ids is not None
    head = struct.pack(
        "<4sIBIIIB",
        MAGIC,
        VERSION,
        MODALITIES.index(fs.modality),
        fs.n,
        fs.dim,
        fs.n_classes,
        int(has_pairs),
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for name in fs.label_names:
            fh.write(name.encode("utf-8") + b"\0")
        fh.write(fs.labels.astype("<u4").tobytes())
        if has_pairs:
            fh.write(fs.pair_ids.astype("<u8").tobytes())
        fh.write(fs.vectors.astype("<f4").tobytes())


def _take(buf: bytes, off: int, n: int, what: str) -> tuple[bytes, int]:
    if off + n > len(buf):
        raise FeatureTruncationError(f"file ends inside {what}")
    return buf[off : off + n], off + n


def read_features(path) -> FeatureSet:
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, struct.calcsize("<4sIBIIIB"), "header")
    magic, version, mod, n, d, c, has_pairs = struct.unpack("<4sIBIIIB", raw)
    if magic != MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"unsupported version {version}")
    if mod >= len(MODALITIES):
        raise FeatureFormatError(f"unknown modality code {mod}")
    if has_pairs not in (0, 1):
        raise FeatureFormatError(f"bad pair-id flag {has_pairs}")
    names = []
    for i in range(c):
        end = buf.find(b"\0", off)
        if end < 0:
            raise FeatureTruncationError("file ends inside class names")
        try:
            names.append(buf[off:end].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FeatureFormatError(f"class name {i} is not UTF-8") from exc
        if end == off:
            raise FeatureFormatError(f"class name {i} is empty")
        off = end + 1
    raw, off = _take(buf, off, 4 * n, "labels")
    labels = np.frombuffer(raw, dtype="<u4")
    pair_ids = None
    if has_pairs:
        raw, off = _take(buf, off, 8 * n, "pair ids")
        pair_ids = np.frombuffer(raw, dtype="<u8")
    raw, off = _take(buf, off, 4 * n * d, "feature rows")
    vectors = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    if off != len(buf):
        raise FeatureFormatError(f"{len(buf) - off} trailing bytes")
    return FeatureSet(MODALITIES[mod], vectors, labels, names, pair_ids)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint seen/unseen class partition for one experiment."""

    seen: tuple[int, ...]
    unseen: tuple[int, ...]
    seed: int
    k_shot: int = 0

    def __post_init__(self) -> None:
        if set(self.seen) & set(self.unseen):
            raise SplitError("seen and unseen classes overlap")
        if not self.seen or not self.unseen:
            raise SplitError("both class sets must be non-empty")
        if self.k_shot < 0:
            raise SplitError("k_shot must be >= 0")


def build_split(
    sketches: FeatureSet,
    images: FeatureSet,
    n_unseen: int,
    seed: int,
    k_shot: int = 0,
    min_images_per_test_class: int = 0,
) -> SplitSpec:
    """Draw unseen test classes at random; the rest become training classes."""
    if sketches.label_names != images.label_names:
        raise SplitError("modalities disagree on the class vocabulary")
    present = np.union1d(np.unique(sketches.labels), np.unique(images.labels))
    if n_unseen <= 0 or n_unseen >= present.size:
        raise SplitError(
            f"n_unseen={n_unseen} leaves no valid partition of {present.size} classes"
        )
    counts = np.bincount(images.labels, minlength=images.n_classes)
    eligible = present[counts[present] >= min_images_per_test_class]
    if eligible.size < n_unseen:
        raise SplitError(
            f"only {eligible.size} classes have >= {min_images_per_test_class} images"
        )
    rng = np.random.default_rng(seed)
    unseen = np.sort(rng.choice(eligible, size=n_unseen, replace=False))
    seen = np.setdiff1d(present, unseen)
    return SplitSpec(
        seen=tuple(int(c) for c in seen),
        unseen=tuple(int(c) for c in unseen),
        seed=seed,
        k_shot=k_shot,
    )


@dataclass
class Episode:
    """Concrete instance partition induced by a split and a shot count."""

    split: SplitSpec
    train_sketches: FeatureSet
    train_images: FeatureSet
    aux_sketches: FeatureSet
    aux_images: FeatureSet
    test_sketches: FeatureSet
    test_images: FeatureSet
    aux_index: dict = field(default_factory=dict)


def _aux_permutation(seed: int, cls: int, modality_code: int, idx: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([seed, cls, modality_code])
    return idx[rng.permutation(idx.size)]


def sample_episode(sketches: FeatureSet, images: FeatureSet, split: SplitSpec) -> Episode:
    """Partition instances into train / auxiliary / test sets.

    Auxiliary picks are permutation prefixes keyed by (seed, class,
    modality), so the k=1 auxiliary set is contained in the k=5 one for
    the same seed.
    """
    k = split.k_shot
    seen = np.asarray(split.seen)
    train_sk = np.flatnonzero(np.isin(sketches.labels, seen))
    train_im = np.flatnonzero(np.isin(images.labels, seen))
    aux_sk, aux_im, test_sk, test_im = [], [], [], []
    aux_index = {}
    for cls in split.unseen:
        for fs, code, aux, test in (
            (sketches, 0, aux_sk, test_sk),
            (images, 1, aux_im, test_im),
        ):
            idx = np.flatnonzero(fs.labels == cls)
            if idx.size <= k:
                raise EpisodeError(
                    f"class {fs.label_names[cls]}: {idx.size} {fs.modality} "
                    f"instances cannot cover k={k} plus a test remainder"
                )
            perm = _aux_permutation(split.seed, cls, code, idx)
            aux.append(perm[:k])
            test.append(np.sort(perm[k:]))
            aux_index[(cls, fs.modality)] = perm[:k].copy()
    return Episode(
        split=split,
        train_sketches=sketches.subset(train_sk),
        train_images=images.subset(train_im),
        aux_sketches=sketches.subset(np.concatenate(aux_sk)),
        aux_images=images.subset(np.concatenate(aux_im)),
        test_sketches=sketches.subset(np.sort(np.concatenate(test_sk))),
        test_images=images.subset(np.sort(np.concatenate(test_im))),
        aux_index=aux_index,
    )
