"""Feature-file format, validation, and episode sampling."""
from __future__ import annotations

import numpy as np
import pytest

from anyshot import features
from anyshot.errors import (
    ContractError,
    FeatureCorruptionError,
    FeatureFormatError,
    FeatureTruncationError,
    SplitError,
)


def make_set(modality="sketch", n_classes=4, per_class=6, dim=5, seed=0, pairs=True):
    rng = np.random.default_rng(seed)
    n = n_classes * per_class
    return features.FeatureSet(
        modality=modality,
        vectors=rng.normal(size=(n, dim)).astype(np.float32),
        labels=np.repeat(np.arange(n_classes, dtype=np.uint32), per_class),
        label_names=[f"class{i}" for i in range(n_classes)],
        pair_ids=np.arange(n, dtype=np.uint64) if pairs else None,
    )


def test_round_trip_preserves_everything(tmp_path):
    for pairs in (True, False):
        fs = make_set(pairs=pairs)
        path = tmp_path / f"f{pairs}.spfx"
        features.write_features(str(path), fs)
        back = features.read_features(str(path))
        assert back.modality == fs.modality
        assert back.label_names == fs.label_names
        np.testing.assert_array_equal(back.vectors, fs.vectors)
        np.testing.assert_array_equal(back.labels, fs.labels)
        if pairs:
            np.testing.assert_array_equal(back.pair_ids, fs.pair_ids)
        else:
            assert back.pair_ids is None


def test_write_is_deterministic(tmp_path):
    fs = make_set()
    a, b = tmp_path / "a.spfx", tmp_path / "b.spfx"
    features.write_features(str(a), fs)
    features.write_features(str(b), fs)
    assert a.read_bytes() == b.read_bytes()


def test_truncated_file_raises(tmp_path):
    fs = make_set()
    path = tmp_path / "f.spfx"
    features.write_features(str(path), fs)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 7])
    with pytest.raises(FeatureTruncationError):
        features.read_features(str(path))


def test_bad_magic_raises(tmp_path):
    path = tmp_path / "f.spfx"
    path.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(FeatureFormatError):
        features.read_features(str(path))


def test_label_out_of_range_rejected():
    with pytest.raises(FeatureCorruptionError):
        features.FeatureSet(
            modality="sketch",
            vectors=np.zeros((2, 3), dtype=np.float32),
            labels=np.array([0, 5], dtype=np.uint32),
            label_names=["only"],
        )


def test_non_finite_vectors_rejected():
    bad = np.zeros((2, 3), dtype=np.float32)
    bad[1, 1] = np.nan
    with pytest.raises(FeatureCorruptionError):
        features.FeatureSet("sketch", bad, np.zeros(2, np.uint32), ["a"])


def test_unknown_modality_rejected():
    with pytest.raises(ContractError):
        features.FeatureSet(
            "photo", np.zeros((1, 2), np.float32), np.zeros(1, np.uint32), ["a"]
        )


def test_subset_selects_rows():
    fs = make_set()
    sub = fs.subset(np.array([0, 7, 13]))
    assert sub.n == 3
    np.testing.assert_array_equal(sub.vectors, fs.vectors[[0, 7, 13]])
    np.testing.assert_array_equal(sub.labels, fs.labels[[0, 7, 13]])
    np.testing.assert_array_equal(sub.pair_ids, fs.pair_ids[[0, 7, 13]])


def test_build_split_partitions_classes():
    sk, im = make_set(), make_set("image", seed=1)
    split = features.build_split(sk, im, n_unseen=1, seed=3)
    assert len(split.seen) == 3 and len(split.unseen) == 1
    assert sorted(split.seen + split.unseen) == [0, 1, 2, 3]
    again = features.build_split(sk, im, n_unseen=1, seed=3)
    assert again.unseen == split.unseen
    other = [
        features.build_split(sk, im, n_unseen=1, seed=s).unseen for s in range(8)
    ]
    assert len(set(other)) > 1


def test_build_split_validates(tmp_path):
    sk, im = make_set(), make_set("image", seed=1)
    with pytest.raises(SplitError):
        features.build_split(sk, im, n_unseen=4, seed=0)
    with pytest.raises(SplitError):
        features.build_split(sk, im, n_unseen=0, seed=0)


def test_sample_episode_separates_classes():
    sk, im = make_set(), make_set("image", seed=1)
    split = features.build_split(sk, im, n_unseen=2, seed=5)
    ep = features.sample_episode(sk, im, split)
    assert set(np.unique(ep.train_sketches.labels)) == set(split.seen)
    assert set(np.unique(ep.test_sketches.labels)) == set(split.unseen)
    assert set(np.unique(ep.test_images.labels)) == set(split.unseen)
    assert ep.aux_sketches.n == 0
    # Row-level integrity: every test sketch appears verbatim in the source.
    src = {fs.tobytes() for fs in sk.vectors}
    assert all(v.tobytes() in src for v in ep.test_sketches.vectors)


def test_sample_episode_k_shot_moves_aux_out_of_test():
    sk, im = make_set(per_class=8), make_set("image", per_class=8, seed=1)
    split = features.build_split(sk, im, n_unseen=2, seed=5, k_shot=2)
    ep = features.sample_episode(sk, im, split)
    for aux, test in ((ep.aux_sketches, ep.test_sketches),
                      (ep.aux_images, ep.test_images)):
        assert aux.n == 2 * 2
        for cls in split.unseen:
            assert (aux.labels == cls).sum() == 2
            assert (test.labels == cls).sum() == 8 - 2
        test_ids = set(test.pair_ids.tolist())
        assert not test_ids & set(aux.pair_ids.tolist())


def test_sample_episode_aux_deterministic_per_seed():
    sk, im = make_set(per_class=8), make_set("image", per_class=8, seed=1)
    split = features.build_split(sk, im, n_unseen=2, seed=5, k_shot=3)
    a = features.sample_episode(sk, im, split)
    b = features.sample_episode(sk, im, split)
    np.testing.assert_array_equal(a.aux_sketches.pair_ids, b.aux_sketches.pair_ids)
