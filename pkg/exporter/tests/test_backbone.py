"""Backbone numerics: conv/pool oracles, weight loading, determinism."""
from __future__ import annotations

import numpy as np
import pytest

from anyshot_export import backbone as bb
from anyshot_export.errors import BackboneError


def test_conv_delta_kernel_is_identity():
    x = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)[..., None]
    w = np.zeros((3, 3, 1, 1), dtype=np.float32)
    w[1, 1, 0, 0] = 1.0
    out = bb._conv3x3(x, w, np.zeros(1, np.float32))
    np.testing.assert_allclose(out[..., 0], x[..., 0])


def test_conv_box_kernel_sums_neighborhood():
    x = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)[..., None]
    w = np.ones((3, 3, 1, 1), dtype=np.float32)
    out = bb._conv3x3(x, w, np.full(1, 0.5, np.float32))
    # Zero padding: every 3x3 window covers the whole 2x2 image.
    np.testing.assert_allclose(out[..., 0], 10.0 + 0.5)


def test_maxpool_hand_case():
    x = np.arange(16, dtype=np.float32).reshape(4, 4)[..., None]
    out = bb._maxpool2(x)
    np.testing.assert_allclose(out[..., 0], [[5.0, 7.0], [13.0, 15.0]])


def test_maxpool_floors_odd_sides():
    x = np.arange(25, dtype=np.float32).reshape(5, 5)[..., None]
    out = bb._maxpool2(x)
    assert out.shape == (2, 2, 1)
    np.testing.assert_allclose(out[..., 0], [[6.0, 8.0], [16.0, 18.0]])


def test_random_backbone_deterministic():
    a = bb.random_backbone(3)
    b = bb.random_backbone(3)
    c = bb.random_backbone(4)
    for (wa, ba), (wb, _), (wc, _) in zip(a.layers, b.layers, c.layers):
        assert np.array_equal(wa, wb)
        assert not np.array_equal(wa, wc)
        assert np.all(ba == 0.0)


def test_layer_shape_validation():
    layers = [
        (np.zeros((3, 3, cin, cout), np.float32), np.zeros(cout, np.float32))
        for cin, cout in bb.CONV_CHANNELS
    ]
    bb.Backbone(layers)  # valid
    bad = list(layers)
    w, b = bad[4]
    bad[4] = (w[:, :, :-1], b)
    with pytest.raises(BackboneError, match="layer 4"):
        bb.Backbone(bad)
    with pytest.raises(BackboneError, match="13 conv layers"):
        bb.Backbone(layers[:-1])


def test_extract_shape_and_determinism():
    net = bb.random_backbone(0)
    rng = np.random.default_rng(5)
    image = rng.random((32, 32, 3)).astype(np.float32)
    feat = bb.extract(net, image)
    assert feat.shape == (bb.FEATURE_DIM,)
    assert feat.dtype == np.float32
    assert np.isfinite(feat).all()
    np.testing.assert_array_equal(feat, bb.extract(net, image))


def test_extract_minimum_side():
    net = bb.random_backbone(1)
    image = np.random.default_rng(2).random((16, 16, 3)).astype(np.float32)
    assert bb.extract(net, image).shape == (512,)


def test_extract_rejects_bad_input():
    net = bb.random_backbone(0)
    with pytest.raises(BackboneError):
        bb.extract(net, np.zeros((8, 8), np.float32))


def test_npz_round_trip(tmp_path):
    net = bb.random_backbone(6)
    path = str(tmp_path / "weights.npz")
    arrays = {}
    for i, (w, b) in enumerate(net.layers):
        arrays[f"conv{i}.w"] = w
        arrays[f"conv{i}.b"] = b
    np.savez(path, **arrays)
    loaded = bb.npz_backbone(path)
    for (wa, ba), (wb, bbias) in zip(net.layers, loaded.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bbias)


def test_npz_missing_array(tmp_path):
    path = str(tmp_path / "weights.npz")
    np.savez(path, **{"conv0.w": np.zeros((3, 3, 3, 64), np.float32)})
    with pytest.raises(BackboneError, match="conv0.b"):
        bb.npz_backbone(path)


def test_load_backbone_dispatch(tmp_path):
    assert isinstance(bb.load_backbone("random", 0), bb.Backbone)
    with pytest.raises(BackboneError):
        bb.load_backbone(str(tmp_path / "missing.npz"), 0)
