import numpy as np
import pytest
from PIL import Image

from volsum.errors import (
    DimensionMismatch,
    MalformedManifest,
    NegativeDepth,
    UnreadableFile,
)
from volsum.rgbd import (
    CameraIntrinsics,
    RgbdImage,
    load_dataset,
    load_rgbd,
    read_labels,
    read_vsdp,
    save_depth_png,
    save_rgb,
    write_labels,
    write_vsdp,
)

INTR = CameraIntrinsics(fx=50.0, fy=50.0, ox=1.5, oy=1.5)


def _write_pair(tmp_path, depth_counts, rgb_shape=(4, 4, 3)):
    rgb = np.full(rgb_shape, 128, dtype=np.uint8)
    rgb_path = tmp_path / "rgb.png"
    save_rgb(rgb_path, rgb)
    depth_path = tmp_path / "depth.png"
    Image.fromarray(depth_counts.astype(np.uint16)).save(depth_path)
    return rgb_path, depth_path


def test_constant_depth_unit_conversion(tmp_path):
    rgb_path, depth_path = _write_pair(tmp_path, np.full((4, 4), 1000))
    image = load_rgbd(rgb_path, depth_path, INTR, depth_scale=1 / 1000)
    assert np.all(image.depth == 1.0)


def test_dimension_mismatch(tmp_path):
    rgb_path, _ = _write_pair(tmp_path, np.full((4, 4), 1000))
    bad_depth = tmp_path / "bad.png"
    Image.fromarray(np.full((3, 3), 1000, dtype=np.uint16)).save(bad_depth)
    with pytest.raises(DimensionMismatch):
        load_rgbd(rgb_path, bad_depth, INTR)


def test_depth_png_matches_independent_decoder(tmp_path):
    rng = np.random.default_rng(3)
    counts = rng.integers(200, 5000, (6, 7))
    rgb_path, depth_path = _write_pair(tmp_path, counts, rgb_shape=(6, 7, 3))
    intr = CameraIntrinsics(fx=50.0, fy=50.0, ox=3.0, oy=2.5)
    image = load_rgbd(rgb_path, depth_path, intr, depth_scale=1 / 1000)
    # Oracle: decode the same PNG with Pillow and apply the scale.
    ref = np.asarray(Image.open(depth_path)).astype(np.float64) / 1000.0
    assert np.allclose(image.depth, ref, rtol=1e-12, atol=0)
    assert image.depth.min() >= 0.2 and image.depth.max() <= 5.0


def test_depth_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    counts = rng.integers(0, 65535, (5, 5))
    rgb_path, depth_path = _write_pair(tmp_path, counts, rgb_shape=(5, 5, 3))
    image = load_rgbd(rgb_path, depth_path, INTR, depth_scale=1 / 1000)
    back = tmp_path / "back.png"
    save_depth_png(back, image.depth, depth_scale=1 / 1000)
    assert np.array_equal(np.asarray(Image.open(back)), counts)


def test_load_rgbd_deterministic(tmp_path):
    rgb_path, depth_path = _write_pair(tmp_path, np.full((4, 4), 777))
    a = load_rgbd(rgb_path, depth_path, INTR)
    b = load_rgbd(rgb_path, depth_path, INTR)
    assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.depth, b.depth)


def test_vsdp_roundtrip(tmp_path):
    arr = np.random.default_rng(0).random((8, 9)) * 4
    path = tmp_path / "a.vsdp"
    write_vsdp(path, arr)
    out = read_vsdp(path)
    assert out.shape == (8, 9)
    assert np.allclose(out, arr, atol=1e-6)


def test_vsdp_depth_is_meters(tmp_path):
    rgb_path, _ = _write_pair(tmp_path, np.full((4, 4), 1))
    depth_path = tmp_path / "d.vsdp"
    write_vsdp(depth_path, np.full((4, 4), 2.5))
    image = load_rgbd(rgb_path, depth_path, INTR, depth_scale=1 / 1000)
    assert np.allclose(image.depth, 2.5)


def test_vsdp_negative_depth_rejected(tmp_path):
    rgb_path, _ = _write_pair(tmp_path, np.full((4, 4), 1))
    depth_path = tmp_path / "d.vsdp"
    write_vsdp(depth_path, np.full((4, 4), -1.0))
    with pytest.raises(NegativeDepth):
        load_rgbd(rgb_path, depth_path, INTR)


def test_labels_roundtrip(tmp_path):
    labels = np.arange(30, dtype=np.int32).reshape(5, 6)
    path = tmp_path / "seg.raw"
    write_labels(path, labels)
    assert np.array_equal(read_labels(path), labels)


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.vsdp"
    path.write_bytes(b"NOPE" + b"\0" * 20)
    with pytest.raises(UnreadableFile):
        read_vsdp(path)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=-1, fy=1, ox=0, oy=0)
    depth = np.ones((4, 4))
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        RgbdImage(rgb=rgb, depth=depth,
                  intrinsics=CameraIntrinsics(fx=1, fy=1, ox=9, oy=0), id="x")


def test_empty_manifest(tmp_path):
    manifest = tmp_path / "m.csv"
    manifest.write_text("# nothing here\n\n")
    assert load_dataset(manifest, INTR) == []


def test_manifest_order_and_gt(tmp_path):
    rgb_path, depth_path = _write_pair(tmp_path, np.full((4, 4), 1000))
    gt = tmp_path / "gt.png"
    save_rgb(gt, np.stack([np.full((4, 4), 255, np.uint8)] * 3, axis=-1))
    manifest = tmp_path / "m.csv"
    manifest.write_text(
        f"# comment\n{rgb_path.name},{depth_path.name},{gt.name},kitchen\n"
        f"{rgb_path.name},{depth_path.name}\n")
    entries = load_dataset(manifest, INTR)
    assert len(entries) == 2
    assert entries[0].ground_truth is not None
    assert entries[0].ground_truth.scene_label == "kitchen"
    assert entries[0].ground_truth.mask.all()
    assert entries[1].ground_truth is None


def test_manifest_error_names_line(tmp_path):
    rgb_path, depth_path = _write_pair(tmp_path, np.full((4, 4), 1000))
    manifest = tmp_path / "m.csv"
    manifest.write_text(
        f"{rgb_path.name},{depth_path.name}\n"
        f"{rgb_path.name},{depth_path.name}\n"
        f"{rgb_path.name},missing_depth.png\n")
    with pytest.raises(MalformedManifest) as err:
        load_dataset(manifest, INTR)
    assert err.value.line_no == 3
