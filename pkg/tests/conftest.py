import numpy as np
import pytest

from volsum.features import FeatureExtractor
from volsum.rgbd import CameraIntrinsics, RgbdImage
from volsum.synthetic import merge_scene, room_scene


@pytest.fixture(scope="session")
def room():
    return room_scene(0)


@pytest.fixture(scope="session")
def room_image(room):
    return RgbdImage(rgb=room.rgb, depth=room.depth,
                     intrinsics=room.intrinsics, id="room_000")


@pytest.fixture(scope="session")
def room_features(room_image):
    return FeatureExtractor().transform(room_image)


@pytest.fixture(scope="session")
def merge_sample():
    return merge_scene(0)


@pytest.fixture(scope="session")
def merge_features(merge_sample):
    image = RgbdImage(rgb=merge_sample.rgb, depth=merge_sample.depth,
                      intrinsics=merge_sample.intrinsics, id="merge_000")
    return FeatureExtractor().transform(image)


@pytest.fixture
def smooth_image():
    """Textured synthetic RGB-D pair with full-valid planar depth."""

    def build(seed, h=100, w=140):
        rng = np.random.default_rng(seed)
        rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        img = np.zeros((h, w, 3))
        for ch in range(3):
            f = rng.uniform(0.02, 0.08, 2)
            ph = rng.uniform(0, 6, 2)
            img[..., ch] = (120 + 60 * np.sin(f[0] * rr + ph[0])
                            * np.cos(f[1] * cc + ph[1])
                            + rng.normal(0, 6, (h, w)))
        rgb = np.clip(img, 0, 255).astype(np.uint8)
        depth = np.full((h, w), 2.0)
        intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=(w - 1) / 2, oy=(h - 1) / 2)
        return RgbdImage(rgb=rgb, depth=depth, intrinsics=intr, id=f"smooth{seed}")

    return build
