import numpy as np
import pytest

from oracles import glcm_brute
from volsum.errors import DegenerateWindow, InsufficientPoints
from volsum.features import (
    FeatureExtractor,
    depth_to_pointcloud,
    estimate_normals,
    glcm_features,
    glcm_matrix,
    rgb_to_lab,
)
from volsum.rgbd import CameraIntrinsics


class TestRgbToLab:
    def test_black(self):
        assert np.allclose(rgb_to_lab([0, 0, 0]), [0, 0, 0], atol=1e-9)

    def test_white(self):
        lab = rgb_to_lab([255, 255, 255])
        assert abs(lab[0] - 100.0) < 0.01
        assert abs(lab[1]) < 0.01 and abs(lab[2]) < 0.01

    def test_against_high_precision_reference(self):
        # Oracle: the sRGB -> XYZ(D65) -> Lab chain evaluated with mpmath.
        import mpmath as mp

        mp.mp.dps = 40

        def ref(r, g, b):
            chans = []
            for v in (r, g, b):
                c = mp.mpf(v) / 255
                chans.append(c / mp.mpf("12.92") if c <= mp.mpf("0.04045")
                             else ((c + mp.mpf("0.055")) / mp.mpf("1.055")) ** mp.mpf("2.4"))
            M = [["0.4124564", "0.3575761", "0.1804375"],
                 ["0.2126729", "0.7151522", "0.0721750"],
                 ["0.0193339", "0.1191920", "0.9503041"]]
            white = [mp.mpf("0.95047"), mp.mpf(1), mp.mpf("1.08883")]
            xyz = [sum(mp.mpf(M[i][j]) * chans[j] for j in range(3)) / white[i]
                   for i in range(3)]
            delta = mp.mpf(6) / 29

            def f(t):
                return t ** (mp.mpf(1) / 3) if t > delta ** 3 else (
                    t / (3 * delta ** 2) + mp.mpf(4) / 29)

            fx, fy, fz = (f(v) for v in xyz)
            return (float(116 * fy - 16), float(500 * (fx - fy)),
                    float(200 * (fy - fz)))

        for rgb in [(128, 64, 32), (10, 200, 90), (250, 5, 120)]:
            expected = ref(*rgb)
            got = rgb_to_lab(list(rgb))
            assert np.allclose(got, expected, atol=0.05)

    def test_injective_on_gamut_sample(self):
        rng = np.random.default_rng(0)
        triples = rng.integers(0, 256, (4000, 3))
        triples = np.unique(triples, axis=0)
        labs = rgb_to_lab(triples)
        # No two distinct 8-bit triples collapse to the same Lab value.
        rounded = {tuple(np.round(row, 9)) for row in labs}
        assert len(rounded) == len(triples)


class TestPointcloud:
    intr = CameraIntrinsics(fx=100.0, fy=80.0, ox=32.0, oy=24.0)

    def test_principal_point(self):
        depth = np.zeros((48, 64))
        depth[24, 32] = 2.0
        pos, valid = depth_to_pointcloud(depth, self.intr)
        assert valid[24, 32] and not valid[0, 0]
        assert np.allclose(pos[24, 32], [0.0, 0.0, 2.0])

    def test_unit_offset(self):
        depth = np.ones((200, 200))
        intr = CameraIntrinsics(fx=50.0, fy=50.0, ox=40.0, oy=60.0)
        pos, _ = depth_to_pointcloud(depth, intr)
        assert np.isclose(pos[60, 90, 0], 1.0)  # col = ox + fx, Z = 1
        assert np.isclose(pos[110, 40, 1], 1.0)  # row = oy + fy

    def test_linear_in_depth(self):
        rng = np.random.default_rng(1)
        depth = rng.uniform(0.5, 3.0, (20, 30))
        pos1, _ = depth_to_pointcloud(depth, self.intr)
        pos2, _ = depth_to_pointcloud(3.0 * depth, self.intr)
        assert np.allclose(pos2, 3.0 * pos1)


class TestNormals:
    intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=29.5, oy=29.5)

    def test_planar_cloud(self):
        depth = np.full((60, 60), 1.5)
        pos, valid = depth_to_pointcloud(depth, self.intr)
        normal, ok = estimate_normals(pos, valid, k=16, window=7)
        assert ok.all()
        assert np.allclose(normal[ok], [0.0, 0.0, -1.0], atol=1e-6)
        norms = np.linalg.norm(normal[ok], axis=-1)
        assert np.allclose(norms, 1.0, atol=1e-6)

    def test_vertical_plane(self):
        # Plane x = 0.7 viewed obliquely: z = 0.7 * fx / (c - ox).
        h = w = 60
        cols = np.arange(w, dtype=float)
        intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=-10.0, oy=29.5)
        z = 0.7 * intr.fx / (cols[None, :] - intr.ox)
        depth = np.broadcast_to(z, (h, w)).copy()
        pos, valid = depth_to_pointcloud(depth, intr)
        normal, ok = estimate_normals(pos, valid, k=16, window=7)
        inner = ok.copy()
        inner[:3] = inner[-3:] = False
        inner[:, :3] = inner[:, -3:] = False
        dots = np.abs(normal[inner][:, 0])
        assert np.all(dots > 1 - 1e-5)
        # camera-facing: n . p < 0
        assert np.all(np.sum(normal[inner] * pos[inner], axis=1) < 1e-12)

    def test_hemisphere_accuracy(self):
        # Sphere of radius 0.5 m centered 1.5 m ahead; oracle = analytic
        # normals of the generating sphere.
        h = w = 80
        intr = CameraIntrinsics(fx=120.0, fy=120.0, ox=39.5, oy=39.5)
        cols = (np.arange(w) - intr.ox) / intr.fx
        rows = (np.arange(h) - intr.oy) / intr.fy
        dx, dy = np.meshgrid(cols, rows)
        # Ray-sphere intersection, nearest root.
        center = np.array([0.0, 0.0, 1.5])
        r2 = 0.5 ** 2
        a = dx ** 2 + dy ** 2 + 1.0
        b = -2.0 * (dx * center[0] + dy * center[1] + center[2])
        c = center @ center - r2
        disc = b * b - 4 * a * c
        depth = np.zeros((h, w))
        hit = disc > 0
        depth[hit] = (-b[hit] - np.sqrt(disc[hit])) / (2 * a[hit])
        pos, valid = depth_to_pointcloud(depth, intr)
        normal, ok = estimate_normals(pos, valid, k=16, window=7)
        # Outward normals of the near hemisphere already face the camera.
        truth = pos - center
        truth /= np.maximum(np.linalg.norm(truth, axis=-1, keepdims=True), 1e-12)
        sel = ok & hit
        cosang = np.clip(np.sum(normal[sel] * truth[sel], axis=1), -1, 1)
        ang = np.degrees(np.arccos(cosang))
        assert np.percentile(ang, 95) < 5.0

    def test_insufficient_points(self):
        pos = np.zeros((5, 5, 3))
        valid = np.zeros((5, 5), dtype=bool)
        valid[0, 0] = True
        with pytest.raises(InsufficientPoints):
            estimate_normals(pos, valid, k=16)


class TestGlcm:
    def test_constant_window(self):
        g = glcm_features(np.full((5, 5), 77), levels=16)
        assert g.energy == 1.0
        assert g.entropy == 0.0
        assert g.dissimilarity == 0.0
        assert g.correlation == 0.0 and g.info_measure_correlation == 0.0

    def test_checkerboard_dissimilarity(self):
        # Gray values chosen to quantize to levels 0 and 1 exactly.
        window = np.array([[0, 200], [200, 0]], dtype=float)
        g = glcm_features(window, levels=2, offsets=((0, 1),))
        assert g.dissimilarity == 1.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        window = rng.integers(0, 256, (6, 6)).astype(float)
        offsets = ((0, 1), (1, 0), (1, 1), (1, -1))
        got = glcm_features(window, levels=8, offsets=offsets).as_array()
        ref = glcm_brute(window, 8, offsets)
        assert np.allclose(got, ref, atol=1e-12)

    def test_masked_matches_brute_force(self):
        rng = np.random.default_rng(13)
        window = rng.integers(0, 256, (7, 5)).astype(float)
        mask = rng.random((7, 5)) > 0.3
        offsets = ((0, 1), (1, 0))
        got = glcm_features(window, levels=4, offsets=offsets, mask=mask).as_array()
        ref = glcm_brute(window, 4, offsets, mask=mask)
        assert np.allclose(got, ref, atol=1e-12)

    def test_probability_sums_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            window = rng.integers(0, 256, (5, 8)).astype(float)
            p = glcm_matrix(window, 16, ((0, 1), (1, 0)))
            assert abs(p.sum() - 1.0) < 1e-12
            energy = float((p * p).sum())
            assert energy <= 1.0 + 1e-12

    def test_degenerate_window(self):
        with pytest.raises(DegenerateWindow):
            glcm_features(np.zeros((2, 2)), levels=4, offsets=((5, 5),))


def test_feature_extractor_shapes(room_image, room_features):
    fv = room_features
    h, w = room_image.shape
    assert fv.lab.shape == (h, w, 3)
    assert fv.position.shape == (h, w, 3)
    assert fv.normal.shape == (h, w, 3)
    assert fv.valid.dtype == bool
    norms = np.linalg.norm(fv.normal[fv.valid], axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    # Z equals input depth exactly where valid.
    assert np.array_equal(fv.position[..., 2], room_image.depth)


def test_feature_extractor_params():
    fe = FeatureExtractor(normal_k=8, normal_window=5)
    assert fe.get_params() == {"normal_k": 8, "normal_window": 5}
