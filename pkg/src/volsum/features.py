"""Per-pixel visio-spatio features: LAB color, 3-D position, surface
normals, and co-occurrence texture statistics.

Positions follow the pinhole back-projection X = (c - ox) * Z / fx,
Y = (r - oy) * Z / fy with r the row and c the column index, so Y grows
downward in the image. Pixels with depth 0 are invalid and carry no
position or normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DegenerateWindow, InsufficientPoints
from .rgbd import CameraIntrinsics, RgbdImage

# sRGB (D65) to XYZ, IEC 61966-2-1.
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_DELTA = 6.0 / 29.0

DEFAULT_GLCM_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True)
class FeatureVolume:
    """Per-pixel feature stack; position/normal are undefined off ``valid``."""

    lab: np.ndarray       # H x W x 3
    position: np.ndarray  # H x W x 3 meters
    normal: np.ndarray    # H x W x 3 unit vectors
    valid: np.ndarray     # H x W bool (depth > 0 and normal defined)
    gray: np.ndarray      # H x W float in [0, 255], for texture windows

    @property
    def shape(self):
        return self.valid.shape


@dataclass(frozen=True)
class GlcmFeatures:
    """Six Haralick statistics of a normalized symmetric co-occurrence matrix."""

    correlation: float
    energy: float
    info_measure_correlation: float
    homogeneity: float
    dissimilarity: float
    entropy: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.correlation, self.energy, self.info_measure_correlation,
            self.homogeneity, self.dissimilarity, self.entropy,
        ])


def rgb_to_lab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB values to CIE L*a*b* under D65.

    Accepts a single (3,) triple or an (..., 3) array; returns float64 of
    the same leading shape.
    """
    arr = np.asarray(rgb, dtype=np.float64) / 255.0
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    linear = np.where(arr <= 0.04045, arr / 12.92, ((arr + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _D65_WHITE
    cube = _LAB_DELTA ** 3
    f = np.where(xyz > cube, np.cbrt(xyz), xyz / (3 * _LAB_DELTA ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab[0] if squeeze else lab


def rgb_to_gray(rgb) -> np.ndarray:
    """BT.601 luma in [0, 255]."""
    arr = np.asarray(rgb, dtype=np.float64)
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114


def depth_to_pointcloud(depth: np.ndarray, intrinsics: CameraIntrinsics):
    """Back-project a depth map; returns (position H x W x 3, valid H x W)."""
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    x = (cols[None, :] - intrinsics.ox) * depth / intrinsics.fx
    y = (rows[:, None] - intrinsics.oy) * depth / intrinsics.fy
    position = np.stack([x, y, depth], axis=-1)
    return position, depth > 0


def estimate_normals(position: np.ndarray, valid: np.ndarray,
                     k: int = 16, window: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit normals from local plane fits.

    For each valid pixel the k nearest valid points (3-D distance) inside a
    ``window`` x ``window`` pixel neighborhood are gathered; the normal is
    the smallest-eigenvalue direction of their covariance, flipped to face
    the camera. Pixels with fewer than k valid neighbors become invalid.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    if int(valid.sum()) < k:
        raise InsufficientPoints(f"{int(valid.sum())} valid points < k={k}")
    h, w = valid.shape
    half = window // 2
    offsets = [(dr, dc) for dr in range(-half, half + 1)
               for dc in range(-half, half + 1)]
    n_off = len(offsets)

    normals = np.zeros((h, w, 3))
    out_valid = np.zeros((h, w), dtype=bool)

    # Row tiles bound the (tile, W, n_off, 3) gather below.
    tile = max(1, int(4_000_000 // (w * n_off)))
    padded_pos = np.zeros((h + 2 * half, w + 2 * half, 3))
    padded_pos[half:half + h, half:half + w] = np.where(valid[..., None], position, 0.0)
    padded_ok = np.zeros((h + 2 * half, w + 2 * half), dtype=bool)
    padded_ok[half:half + h, half:half + w] = valid

    for r0 in range(0, h, tile):
        r1 = min(h, r0 + tile)
        rows = r1 - r0
        neigh = np.empty((rows, w, n_off, 3))
        ok = np.empty((rows, w, n_off), dtype=bool)
        for i, (dr, dc) in enumerate(offsets):
            neigh[:, :, i] = padded_pos[r0 + half + dr:r1 + half + dr,
                                        half + dc:half + dc + w]
            ok[:, :, i] = padded_ok[r0 + half + dr:r1 + half + dr,
                                    half + dc:half + dc + w]
        center = position[r0:r1, :, None, :]
        d2 = np.sum((neigh - center) ** 2, axis=-1)
        d2[~ok] = np.inf
        counts = ok.sum(axis=-1)
        enough = valid[r0:r1] & (counts >= k)
        if not enough.any():
            continue
        # Keep the k nearest neighbors of each pixel.
        idx = np.argpartition(d2, k - 1, axis=-1)[..., :k]
        sel = np.take_along_axis(neigh, idx[..., None], axis=2)
        mean = sel.mean(axis=2, keepdims=True)
        centered = sel - mean
        cov = np.einsum("rwki,rwkj->rwij", centered, centered)
        eigvals, eigvecs = np.linalg.eigh(cov)
        n = eigvecs[..., :, 0]
        # Face the camera: normal . viewing ray < 0.
        dots = np.sum(n * position[r0:r1], axis=-1)
        n = np.where(dots[..., None] > 0, -n, n)
        norms = np.linalg.norm(n, axis=-1, keepdims=True)
        nz = norms[..., 0] > 0
        good = enough & nz
        normals[r0:r1][good] = (n / np.where(norms > 0, norms, 1.0))[good]
        out_valid[r0:r1] = good
    return normals, out_valid


def _quantize(gray: np.ndarray, levels: int) -> np.ndarray:
    q = (np.asarray(gray, dtype=np.float64) * levels / 256.0).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def glcm_matrix(gray: np.ndarray, levels: int, offsets, mask=None) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix over the given offsets.

    Pairs with either pixel outside ``mask`` (when given) or out of bounds
    are skipped. Raises ``DegenerateWindow`` when no pair survives.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2 or min(gray.shape) < 1:
        raise DegenerateWindow("texture window must be 2-D")
    levels = int(levels)
    if levels < 2:
        raise ValueError("levels must be >= 2")
    q = _quantize(gray, levels)
    h, w = q.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    counts = np.zeros((levels, levels), dtype=np.float64)
    total = 0
    for dr, dc in offsets:
        r0, r1 = max(0, -dr), min(h, h - dr)
        c0, c1 = max(0, -dc), min(w, w - dc)
        if r0 >= r1 or c0 >= c1:
            continue
        a = q[r0:r1, c0:c1]
        b = q[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        ok = mask[r0:r1, c0:c1] & mask[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        if not ok.any():
            continue
        pair = a[ok] * levels + b[ok]
        binc = np.bincount(pair, minlength=levels * levels).reshape(levels, levels)
        counts += binc
        counts += binc.T          # symmetric accumulation
        total += 2 * int(ok.sum())
    if total == 0:
        raise DegenerateWindow("no in-bounds pixel pairs")
    return counts / total


def glcm_features(gray: np.ndarray, levels: int = 16,
                  offsets=DEFAULT_GLCM_OFFSETS, mask=None) -> GlcmFeatures:
    """Haralick statistics of the window's co-occurrence matrix.

    Energy is the angular second moment sum(p^2); homogeneity the inverse
    difference moment sum(p / (1 + (i - j)^2)); entropies use natural logs.
    Zero-variance marginals define correlation and IMC1 as 0.
    """
    p = glcm_matrix(gray, levels, offsets, mask)
    levels = p.shape[0]
    i = np.arange(levels, dtype=np.float64)
    diff = i[:, None] - i[None, :]
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = float(np.dot(px, i))
    mu_y = float(np.dot(py, i))
    var_x = float(np.dot(px, (i - mu_x) ** 2))
    var_y = float(np.dot(py, (i - mu_y) ** 2))

    energy = float(np.sum(p * p))
    dissimilarity = float(np.sum(p * np.abs(diff)))
    homogeneity = float(np.sum(p / (1.0 + diff ** 2)))
    nz = p > 0
    entropy = float(-np.sum(p[nz] * np.log(p[nz])))

    if var_x <= 0 or var_y <= 0:
        correlation = 0.0
        imc1 = 0.0
    else:
        cov = float(np.sum(p * (i[:, None] - mu_x) * (i[None, :] - mu_y)))
        correlation = cov / np.sqrt(var_x * var_y)
        # IMC1 = (HXY - HXY1) / max(HX, HY), with HXY1 the cross entropy
        # of p against the product of its marginals.
        outer = px[:, None] * py[None, :]
        both = nz & (outer > 0)
        hxy1 = float(-np.sum(p[both] * np.log(outer[both])))
        hx = float(-np.sum(px[px > 0] * np.log(px[px > 0])))
        hy = float(-np.sum(py[py > 0] * np.log(py[py > 0])))
        denom = max(hx, hy)
        imc1 = (entropy - hxy1) / denom if denom > 0 else 0.0

    return GlcmFeatures(
        correlation=correlation, energy=energy, info_measure_correlation=imc1,
        homogeneity=homogeneity, dissimilarity=dissimilarity, entropy=entropy,
    )


class FeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from RgbdImage to FeatureVolume."""

    def __init__(self, normal_k: int = 16, normal_window: int = 7):
        self.normal_k = normal_k
        self.normal_window = normal_window

    def fit(self, X=None, y=None):
        return self

    def transform(self, image: RgbdImage) -> FeatureVolume:
        lab = rgb_to_lab(image.rgb)
        gray = rgb_to_gray(image.rgb)
        position, depth_valid = depth_to_pointcloud(image.depth, image.intrinsics)
        normal, valid = estimate_normals(position, depth_valid,
                                         k=self.normal_k, window=self.normal_window)
        return FeatureVolume(lab=lab, position=position, normal=normal,
                             valid=valid, gray=gray)


def dump_feature_planes(volume: FeatureVolume, directory) -> None:
    """Debug dump of the feature planes as VSDP float rasters."""
    import os

    from .rgbd import write_vsdp

    os.makedirs(directory, exist_ok=True)
    planes = {
        "lab_l": volume.lab[..., 0], "lab_a": volume.lab[..., 1],
        "lab_b": volume.lab[..., 2],
        "pos_x": volume.position[..., 0], "pos_y": volume.position[..., 1],
        "pos_z": volume.position[..., 2],
        "normal_x": volume.normal[..., 0], "normal_y": volume.normal[..., 1],
        "normal_z": volume.normal[..., 2],
        "valid": volume.valid.astype(np.float64),
    }
    for name, plane in planes.items():
        write_vsdp(os.path.join(directory, f"{name}.vsdp"), plane)
