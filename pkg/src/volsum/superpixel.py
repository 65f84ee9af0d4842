"""Modified SLIC superpixels with joint color / pixel / 3-D / direction
distance.

The per-pair distance is D = dc/m + dp/S + ds/a + dtheta/b + dalpha/d:
Euclidean color (LAB) and pixel-position terms as in classic SLIC, plus
Euclidean 3-D world distance and wrapped azimuth / elevation differences
of the surface normals. With ``enable_spatial_terms`` off the measure
reduces to dc/m + dp/S. Pairs that cannot evaluate the spatial terms
(invalid depth on either side) fall back to the reduced form rescaled by
5/2 to keep magnitudes comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import TooFewValidPixels
from .features import FeatureVolume

_INVALID_RESCALE = 2.5  # 5 terms / 2 surviving terms


@dataclass(frozen=True)
class SlicParams:
    num_superpixels: int = 100
    m: float = 10.0              # compactness (color normalizer)
    a: float = 0.5               # max spatial-location distance, meters
    b: float = math.pi / 2       # max azimuth distance, radians
    d: float = math.pi / 2       # max elevation distance, radians
    max_iters: int = 10
    enable_spatial_terms: bool = True

    def __post_init__(self):
        if min(self.m, self.a, self.b, self.d) <= 0:
            raise ValueError("m, a, b, d must be positive")
        if self.max_iters < 1 or self.num_superpixels < 1:
            raise ValueError("max_iters and num_superpixels must be >= 1")

    def grid_interval(self, height: int, width: int) -> int:
        return max(1, int(round(math.sqrt(height * width / self.num_superpixels))))


@dataclass(frozen=True)
class ClusterPoint:
    """Feature tuple of one pixel or one cluster center."""

    lab: np.ndarray                 # (3,)
    pixel: np.ndarray               # (row, col)
    position: np.ndarray | None     # (3,) meters, None if depth invalid
    theta: float | None             # azimuth of the unit normal
    alpha: float | None             # elevation of the unit normal


@dataclass(frozen=True)
class SuperpixelLabeling:
    labels: np.ndarray              # H x W int32 in [0, n_regions)
    n_regions: int
    center_lab: np.ndarray          # (N, 3)
    center_pixel: np.ndarray        # (N, 2)
    center_position: np.ndarray     # (N, 3), NaN when undefined
    center_direction: np.ndarray    # (N, 3) unit normals, NaN when undefined

    @property
    def shape(self):
        return self.labels.shape


def wrapped_angle_diff(t1, t2):
    """min(|dt|, 2*pi - |dt|), elementwise."""
    d = np.abs(np.asarray(t1) - np.asarray(t2))
    return np.minimum(d, 2.0 * math.pi - d)


def normal_angles(normal: np.ndarray):
    """(azimuth, elevation) of unit normals: atan2(ny, nx), asin(nz)."""
    normal = np.asarray(normal, dtype=np.float64)
    theta = np.arctan2(normal[..., 1], normal[..., 0])
    alpha = np.arcsin(np.clip(normal[..., 2], -1.0, 1.0))
    return theta, alpha


def pixel_cluster_distance(pixel: ClusterPoint, center: ClusterPoint,
                           params: SlicParams, grid_interval: float) -> float:
    """Five-term cluster distance between one pixel and one center."""
    dc = float(np.linalg.norm(np.asarray(pixel.lab, dtype=float)
                              - np.asarray(center.lab, dtype=float)))
    dp = float(np.linalg.norm(np.asarray(pixel.pixel, dtype=float)
                              - np.asarray(center.pixel, dtype=float)))
    base = dc / params.m + dp / grid_interval
    if not params.enable_spatial_terms:
        return base
    spatial_ok = (pixel.position is not None and center.position is not None
                  and pixel.theta is not None and center.theta is not None)
    if not spatial_ok:
        return base * _INVALID_RESCALE
    ds = float(np.linalg.norm(np.asarray(pixel.position, dtype=float)
                              - np.asarray(center.position, dtype=float)))
    dtheta = float(wrapped_angle_diff(pixel.theta, center.theta))
    dalpha = abs(float(pixel.alpha) - float(center.alpha))
    return base + ds / params.a + dtheta / params.b + dalpha / params.d


class _Centers:
    """Mutable SLIC center state (kept as plain arrays)."""

    def __init__(self, lab, pixel, position, direction, has_spatial):
        self.lab = lab
        self.pixel = pixel
        self.position = position
        self.direction = direction
        self.has_spatial = has_spatial

    def snapshot(self):
        return {
            "lab": self.lab.copy(), "pixel": self.pixel.copy(),
            "position": self.position.copy(), "direction": self.direction.copy(),
            "has_spatial": self.has_spatial.copy(),
        }

    @property
    def count(self):
        return self.lab.shape[0]


def _seed_grid(height: int, width: int, interval: int):
    ny = max(1, int(round(height / interval)))
    nx = max(1, int(round(width / interval)))
    rows = ((np.arange(ny) + 0.5) * height / ny).astype(np.int64)
    cols = ((np.arange(nx) + 0.5) * width / nx).astype(np.int64)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _gradient_map(lab: np.ndarray) -> np.ndarray:
    g = np.zeros(lab.shape[:2])
    for ch in range(lab.shape[2]):
        plane = lab[..., ch]
        down = np.empty_like(plane)
        down[:-1] = plane[1:]
        down[-1] = plane[-1]
        up = np.empty_like(plane)
        up[1:] = plane[:-1]
        up[0] = plane[0]
        right = np.empty_like(plane)
        right[:, :-1] = plane[:, 1:]
        right[:, -1] = plane[:, -1]
        left = np.empty_like(plane)
        left[:, 1:] = plane[:, :-1]
        left[:, 0] = plane[:, 0]
        g += (down - up) ** 2 + (right - left) ** 2
    return g


def _perturb_seeds(seeds, gradient):
    h, w = gradient.shape
    out = seeds.copy()
    for i, (r, c) in enumerate(seeds):
        r0, r1 = max(0, r - 1), min(h, r + 2)
        c0, c1 = max(0, c - 1), min(w, c + 2)
        patch = gradient[r0:r1, c0:c1]
        flat = int(np.argmin(patch))
        out[i] = (r0 + flat // patch.shape[1], c0 + flat % patch.shape[1])
    return out


def _init_centers(fv: FeatureVolume, theta, alpha, seeds) -> _Centers:
    n = seeds.shape[0]
    lab = fv.lab[seeds[:, 0], seeds[:, 1]].astype(np.float64)
    pixel = seeds.astype(np.float64)
    position = np.full((n, 3), np.nan)
    direction = np.full((n, 3), np.nan)
    has_spatial = np.zeros(n, dtype=bool)
    ok = fv.valid[seeds[:, 0], seeds[:, 1]]
    position[ok] = fv.position[seeds[ok, 0], seeds[ok, 1]]
    direction[ok] = fv.normal[seeds[ok, 0], seeds[ok, 1]]
    has_spatial[:] = ok
    return _Centers(lab, pixel, position, direction, has_spatial)


def _assign(fv: FeatureVolume, theta, alpha, centers: _Centers,
            params: SlicParams, interval: int):
    h, w = fv.shape
    dist = np.full((h, w), np.inf)
    labels = np.full((h, w), -1, dtype=np.int32)
    rows_idx = np.arange(h, dtype=np.float64)
    cols_idx = np.arange(w, dtype=np.float64)
    for cid in range(centers.count):
        cr, cc = centers.pixel[cid]
        r0 = max(0, int(round(cr)) - interval)
        r1 = min(h, int(round(cr)) + interval + 1)
        c0 = max(0, int(round(cc)) - interval)
        c1 = min(w, int(round(cc)) + interval + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        lab_win = fv.lab[r0:r1, c0:c1]
        dc = np.sqrt(np.sum((lab_win - centers.lab[cid]) ** 2, axis=-1))
        dr = rows_idx[r0:r1, None] - cr
        dcc = cols_idx[None, c0:c1] - cc
        dp = np.sqrt(dr ** 2 + dcc ** 2)
        base = dc / params.m + dp / interval
        if params.enable_spatial_terms and centers.has_spatial[cid]:
            ds = np.sqrt(np.sum(
                (fv.position[r0:r1, c0:c1] - centers.position[cid]) ** 2, axis=-1))
            ctheta, calpha = normal_angles(centers.direction[cid])
            dth = wrapped_angle_diff(theta[r0:r1, c0:c1], ctheta)
            dal = np.abs(alpha[r0:r1, c0:c1] - calpha)
            full = base + ds / params.a + dth / params.b + dal / params.d
            D = np.where(fv.valid[r0:r1, c0:c1], full, base * _INVALID_RESCALE)
        elif params.enable_spatial_terms:
            D = base * _INVALID_RESCALE
        else:
            D = base
        win_dist = dist[r0:r1, c0:c1]
        better = D < win_dist
        win_dist[better] = D[better]
        labels[r0:r1, c0:c1][better] = cid
    if np.any(labels < 0):
        # Centers drifted away from a corner: fall back to nearest center
        # by pixel distance, deterministically.
        miss = np.argwhere(labels < 0)
        d2 = (
            (miss[:, 0:1] - centers.pixel[None, :, 0]) ** 2
            + (miss[:, 1:2] - centers.pixel[None, :, 1]) ** 2
        )
        labels[miss[:, 0], miss[:, 1]] = np.argmin(d2, axis=1).astype(np.int32)
        dist[miss[:, 0], miss[:, 1]] = np.sqrt(d2[np.arange(len(miss)),
                                                  labels[miss[:, 0], miss[:, 1]]])
    return labels, dist


def _update_centers(fv: FeatureVolume, labels, centers: _Centers):
    h, w = fv.shape
    flat = labels.ravel()
    n = centers.count
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    occupied = counts > 0
    safe = np.where(occupied, counts, 1.0)

    def mean_of(plane):
        sums = np.stack([np.bincount(flat, weights=plane[..., i].ravel(), minlength=n)
                         for i in range(plane.shape[-1])], axis=1)
        return sums / safe[:, None]

    lab_mean = mean_of(fv.lab)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    pix_mean = np.stack([
        np.bincount(flat, weights=rr.ravel(), minlength=n),
        np.bincount(flat, weights=cc.ravel(), minlength=n),
    ], axis=1) / safe[:, None]

    vflat = fv.valid.ravel().astype(np.float64)
    vcounts = np.bincount(flat, weights=vflat, minlength=n)
    vsafe = np.where(vcounts > 0, vcounts, 1.0)
    pos_mean = np.stack([
        np.bincount(flat, weights=(fv.position[..., i] * fv.valid).ravel(), minlength=n)
        for i in range(3)
    ], axis=1) / vsafe[:, None]
    dir_sum = np.stack([
        np.bincount(flat, weights=(fv.normal[..., i] * fv.valid).ravel(), minlength=n)
        for i in range(3)
    ], axis=1)
    dir_norm = np.linalg.norm(dir_sum, axis=1)
    has_dir = (vcounts > 0) & (dir_norm > 0)
    direction = np.full((n, 3), np.nan)
    direction[has_dir] = dir_sum[has_dir] / dir_norm[has_dir, None]

    centers.lab[occupied] = lab_mean[occupied]
    centers.pixel[occupied] = pix_mean[occupied]
    new_spatial = occupied & has_dir
    centers.position[new_spatial] = pos_mean[new_spatial]
    centers.direction[new_spatial] = direction[new_spatial]
    centers.has_spatial[occupied] = new_spatial[occupied]


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest 4-connected component; merge the remaining
    orphan components into the adjacent region with the most pixels
    (ties: lowest label). Returns a compacted labeling in [0, N)."""
    h, w = labels.shape
    comp = np.full(h * w, -1, dtype=np.int64)
    flat_labels = labels.ravel()
    components = []  # (label, [flat indices]) in row-major discovery order
    for start in range(h * w):
        if comp[start] >= 0:
            continue
        cid = len(components)
        lab = int(flat_labels[start])
        comp[start] = cid
        stack = [start]
        pixels = [start]
        while stack:
            p = stack.pop()
            r, c = divmod(p, w)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < h and 0 <= nc < w:
                    q = nr * w + nc
                    if comp[q] < 0 and flat_labels[q] == lab:
                        comp[q] = cid
                        stack.append(q)
                        pixels.append(q)
        components.append((lab, pixels))

    # Largest component per label survives (tie: earliest discovered).
    best = {}
    for cid, (lab, pixels) in enumerate(components):
        if lab not in best or len(pixels) > len(components[best[lab]][1]):
            best[lab] = cid

    out = flat_labels.astype(np.int64).copy()
    sizes = {lab: len(components[cid][1]) for lab, cid in best.items()}

    for cid, (lab, pixels) in enumerate(components):
        if best[lab] == cid:
            continue
        neighbor_labels = set()
        for p in pixels:
            r, c = divmod(p, w)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < h and 0 <= nc < w:
                    q = nr * w + nc
                    if comp[q] != cid:
                        neighbor_labels.add(int(out[q]))
        neighbor_labels.discard(lab)
        if not neighbor_labels:
            continue  # isolated orphan keeps its label
        target = max(neighbor_labels, key=lambda l: (sizes.get(l, 0), -l))
        for p in pixels:
            out[p] = target
        sizes[target] = sizes.get(target, 0) + len(pixels)

    _, compact = np.unique(out, return_inverse=True)
    return compact.reshape(h, w).astype(np.int32)


def _finalize(fv: FeatureVolume, labels) -> SuperpixelLabeling:
    n = int(labels.max()) + 1
    centers = _Centers(
        lab=np.zeros((n, 3)), pixel=np.zeros((n, 2)),
        position=np.full((n, 3), np.nan), direction=np.full((n, 3), np.nan),
        has_spatial=np.zeros(n, dtype=bool),
    )
    _update_centers(fv, labels, centers)
    return SuperpixelLabeling(
        labels=labels.astype(np.int32), n_regions=n,
        center_lab=centers.lab, center_pixel=centers.pixel,
        center_position=centers.position, center_direction=centers.direction,
    )


def slic_segment(fv: FeatureVolume, params: SlicParams, debug: bool = False):
    """Run the modified SLIC loop; returns a SuperpixelLabeling.

    With ``debug=True`` returns ``(labeling, history)`` where each history
    entry holds the centers used for that assignment plus the labels it
    produced, for objective-monotonicity checks.
    """
    h, w = fv.shape
    if int(fv.valid.sum()) < params.num_superpixels:
        raise TooFewValidPixels(
            f"{int(fv.valid.sum())} valid pixels < {params.num_superpixels}")
    interval = params.grid_interval(h, w)
    theta, alpha = normal_angles(fv.normal)
    seeds = _perturb_seeds(_seed_grid(h, w, interval), _gradient_map(fv.lab))
    centers = _init_centers(fv, theta, alpha, seeds)
    history = []
    labels = None
    for _ in range(params.max_iters):
        snap = centers.snapshot() if debug else None
        labels, _dist = _assign(fv, theta, alpha, centers, params, interval)
        if debug:
            history.append({"centers": snap, "labels": labels.copy()})
        _update_centers(fv, labels, centers)
    labels = enforce_connectivity(labels)
    labeling = _finalize(fv, labels)
    if debug:
        return labeling, history
    return labeling


def assignment_objective(fv: FeatureVolume, labels, centers: dict,
                         params: SlicParams, interval: int) -> float:
    """Sum of pair distances D(p, center[label_p]); ignores label -1."""
    theta, alpha = normal_angles(fv.normal)
    h, w = fv.shape
    total = 0.0
    rows_idx = np.arange(h, dtype=np.float64)
    cols_idx = np.arange(w, dtype=np.float64)
    rr, cc = np.meshgrid(rows_idx, cols_idx, indexing="ij")
    for cid in range(centers["lab"].shape[0]):
        sel = labels == cid
        if not sel.any():
            continue
        dc = np.sqrt(np.sum((fv.lab[sel] - centers["lab"][cid]) ** 2, axis=-1))
        dp = np.sqrt((rr[sel] - centers["pixel"][cid][0]) ** 2
                     + (cc[sel] - centers["pixel"][cid][1]) ** 2)
        base = dc / params.m + dp / interval
        if params.enable_spatial_terms and centers["has_spatial"][cid]:
            ds = np.sqrt(np.sum(
                (fv.position[sel] - centers["position"][cid]) ** 2, axis=-1))
            ctheta, calpha = normal_angles(centers["direction"][cid])
            dth = wrapped_angle_diff(theta[sel], ctheta)
            dal = np.abs(alpha[sel] - calpha)
            full = base + ds / params.a + dth / params.b + dal / params.d
            D = np.where(fv.valid[sel], full, base * _INVALID_RESCALE)
        elif params.enable_spatial_terms:
            D = base * _INVALID_RESCALE
        else:
            D = base
        total += float(D.sum())
    return total


class SlicSegmenter(BaseEstimator):
    """sklearn-style front end for :func:`slic_segment`.

    ``fit`` stores ``labeling_`` / ``labels_``; ``fit_predict`` returns the
    label image directly, mirroring clusterer conventions.
    """

    def __init__(self, num_superpixels: int = 100, compactness: float = 10.0,
                 max_spatial: float = 0.5, max_azimuth: float = math.pi / 2,
                 max_elevation: float = math.pi / 2, max_iters: int = 10,
                 enable_spatial_terms: bool = True):
        self.num_superpixels = num_superpixels
        self.compactness = compactness
        self.max_spatial = max_spatial
        self.max_azimuth = max_azimuth
        self.max_elevation = max_elevation
        self.max_iters = max_iters
        self.enable_spatial_terms = enable_spatial_terms

    def _params(self) -> SlicParams:
        return SlicParams(
            num_superpixels=self.num_superpixels, m=self.compactness,
            a=self.max_spatial, b=self.max_azimuth, d=self.max_elevation,
            max_iters=self.max_iters,
            enable_spatial_terms=self.enable_spatial_terms,
        )

    def fit(self, X: FeatureVolume, y=None):
        self.labeling_ = slic_segment(X, self._params())
        self.labels_ = self.labeling_.labels
        self.n_regions_ = self.labeling_.n_regions
        return self

    def fit_predict(self, X: FeatureVolume, y=None):
        return self.fit(X).labels_


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels whose right or down neighbor carries a different label."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return b


def boundary_overlay(rgb: np.ndarray, labels: np.ndarray,
                     color=(255, 0, 0)) -> np.ndarray:
    out = np.asarray(rgb, dtype=np.uint8).copy()
    out[boundary_mask(labels)] = color
    return out
