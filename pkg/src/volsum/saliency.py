"""Volumetric saliency: per-segment oriented bounding boxes, volume
scores, class gating, and the binary summary mask.

Boxes are chosen as the minimum-volume candidate among the hull-vertex
PCA basis, the identity basis, and one basis per hull facet (normal plus
an in-facet edge), which keeps the volume at or below the axis-aligned
box and rotation-stable on symmetric shapes. Scores are per-image
max-normalized so the fixed threshold tau operates on [0, 1].
"""

from __future__ import annotations

import os
import subprocess
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ClassifierError, EmptySegment
from .features import FeatureVolume
from .rgbd import RgbdImage, save_rgb


@dataclass(frozen=True)
class OrientedBoundingBox:
    center: np.ndarray    # (3,)
    axes: np.ndarray      # (3, 3), rows are unit axes
    extents: np.ndarray   # (3,) half-widths
    degenerate: bool = False

    def volume(self) -> float:
        return float(8.0 * np.prod(self.extents))

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        proj = (np.asarray(points, dtype=np.float64) - self.center) @ self.axes.T
        return np.all(np.abs(proj) <= self.extents + tol, axis=1)


@dataclass(frozen=True)
class SegmentClass:
    label: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class SegmentScore:
    segment_id: int
    volume_m3: float
    score: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SaliencySummary:
    scores: dict[int, SegmentScore]
    classes: dict[int, SegmentClass]
    kept_segments: tuple[int, ...]
    mask: np.ndarray
    metadata: dict = field(default_factory=dict)


def convex_hull(points: np.ndarray):
    """Hull vertices of a 3-D point set; returns (vertices, degenerate).

    Coplanar / collinear / tiny inputs fall back to the hull of the
    points projected on their principal subspace (or the extreme points
    of a segment), flagged degenerate.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (n, 3)")
    if pts.shape[0] >= 4:
        try:
            hull = ConvexHull(pts)
            return pts[hull.vertices], False
        except QhullError:
            pass
    # Degenerate: project on the principal plane / line.
    center = pts.mean(axis=0)
    centered = pts - center
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(svals > 1e-12 * max(1.0, svals[0] if len(svals) else 1.0)))
    if rank >= 2 and pts.shape[0] >= 3:
        plane = centered @ vt[:2].T
        try:
            hull2 = ConvexHull(plane)
            return pts[hull2.vertices], True
        except QhullError:
            rank = 1
    if rank == 1:
        axis = vt[0]
        t = centered @ axis
        return pts[[int(np.argmin(t)), int(np.argmax(t))]], True
    return pts[:1], True


def _project_box(vertices: np.ndarray, axes: np.ndarray):
    proj = vertices @ axes.T
    lo = proj.min(axis=0)
    hi = proj.max(axis=0)
    extents = (hi - lo) / 2.0
    center = ((hi + lo) / 2.0) @ axes
    return center, extents


def _orthonormal(axes: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(axes.T)
    return q.T


def _facet_bases(vertices: np.ndarray):
    bases = []
    if vertices.shape[0] < 4:
        return bases
    try:
        hull = ConvexHull(vertices)
    except QhullError:
        return bases
    for simplex, eq in zip(hull.simplices, hull.equations):
        n = eq[:3]
        nn = np.linalg.norm(n)
        if nn == 0:
            continue
        n = n / nn
        edge = vertices[simplex[1]] - vertices[simplex[0]]
        edge = edge - (edge @ n) * n
        en = np.linalg.norm(edge)
        if en < 1e-12:
            continue
        e1 = edge / en
        e2 = np.cross(n, e1)
        bases.append(np.stack([e1, e2, n]))
    return bases


def obb_from_hull(vertices: np.ndarray, method: str = "min") -> OrientedBoundingBox:
    """Oriented box around hull vertices.

    ``method='pca'`` uses only the right singular vectors of the centered
    vertex matrix; the default ``'min'`` additionally tries the identity
    basis and every hull-facet basis and keeps the smallest volume.
    """
    verts = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    degenerate = verts.shape[0] < 4
    centered = verts - verts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=True)
    candidates = [_orthonormal(vt)]
    if method == "min":
        candidates.append(np.eye(3))
        candidates.extend(_facet_bases(verts))
    best = None
    for axes in candidates:
        center, extents = _project_box(verts, axes)
        vol = float(8.0 * np.prod(extents))
        if best is None or vol < best[0] - 1e-15:
            best = (vol, center, axes, extents)
    _, center, axes, extents = best
    return OrientedBoundingBox(center=center, axes=axes, extents=extents,
                               degenerate=degenerate)


def volume(obb: OrientedBoundingBox) -> float:
    """8 * e1 * e2 * e3."""
    return obb.volume()


def segment_pointclouds(fv: FeatureVolume, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Valid 3-D points per region id."""
    out = {}
    for rid in range(int(labels.max()) + 1):
        sel = (labels == rid) & fv.valid
        out[rid] = fv.position[sel]
    return out


def saliency_scores(segments: dict[int, np.ndarray], min_points: int = 4):
    """Per-segment OBB volumes normalized by the image maximum.

    Segments with fewer than ``min_points`` valid points score 0 and are
    flagged; degenerate hulls are flagged but still score by their
    (possibly zero) volume. When every volume is zero the scores stay
    zero and each segment carries ``zero_max_volume``.
    """
    raw = {}
    flags = {}
    boxes = {}
    for rid in sorted(segments):
        pts = segments[rid]
        if pts.shape[0] < min_points:
            raw[rid] = 0.0
            flags[rid] = ("too_few_points",)
            boxes[rid] = None
            continue
        verts, degen = convex_hull(pts)
        obb = obb_from_hull(verts)
        raw[rid] = obb.volume()
        flags[rid] = ("degenerate_hull",) if degen else ()
        boxes[rid] = obb
    max_vol = max(raw.values(), default=0.0)
    scores = {}
    for rid in sorted(raw):
        if max_vol > 0:
            score = raw[rid] / max_vol
            f = flags[rid]
        else:
            score = 0.0
            f = flags[rid] + ("zero_max_volume",)
        scores[rid] = SegmentScore(segment_id=rid, volume_m3=raw[rid],
                                   score=score, flags=f)
    return scores, boxes


@dataclass(frozen=True)
class SceneContext:
    """Vertical extent of the scene, used by the geometric class rules."""

    y_min: float
    y_max: float

    @classmethod
    def from_features(cls, fv: FeatureVolume) -> "SceneContext":
        ys = fv.position[fv.valid][:, 1]
        if ys.size == 0:
            return cls(0.0, 0.0)
        return cls(float(ys.min()), float(ys.max()))

    @property
    def span(self) -> float:
        return self.y_max - self.y_min


class GeometricClassifier:
    """Rule-based wall / floor / object labeling from segment geometry.

    The vertical direction is the camera -Y axis (rows grow downward in
    back-projected coordinates), so the "vertical component" of a normal
    is its Y entry; "lowest" means largest Y.
    """

    id = "geometric"

    def __init__(self, planar_cu: float = 0.8, wall_max_vertical: float = 0.3,
                 wall_min_span: float = 0.4, floor_min_vertical: float = 0.85,
                 floor_band: float = 0.15):
        self.planar_cu = planar_cu
        self.wall_max_vertical = wall_max_vertical
        self.wall_min_span = wall_min_span
        self.floor_min_vertical = floor_min_vertical
        self.floor_band = floor_band

    def classify(self, image: RgbdImage, mask: np.ndarray,
                 fv: FeatureVolume, context: SceneContext) -> SegmentClass:
        if not mask.any():
            raise EmptySegment("segment mask selects no pixels")
        valid = mask & fv.valid
        if not valid.any():
            return SegmentClass(label="object", confidence=0.0)
        positions = fv.position[valid]
        normals = fv.normal[valid]
        from .region_merge import curvature as planarity

        cu = planarity(positions) if positions.shape[0] >= 3 else 1.0
        resultant = normals.sum(axis=0)
        norm = np.linalg.norm(resultant)
        vertical = abs(resultant[1] / norm) if norm > 0 else 0.0
        ys = positions[:, 1]
        span = float(ys.max() - ys.min())
        scene_span = context.span
        if cu > self.planar_cu and scene_span > 0:
            if (vertical < self.wall_max_vertical
                    and span > self.wall_min_span * scene_span):
                return SegmentClass(label="wall", confidence=0.9)
            lowest_cut = context.y_max - self.floor_band * scene_span
            if vertical > self.floor_min_vertical and float(ys.mean()) >= lowest_cut:
                return SegmentClass(label="floor", confidence=0.9)
        return SegmentClass(label="object", confidence=0.5)


class CommandClassifier:
    """External classifier plug-in: one subprocess call per segment crop.

    The command receives the crop PNG path as its last argument and must
    print one line ``label,confidence`` on stdout.
    """

    def __init__(self, command: list[str]):
        if not command:
            raise ValueError("empty classifier command")
        self.command = list(command)
        self.id = "command:" + " ".join(command)

    def classify(self, image: RgbdImage, mask: np.ndarray,
                 fv: FeatureVolume, context: SceneContext) -> SegmentClass:
        if not mask.any():
            raise EmptySegment("segment mask selects no pixels")
        crop = segment_crop(image.rgb, mask)
        with tempfile.TemporaryDirectory(prefix="volsum-crop-") as tmp:
            path = os.path.join(tmp, "crop.png")
            save_rgb(path, crop)
            try:
                proc = subprocess.run(
                    self.command + [path], capture_output=True, text=True,
                    timeout=60, check=False)
            except OSError as exc:
                raise ClassifierError(f"cannot run {self.command}: {exc}") from exc
        if proc.returncode != 0:
            raise ClassifierError(
                f"classifier exited {proc.returncode}: {proc.stderr.strip()}")
        line = proc.stdout.strip().splitlines()
        if not line or "," not in line[0]:
            raise ClassifierError(f"bad classifier output: {proc.stdout!r}")
        label, conf = line[0].rsplit(",", 1)
        try:
            return SegmentClass(label=label.strip(), confidence=float(conf))
        except ValueError as exc:
            raise ClassifierError(f"bad confidence in {line[0]!r}") from exc


def classify_segment(image: RgbdImage, mask: np.ndarray,
                     fv: FeatureVolume | None = None,
                     context: SceneContext | None = None,
                     classifier=None) -> SegmentClass:
    """Classify one segment; defaults to the geometric baseline."""
    if fv is None:
        from .features import FeatureExtractor

        fv = FeatureExtractor().transform(image)
    if context is None:
        context = SceneContext.from_features(fv)
    if classifier is None:
        classifier = GeometricClassifier()
    return classifier.classify(image, mask, fv, context)


def generate_mask(labels: np.ndarray, scores: dict[int, SegmentScore],
                  classes: dict[int, SegmentClass], tau: float,
                  rho: frozenset | set = frozenset({"wall", "floor"}),
                  strict_and: bool = False,
                  metadata: dict | None = None) -> SaliencySummary:
    """Binary summary mask from volume scores and class gating.

    Default semantics drop a segment when its score falls below ``tau``
    OR its class belongs to ``rho``; ``strict_and`` restores the literal
    conjunction (dropped only when both conditions hold).
    """
    rho = frozenset(rho)
    kept = []
    for rid in sorted(scores):
        below = scores[rid].score < tau
        unwanted = rid in classes and classes[rid].label in rho
        dropped = (below and unwanted) if strict_and else (below or unwanted)
        if not dropped:
            kept.append(rid)
    mask = np.isin(labels, kept)
    meta = {"tau": tau, "rho": sorted(rho), "strict_and": strict_and,
            "normalization": "max_volume"}
    if metadata:
        meta.update(metadata)
    return SaliencySummary(scores=scores, classes=classes,
                           kept_segments=tuple(kept), mask=mask, metadata=meta)


def segment_crop(rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Masked bounding-box crop, zero-padded to a square."""
    if not mask.any():
        raise EmptySegment("segment mask selects no pixels")
    masked = np.where(mask[..., None], rgb, 0).astype(np.uint8)
    rows = np.any(mask, axis=1).nonzero()[0]
    cols = np.any(mask, axis=0).nonzero()[0]
    crop = masked[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    h, w = crop.shape[:2]
    side = max(h, w)
    out = np.zeros((side, side, 3), dtype=np.uint8)
    r0 = (side - h) // 2
    c0 = (side - w) // 2
    out[r0:r0 + h, c0:c0 + w] = crop
    return out


def summarize(image: RgbdImage, summary: SaliencySummary,
              labels: np.ndarray | None = None):
    """Summary RGB (non-summary pixels zeroed) plus per-kept-segment crops."""
    mask = summary.mask
    if mask.shape != image.shape:
        raise ValueError("summary mask does not match the image")
    summary_rgb = np.where(mask[..., None], image.rgb, 0).astype(np.uint8)
    crops = {}
    if labels is not None:
        for rid in summary.kept_segments:
            crops[rid] = segment_crop(image.rgb, labels == rid)
    return summary_rgb, crops
