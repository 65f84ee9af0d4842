"""RGB-D dataset IO: image pairing, depth decoding, manifests, rasters.

Depth comes either from 16-bit single-channel PNGs (integer units scaled
to meters, default millimeters) or from "VSDP" float rasters: a 12-byte
little-endian header (magic ``VSDP``, u32 height, u32 width) followed by
row-major float32 payload already in meters.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedManifest,
    NegativeDepth,
    UnreadableFile,
)

VSDP_MAGIC = b"VSDP"
DEFAULT_DEPTH_SCALE = 1.0 / 1000.0  # NYUv2-style millimeter PNGs


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    ox: float
    oy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def validate_for(self, height: int, width: int) -> None:
        if not (0 <= self.ox < width and 0 <= self.oy < height):
            raise ValueError(
                f"principal point ({self.ox}, {self.oy}) outside {height}x{width} image"
            )


@dataclass(frozen=True)
class RgbdImage:
    """Registered RGB + metric depth pair. Depth 0 marks missing data."""

    rgb: np.ndarray        # H x W x 3 uint8
    depth: np.ndarray      # H x W float64 meters, >= 0
    intrinsics: CameraIntrinsics
    id: str = ""

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape:
            raise DimensionMismatch(
                f"rgb {self.rgb.shape[:2]} vs depth {self.depth.shape}"
            )
        if not np.all(np.isfinite(self.depth)):
            raise NegativeDepth("depth contains non-finite values")
        if np.any(self.depth < 0):
            raise NegativeDepth("depth contains negative values")
        h, w = self.depth.shape
        self.intrinsics.validate_for(h, w)

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class GroundTruth:
    """Binary saliency annotation, optionally with a scene label."""

    mask: np.ndarray       # H x W bool
    scene_label: str | None = None


@dataclass(frozen=True)
class DatasetEntry:
    image: RgbdImage
    ground_truth: GroundTruth | None = None
    scene_label: str | None = None
    paths: dict = field(default_factory=dict)


def read_vsdp(path) -> np.ndarray:
    """Read a VSDP float32 raster (meters)."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12 or header[:4] != VSDP_MAGIC:
            raise UnreadableFile(f"{path}: not a VSDP raster")
        h, w = struct.unpack("<II", header[4:])
        data = np.frombuffer(fh.read(h * w * 4), dtype="<f4")
    if data.size != h * w:
        raise UnreadableFile(f"{path}: truncated VSDP payload")
    return data.reshape(h, w).astype(np.float64)


def write_vsdp(path, array: np.ndarray) -> None:
    """Write a float raster in the VSDP layout."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("VSDP rasters are 2-D")
    with open(path, "wb") as fh:
        fh.write(VSDP_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_labels(path) -> np.ndarray:
    """Read an int32 labeling stored under the VSDP header (segments.raw)."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12 or header[:4] != VSDP_MAGIC:
            raise UnreadableFile(f"{path}: not a label raster")
        h, w = struct.unpack("<II", header[4:])
        data = np.frombuffer(fh.read(h * w * 4), dtype="<i4")
    if data.size != h * w:
        raise UnreadableFile(f"{path}: truncated label payload")
    return data.reshape(h, w).astype(np.int32)


def write_labels(path, labels: np.ndarray) -> None:
    arr = np.ascontiguousarray(labels, dtype="<i4")
    with open(path, "wb") as fh:
        fh.write(VSDP_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def _read_rgb(path) -> np.ndarray:
    img = cv2.imread(os.fspath(path), cv2.IMREAD_COLOR)
    if img is None:
        raise UnreadableFile(f"cannot read RGB image: {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def _read_depth(path, depth_scale: float) -> np.ndarray:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise UnreadableFile(f"cannot open depth file: {path}") from exc
    if magic == VSDP_MAGIC:
        depth = read_vsdp(path)          # float rasters are already meters
    else:
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise UnreadableFile(f"cannot decode depth file: {path}")
        if raw.ndim != 2:
            raise UnreadableFile(f"depth must be single-channel: {path}")
        if np.issubdtype(raw.dtype, np.integer):
            depth = raw.astype(np.float64) * depth_scale
        else:
            depth = raw.astype(np.float64)
    if not np.all(np.isfinite(depth)):
        raise NegativeDepth(f"non-finite depth in {path}")
    if np.any(depth < 0):
        raise NegativeDepth(f"negative depth in {path}")
    return depth


def load_rgbd(rgb_path, depth_path, intrinsics: CameraIntrinsics,
              depth_scale: float = DEFAULT_DEPTH_SCALE,
              image_id: str | None = None) -> RgbdImage:
    """Load and validate an RGB + depth pair.

    Integer depth rasters are multiplied by ``depth_scale`` (default 1/1000,
    millimeters to meters); float rasters are taken as meters.
    """
    rgb = _read_rgb(rgb_path)
    depth = _read_depth(depth_path, depth_scale)
    if rgb.shape[:2] != depth.shape:
        raise DimensionMismatch(
            f"rgb {rgb.shape[:2]} vs depth {depth.shape} "
            f"({rgb_path} / {depth_path})"
        )
    if image_id is None:
        image_id = os.path.splitext(os.path.basename(os.fspath(rgb_path)))[0]
    return RgbdImage(rgb=rgb, depth=depth, intrinsics=intrinsics, id=image_id)


def load_mask(path) -> np.ndarray:
    raw = cv2.imread(os.fspath(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise UnreadableFile(f"cannot read mask: {path}")
    return raw > 127


def save_mask(path, mask: np.ndarray) -> None:
    cv2.imwrite(os.fspath(path), (np.asarray(mask, dtype=bool) * np.uint8(255)))


def save_rgb(path, rgb: np.ndarray) -> None:
    cv2.imwrite(os.fspath(path), cv2.cvtColor(np.asarray(rgb, dtype=np.uint8),
                                              cv2.COLOR_RGB2BGR))


def save_depth_png(path, depth_m: np.ndarray, depth_scale: float = DEFAULT_DEPTH_SCALE) -> None:
    """Store metric depth as a 16-bit PNG using the inverse of ``depth_scale``."""
    counts = np.round(np.asarray(depth_m, dtype=np.float64) / depth_scale)
    if counts.min() < 0 or counts.max() > np.iinfo(np.uint16).max:
        raise ValueError("depth out of uint16 range for this scale")
    cv2.imwrite(os.fspath(path), counts.astype(np.uint16))


def parse_manifest(manifest_path):
    """Yield (line_no, fields) for each data line of a manifest.

    UTF-8, comma-separated: rgb_path, depth_path[, gt_path[, scene_label]].
    ``#`` lines and blank lines are ignored. Paths are relative to the
    manifest's directory unless absolute.
    """
    base = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UnreadableFile(f"cannot read manifest: {manifest_path}") from exc
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in stripped.split(",")]
        if len(fields) < 2 or not fields[0] or not fields[1]:
            raise MalformedManifest(line_no, "expected at least rgb_path, depth_path")
        if len(fields) > 4:
            raise MalformedManifest(line_no, f"too many fields ({len(fields)})")
        resolved = [
            f if (not f or os.path.isabs(f)) else os.path.join(base, f)
            for f in fields[:3]
        ]
        while len(resolved) < 3:
            resolved.append("")
        label = fields[3] if len(fields) == 4 else ""
        yield line_no, (resolved[0], resolved[1], resolved[2], label)


def load_dataset(manifest_path, intrinsics: CameraIntrinsics,
                 depth_scale: float = DEFAULT_DEPTH_SCALE) -> list[DatasetEntry]:
    """Load every record of a manifest, in file order.

    Errors from individual pairs are re-raised tagged with the manifest
    line number.
    """
    entries = []
    for line_no, (rgb_path, depth_path, gt_path, label) in parse_manifest(manifest_path):
        try:
            image = load_rgbd(rgb_path, depth_path, intrinsics, depth_scale)
            gt = None
            if gt_path:
                mask = load_mask(gt_path)
                if mask.shape != image.shape:
                    raise DimensionMismatch(
                        f"gt {mask.shape} vs image {image.shape}")
                gt = GroundTruth(mask=mask, scene_label=label or None)
        except (UnreadableFile, DimensionMismatch, NegativeDepth) as exc:
            raise MalformedManifest(line_no, str(exc)) from exc
        entries.append(DatasetEntry(
            image=image, ground_truth=gt, scene_label=label or None,
            paths={"rgb": rgb_path, "depth": depth_path, "gt": gt_path or None},
        ))
    return entries
