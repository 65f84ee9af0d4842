"""Deterministic synthetic RGB-D scene suites.

Analytic raycast scenes (axis-aligned planes and boxes) rendered through
the same pinhole model the pipeline inverts. Depth is written as exact
float (VSDP) rasters so planar surfaces stay noise-free; all randomness
comes from the suite seed. Four suites:

- ``room``: floor + back wall + cabinet + cup, ground truth = cabinet.
- ``shadow``: a two-level fronto-parallel scene split by a wavy depth
  step, with photometric shadow blotches; ground truth = the two depth
  regions.
- ``merge``: floor + two walls + box with six visible planar faces,
  labeled per face.
- ``scenes``: three room classes (bedroom / office / kitchen style) with
  class-specific furniture textures, for the scene-classification
  harness.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .rgbd import CameraIntrinsics, save_mask, save_rgb, write_labels, write_vsdp

SCENE_CLASSES = ("bedroom", "office", "kitchen")


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    color: np.ndarray
    name: str
    texture: object = None  # callable(world_pos, face_axis) -> rgb delta


@dataclass(frozen=True)
class SceneSample:
    rgb: np.ndarray                 # H x W x 3 uint8
    depth: np.ndarray               # H x W float64 meters
    intrinsics: CameraIntrinsics
    surfaces: np.ndarray            # H x W int32, per visible planar face
    objects: np.ndarray             # H x W int32, per scene object
    surface_names: dict
    object_names: dict
    gt_mask: np.ndarray | None = None
    scene_label: str | None = None
    meta: dict = field(default_factory=dict)


def _ray_dirs(h, w, intr: CameraIntrinsics) -> np.ndarray:
    cols = (np.arange(w) - intr.ox) / intr.fx
    rows = (np.arange(h) - intr.oy) / intr.fy
    dx, dy = np.meshgrid(cols, rows)
    return np.stack([dx, dy, np.ones_like(dx)], axis=-1)


def _plane_hits(dirs, axis: int, value: float):
    comp = dirs[..., axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = value / comp
    t = np.where((comp * np.sign(value) > 0) & (t > 0), t, np.inf)
    return t


def _box_hits(dirs, box: Box):
    with np.errstate(divide="ignore"):
        inv = 1.0 / dirs
    t1 = box.lo * inv
    t2 = box.hi * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    t_enter = tmin.max(axis=-1)
    t_exit = tmax.min(axis=-1)
    hit = (t_enter <= t_exit) & (t_enter > 1e-9)
    axis = tmin.argmax(axis=-1)
    t = np.where(hit, t_enter, np.inf)
    return t, axis


class _SceneBuilder:
    """Accumulates planes and boxes, then rasterizes nearest hits."""

    def __init__(self, h, w, intr):
        self.h, self.w, self.intr = h, w, intr
        self.dirs = _ray_dirs(h, w, intr)
        self.layers = []        # (t, color_fn, surface_name, object_name)

    def add_plane(self, axis, value, color, name, obj=None, texture=None):
        t = _plane_hits(self.dirs, axis, value)
        self.layers.append((t, np.asarray(color, float), name, obj or name,
                            texture, None))

    def add_box(self, box: Box, face_names=None, obj=None):
        t, axis = _box_hits(self.dirs, box)
        self.layers.append((t, box.color, box.name, obj or box.name,
                            box.texture, (axis, face_names)))

    def render(self):
        h, w = self.h, self.w
        stack = np.stack([layer[0] for layer in self.layers])
        best = stack.argmin(axis=0)
        depth = np.take_along_axis(stack, best[None], axis=0)[0]
        rgb = np.zeros((h, w, 3))
        surfaces = np.full((h, w), -1, dtype=np.int32)
        objects = np.full((h, w), -1, dtype=np.int32)
        surface_names = {}
        object_names = {}
        world = self.dirs * depth[..., None]
        for li, (t, color, name, obj, texture, boxinfo) in enumerate(self.layers):
            sel = (best == li) & np.isfinite(depth)
            if not sel.any():
                continue
            if boxinfo is None:
                sid = _intern(surface_names, name)
                surfaces[sel] = sid
            else:
                axis, face_names = boxinfo
                for ax in range(3):
                    fsel = sel & (axis == ax)
                    if not fsel.any():
                        continue
                    fname = (face_names or {}).get(ax, f"{name}_f{ax}")
                    surfaces[fsel] = _intern(surface_names, fname)
            oid = _intern(object_names, obj)
            objects[sel] = oid
            base = np.broadcast_to(color, (int(sel.sum()), 3)).astype(float)
            if texture is not None:
                base = base + texture(world[sel])
            rgb[sel] = base
        depth = np.where(np.isfinite(depth), depth, 0.0)
        return rgb, depth, surfaces, objects, surface_names, object_names


def _intern(table: dict, name: str) -> int:
    for k, v in table.items():
        if v == name:
            return k
    nid = len(table)
    table[nid] = name
    return nid


def _finalize_rgb(rgb, rng, noise=2):
    if noise:
        rgb = rgb + rng.integers(-noise, noise + 1, rgb.shape)
    return np.clip(rgb, 0, 255).astype(np.uint8)


def _stripes(coord_axis, period, phase, amp):
    def tex(world):
        phase_val = world[:, coord_axis] / period + phase
        return amp * np.sign(np.sin(2.0 * np.pi * phase_val))[:, None]
    return tex


def _checker(axes, period, phase, amp):
    def tex(world):
        q = np.floor(world[:, axes[0]] / period + phase) + np.floor(
            world[:, axes[1]] / period)
        return amp * np.where(q % 2 == 0, 1.0, -1.0)[:, None]
    return tex


def room_scene(seed: int = 0, shape=(150, 160)) -> SceneSample:
    """Floor + back wall + cabinet (front and top visible) + small cup."""
    h, w = shape
    intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=(w - 1) / 2, oy=(h - 1) / 2)
    rng = np.random.default_rng(seed)
    jit = lambda: rng.integers(-6, 7, 3)

    builder = _SceneBuilder(h, w, intr)
    cabinet = Box(lo=np.array([-0.69, 0.20, 2.0]), hi=np.array([0.31, 1.0, 2.6]),
                  color=np.array([96, 64, 40]) + jit(), name="cabinet")
    cup = Box(lo=np.array([0.55, 0.90, 1.55]), hi=np.array([0.65, 1.0, 1.65]),
              color=np.array([170, 40, 40]) + jit(), name="cup")
    builder.add_box(cabinet)
    builder.add_box(cup)
    builder.add_plane(1, 1.0, np.array([139, 125, 105]) + jit(), "floor")
    builder.add_plane(2, 3.0, np.array([168, 170, 175]) + jit(), "wall")
    rgb, depth, surfaces, objects, snames, onames = builder.render()
    rgb = _finalize_rgb(rgb, rng)
    cab_id = next(k for k, v in onames.items() if v == "cabinet")
    return SceneSample(
        rgb=rgb, depth=depth, intrinsics=intr, surfaces=surfaces,
        objects=objects, surface_names=snames, object_names=onames,
        gt_mask=objects == cab_id, scene_label=None,
        meta={"seed": seed, "suite": "room"},
    )


def shadow_scene(seed: int = 0, shape=(120, 160),
                 shadow_factor: float = 0.8) -> SceneSample:
    """Two fronto-parallel depth levels split by a wavy vertical step,
    same base color, with dark photometric blotches ("shadows")."""
    h, w = shape
    intr = CameraIntrinsics(fx=110.0, fy=110.0, ox=(w - 1) / 2, oy=(h - 1) / 2)
    rng = np.random.default_rng(seed)
    amp = rng.uniform(8, 14)
    period = rng.uniform(50, 90)
    phase = rng.uniform(0, 2 * np.pi)
    rows = np.arange(h)
    split = w / 2 + amp * np.sin(2 * np.pi * rows / period + phase)
    right = np.arange(w)[None, :] >= split[:, None]

    z_near, z_far = 2.0, 2.6
    depth = np.where(right, z_far, z_near).astype(np.float64)
    dirs = _ray_dirs(h, w, intr)
    world = dirs * depth[..., None]

    base = np.array([150.0, 148.0, 145.0]) + rng.integers(-5, 6, 3)
    rgb = np.tile(base, (h, w, 1))
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # Smooth photometric texture, identical statistics on both sides.
    tex = 5.0 * np.sin(2 * np.pi * (rr / rng.uniform(35, 55)
                                    + cc / rng.uniform(45, 70)))
    rgb += tex[..., None]

    shadows = []
    split_mid = float(split.mean())
    for i in range(3):
        if i < 2:  # interior blotches, one per side
            side = -1 if i == 0 else 1
            cx = split_mid + side * rng.uniform(0.25, 0.4) * w
        else:      # straddles the step
            r0 = rng.integers(h // 4, 3 * h // 4)
            cx = float(split[r0])
        cy = rng.uniform(0.2, 0.8) * h
        ra = rng.uniform(9, 15)
        rb = rng.uniform(9, 15)
        blob = ((cc - cx) / ra) ** 2 + ((rr - cy) / rb) ** 2 <= 1.0
        rgb[blob] *= shadow_factor
        shadows.append({"cx": float(cx), "cy": float(cy),
                        "ra": float(ra), "rb": float(rb)})

    rgb = _finalize_rgb(rgb, rng)
    labels = right.astype(np.int32)
    return SceneSample(
        rgb=rgb, depth=depth, intrinsics=intr, surfaces=labels,
        objects=labels, surface_names={0: "near", 1: "far"},
        object_names={0: "near", 1: "far"}, gt_mask=None,
        meta={"seed": seed, "suite": "shadow", "shadows": shadows,
              "world_hint": float(np.abs(world).mean())},
    )


def merge_scene(seed: int = 0, shape=(120, 160)) -> SceneSample:
    """Back wall + left wall + floor + box showing three faces: six
    planar surfaces, labeled per face for merge purity checks."""
    h, w = shape
    intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=(w - 1) / 2, oy=(h - 1) / 2)
    rng = np.random.default_rng(seed)
    jit = lambda: rng.integers(-3, 4, 3)

    builder = _SceneBuilder(h, w, intr)
    # Base grays sit mid-bin for 16-level quantization so the per-surface
    # co-occurrence statistics stay stable under sparse region masks.
    box = Box(lo=np.array([-0.85, 0.55, 1.7]), hi=np.array([-0.25, 1.0, 2.1]),
              color=np.array([100, 65, 40]) + jit(), name="box")
    builder.add_box(box, face_names={0: "box_side", 1: "box_top", 2: "box_front"},
                    obj="box")
    builder.add_plane(1, 1.0, np.array([130, 120, 100]) + jit(), "floor")
    builder.add_plane(0, -1.1, np.array([152, 152, 148]) + jit(), "side_wall")
    builder.add_plane(2, 3.0, np.array([170, 170, 172]) + jit(), "back_wall")
    rgb, depth, surfaces, objects, snames, onames = builder.render()
    rgb = _finalize_rgb(rgb, rng)
    return SceneSample(
        rgb=rgb, depth=depth, intrinsics=intr, surfaces=surfaces,
        objects=objects, surface_names=snames, object_names=onames,
        meta={"seed": seed, "suite": "merge"},
    )


def class_scene(label: str, seed: int = 0, shape=(150, 160)) -> SceneSample:
    """One scene of the three-class suite. Heights and depths are fixed
    per class (the furniture must straddle the superpixel seed rows);
    lateral position, palette, and texture phases vary with the seed."""
    if label not in SCENE_CLASSES:
        raise ValueError(f"unknown scene class {label!r}")
    h, w = shape
    intr = CameraIntrinsics(fx=100.0, fy=100.0, ox=(w - 1) / 2, oy=(h - 1) / 2)
    rng = np.random.default_rng(seed)
    jit = lambda a: rng.integers(-a, a + 1, 3)
    dx = rng.uniform(-0.06, 0.06)
    phase = rng.uniform(0.0, 1.0)

    builder = _SceneBuilder(h, w, intr)
    # Class-neutral foreground clutter: identical geometry in all classes,
    # so depth-favored summaries carry no class signal.
    stool = Box(lo=np.array([-0.45 + dx, 0.80, 1.25]),
                hi=np.array([-0.15 + dx, 1.0, 1.45]),
                color=np.array([120, 118, 112]) + jit(5), name="stool")
    builder.add_box(stool)
    if label == "bedroom":
        bed = Box(lo=np.array([-0.66 + dx, 0.55, 2.05]),
                  hi=np.array([0.14 + dx, 1.0, 3.0]),
                  color=np.array([150, 90, 70]) + jit(8), name="bed",
                  texture=_stripes(1, rng.uniform(0.10, 0.14), phase, 16.0))
        builder.add_box(bed)
    elif label == "office":
        desk = Box(lo=np.array([-0.55 + dx, 0.45, 2.1]),
                   hi=np.array([0.25 + dx, 1.0, 2.6]),
                   color=np.array([70, 80, 90]) + jit(8), name="desk",
                   texture=_checker((0, 2), rng.uniform(0.07, 0.10), phase, 14.0))
        builder.add_box(desk)
    else:  # kitchen
        counter = Box(lo=np.array([0.00 + dx, 0.35, 2.2]),
                      hi=np.array([0.80 + dx, 1.0, 2.85]),
                      color=np.array([165, 140, 60]) + jit(8), name="counter",
                      texture=_stripes(0, rng.uniform(0.08, 0.12), phase, 16.0))
        builder.add_box(counter)
    builder.add_plane(1, 1.0, np.array([132, 128, 118]) + jit(6), "floor",
                      texture=_checker((0, 2), 0.25, 0.0, 10.0))
    builder.add_plane(2, 3.0, np.array([172, 172, 176]) + jit(6), "wall")
    rgb, depth, surfaces, objects, snames, onames = builder.render()
    rgb = _finalize_rgb(rgb, rng)
    return SceneSample(
        rgb=rgb, depth=depth, intrinsics=intr, surfaces=surfaces,
        objects=objects, surface_names=snames, object_names=onames,
        scene_label=label, meta={"seed": seed, "suite": "scenes"},
    )


def balanced_oversegmentation(surfaces: np.ndarray, normals: np.ndarray,
                              n_fragments: int = 100,
                              seed: int = 0) -> np.ndarray:
    """Split each labeled surface into interleaved fragments whose normal
    and position statistics match the parent surface.

    Pixels are ordered by their normal's deviation from the surface mean
    direction (random within ties) and dealt round-robin, so every
    fragment receives the same share of crease-contaminated normals while
    staying spatially interleaved. Fragment counts are proportional to
    surface area (total about ``n_fragments``)."""
    surfaces = np.asarray(surfaces)
    rng = np.random.default_rng(seed)
    h, w = surfaces.shape
    labels = np.zeros((h, w), dtype=np.int32)
    next_id = 0
    total = surfaces.size
    for sid in np.unique(surfaces):
        mask = surfaces == sid
        pix = np.argwhere(mask)
        k = max(1, round(mask.sum() / total * n_fragments))
        n_vec = normals[mask]
        mean = n_vec.sum(axis=0)
        norm = np.linalg.norm(mean)
        mean = mean / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
        tilt = -(n_vec @ mean)
        order = np.lexsort((rng.random(len(pix)), tilt))
        frag = np.arange(len(pix)) % k
        sel = pix[order]
        labels[sel[:, 0], sel[:, 1]] = next_id + frag
        next_id += k
    return labels


def _write_scene(sample: SceneSample, directory, stem: str,
                 with_gt: bool) -> dict:
    os.makedirs(directory, exist_ok=True)
    rgb_path = os.path.join(directory, f"{stem}_rgb.png")
    depth_path = os.path.join(directory, f"{stem}_depth.vsdp")
    save_rgb(rgb_path, sample.rgb)
    write_vsdp(depth_path, sample.depth)
    row = {"rgb": rgb_path, "depth": depth_path, "gt": "",
           "label": sample.scene_label or ""}
    if with_gt and sample.gt_mask is not None:
        gt_path = os.path.join(directory, f"{stem}_gt.png")
        save_mask(gt_path, sample.gt_mask)
        row["gt"] = gt_path
    seg_path = os.path.join(directory, f"{stem}_surfaces.raw")
    write_labels(seg_path, sample.surfaces)
    row["surfaces"] = seg_path
    return row


def _write_manifest(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# rgb, depth, gt, scene_label\n")
        for row in rows:
            fh.write(f"{os.path.basename(row['rgb'])},"
                     f"{os.path.basename(row['depth'])},"
                     f"{os.path.basename(row['gt']) if row['gt'] else ''},"
                     f"{row['label']}\n")


def write_suite(suite: str, out_dir, seed: int = 0, count: int | None = None) -> dict:
    """Materialize a suite on disk; returns an index of written files."""
    os.makedirs(out_dir, exist_ok=True)
    index = {"suite": suite, "seed": seed, "scenes": []}
    if suite == "room":
        count = count or 1
        rows = []
        for i in range(count):
            sample = room_scene(seed + i)
            rows.append(_write_scene(sample, out_dir, f"room_{i:03d}", True))
            index["scenes"].append({"stem": f"room_{i:03d}", "seed": seed + i})
        _write_manifest(os.path.join(out_dir, "manifest.csv"), rows)
        index["intrinsics"] = vars(room_scene(seed).intrinsics)
    elif suite == "shadow":
        count = count or 10
        rows = []
        for i in range(count):
            sample = shadow_scene(seed + i)
            rows.append(_write_scene(sample, out_dir, f"shadow_{i:03d}", False))
            index["scenes"].append({"stem": f"shadow_{i:03d}", "seed": seed + i})
        _write_manifest(os.path.join(out_dir, "manifest.csv"), rows)
        index["intrinsics"] = vars(shadow_scene(seed).intrinsics)
    elif suite == "merge":
        count = count or 1
        rows = []
        for i in range(count):
            sample = merge_scene(seed + i)
            rows.append(_write_scene(sample, out_dir, f"merge_{i:03d}", False))
            index["scenes"].append({"stem": f"merge_{i:03d}", "seed": seed + i})
        _write_manifest(os.path.join(out_dir, "manifest.csv"), rows)
        index["intrinsics"] = vars(merge_scene(seed).intrinsics)
    elif suite == "scenes":
        per_class = (count or 60) // (2 * len(SCENE_CLASSES))
        train_rows, test_rows = [], []
        for split, rows, base in (("train", train_rows, 0),
                                  ("test", test_rows, 10_000)):
            sub = os.path.join(out_dir, split)
            for ci, label in enumerate(SCENE_CLASSES):
                for i in range(per_class):
                    s = seed + base + ci * 1000 + i
                    sample = class_scene(label, s)
                    stem = f"{split}_{label}_{i:03d}"
                    rows.append(_write_scene(sample, sub, stem, False))
                    index["scenes"].append({"stem": stem, "seed": s,
                                            "label": label, "split": split})
            _write_manifest(os.path.join(sub, "manifest.csv"), rows)
            with open(os.path.join(sub, "labels.csv"), "w", encoding="utf-8") as fh:
                fh.write("# image, label\n")
                for row in rows:
                    fh.write(f"{os.path.basename(row['rgb'])},{row['label']}\n")
        index["intrinsics"] = vars(class_scene("bedroom", seed).intrinsics)
    else:
        raise ValueError(f"unknown suite {suite!r}")
    with open(os.path.join(out_dir, "suite.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=2)
    return index
