"""End-to-end pipeline: features -> superpixels -> region models ->
merging -> volumetric saliency -> class gating -> summary artifacts.

Per-image outputs land in ``<out>/<id>/`` (mask.png, summary.png,
segments.raw, overlay.png, scores.json, merge_log.csv, crops/) written
into a temp directory and renamed into place. A machine-readable
``run.json`` indexes the whole run; no timestamps are embedded so reruns
with the same config and seed are byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import metrics as metrics_mod
from .errors import VolsumError
from .features import FeatureExtractor, FeatureVolume
from .region_merge import (
    MergeThresholds,
    build_region_models,
    merge_regions,
    model_from_mask,
    write_merge_log,
)
from .rgbd import (
    CameraIntrinsics,
    DatasetEntry,
    RgbdImage,
    load_dataset,
    read_labels,
    save_mask,
    save_rgb,
    write_labels,
)
from .saliency import (
    CommandClassifier,
    GeometricClassifier,
    SaliencySummary,
    SceneContext,
    generate_mask,
    saliency_scores,
    segment_pointclouds,
    summarize,
)
from .superpixel import SlicParams, boundary_overlay, slic_segment

CONFIG_TEMPLATE = """\
# volsum run configuration.
# Thresholds marked [paper] carry the published defaults.

manifest: {manifest}
out_dir: {out_dir}
seed: 0
workers: 1

intrinsics:
  fx: {fx}
  fy: {fy}
  ox: {ox}
  oy: {oy}

depth_scale: 0.001        # meters per integer depth unit (mm PNGs)
depth_variant: unspecified  # raw vs inpainted source depth, recorded in run.json

slic:
  num_superpixels: 100
  compactness: 10.0       # m, color normalizer
  max_spatial: 0.5        # a, meters
  max_azimuth: 1.5707963267948966   # b, radians
  max_elevation: 1.5707963267948966 # d, radians
  max_iters: 10
  enable_spatial_terms: true

features:
  normal_k: 16
  normal_window: 7
  glcm_levels: 16

mixture:
  components: 1           # K per region

merge:
  c_th: 0.05              # [paper] planarity threshold
  k_th: 5.0               # [paper] concentration threshold
  d_th: 1.5               # [paper] texture distance threshold
  delta: 0.35             # [paper] weighted distance threshold
  beta1: 0.4              # [paper] color weight (1 - beta2)
  beta2: 0.6              # [paper] density weight
  beta3: 0.5              # [paper] direction weight

saliency:
  tau: 0.2                # [paper] volumetric saliency threshold
  rho: [wall, floor]      # [paper] unwanted classes
  eq5_strict_and: false   # true restores the literal AND of the mask rule
  classifier: geometric   # or "command: <executable> <args...>"
"""


@dataclass
class RunConfig:
    manifest: str
    out_dir: str
    intrinsics: CameraIntrinsics
    depth_scale: float = 0.001
    depth_variant: str = "unspecified"
    slic: SlicParams = field(default_factory=SlicParams)
    normal_k: int = 16
    normal_window: int = 7
    glcm_levels: int = 16
    em_components: int = 1
    merge: MergeThresholds = field(default_factory=MergeThresholds)
    tau: float = 0.2
    rho: tuple = ("wall", "floor")
    eq5_strict_and: bool = False
    classifier_spec: str = "geometric"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        base = os.path.dirname(os.path.abspath(os.fspath(path)))

        def respath(p):
            p = str(p)
            return p if os.path.isabs(p) else os.path.join(base, p)

        intr = raw.get("intrinsics", {})
        slic_raw = raw.get("slic", {})
        feat = raw.get("features", {})
        merge_raw = raw.get("merge", {})
        sal = raw.get("saliency", {})
        return cls(
            manifest=respath(raw["manifest"]),
            out_dir=respath(raw["out_dir"]),
            intrinsics=CameraIntrinsics(
                fx=float(intr["fx"]), fy=float(intr["fy"]),
                ox=float(intr["ox"]), oy=float(intr["oy"])),
            depth_scale=float(raw.get("depth_scale", 0.001)),
            depth_variant=str(raw.get("depth_variant", "unspecified")),
            slic=SlicParams(
                num_superpixels=int(slic_raw.get("num_superpixels", 100)),
                m=float(slic_raw.get("compactness", 10.0)),
                a=float(slic_raw.get("max_spatial", 0.5)),
                b=float(slic_raw.get("max_azimuth", math.pi / 2)),
                d=float(slic_raw.get("max_elevation", math.pi / 2)),
                max_iters=int(slic_raw.get("max_iters", 10)),
                enable_spatial_terms=bool(
                    slic_raw.get("enable_spatial_terms", True))),
            normal_k=int(feat.get("normal_k", 16)),
            normal_window=int(feat.get("normal_window", 7)),
            glcm_levels=int(feat.get("glcm_levels", 16)),
            em_components=int(raw.get("mixture", {}).get("components", 1)),
            merge=MergeThresholds(
                c_th=float(merge_raw.get("c_th", 0.05)),
                k_th=float(merge_raw.get("k_th", 5.0)),
                d_th=float(merge_raw.get("d_th", 1.5)),
                delta=float(merge_raw.get("delta", 0.35)),
                beta1=float(merge_raw.get("beta1", 0.4)),
                beta2=float(merge_raw.get("beta2", 0.6)),
                beta3=float(merge_raw.get("beta3", 0.5))),
            tau=float(sal.get("tau", 0.2)),
            rho=tuple(sal.get("rho", ["wall", "floor"])),
            eq5_strict_and=bool(sal.get("eq5_strict_and", False)),
            classifier_spec=str(sal.get("classifier", "geometric")),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
        )

    def describe(self) -> dict:
        d = {
            "manifest": self.manifest, "out_dir": self.out_dir,
            "intrinsics": vars(self.intrinsics),
            "depth_scale": self.depth_scale,
            "depth_variant": self.depth_variant,
            "slic": asdict(self.slic),
            "features": {"normal_k": self.normal_k,
                         "normal_window": self.normal_window,
                         "glcm_levels": self.glcm_levels},
            "mixture": {"components": self.em_components},
            "merge": asdict(self.merge),
            "saliency": {"tau": self.tau, "rho": list(self.rho),
                         "eq5_strict_and": self.eq5_strict_and,
                         "classifier": self.classifier_spec},
            "seed": self.seed,
        }
        return d


def make_classifier(spec: str):
    spec = spec.strip()
    if spec == "geometric":
        return GeometricClassifier()
    if spec.startswith("command:"):
        return CommandClassifier(spec[len("command:"):].split())
    raise ValueError(f"unknown classifier spec {spec!r}")


@dataclass
class PipelineResult:
    image_id: str
    features: FeatureVolume
    superpixels: np.ndarray
    labels: np.ndarray
    models: list
    merge_audit: list
    summary: SaliencySummary
    summary_rgb: np.ndarray
    crops: dict
    metrics: tuple | None = None


def segment_stage(image: RgbdImage, config: RunConfig,
                  fv: FeatureVolume | None = None):
    """Features + modified SLIC + region models + merging."""
    if fv is None:
        fv = FeatureExtractor(normal_k=config.normal_k,
                              normal_window=config.normal_window).transform(image)
    labeling = slic_segment(fv, config.slic)
    models = build_region_models(
        fv, labeling.labels, em_components=config.em_components,
        seed=config.seed, glcm_levels=config.glcm_levels)

    def refit(mask):
        return model_from_mask(fv, mask, em_components=config.em_components,
                               seed=config.seed, glcm_levels=config.glcm_levels)

    labels, merged_models, audit = merge_regions(
        labeling.labels, models, config.merge, refit)
    return fv, labeling.labels, labels, merged_models, audit


def saliency_stage(image: RgbdImage, labels: np.ndarray, config: RunConfig,
                   fv: FeatureVolume | None = None):
    """OBB volume scores, class gating, mask, and summary artifacts."""
    if fv is None:
        fv = FeatureExtractor(normal_k=config.normal_k,
                              normal_window=config.normal_window).transform(image)
    classifier = make_classifier(config.classifier_spec)
    context = SceneContext.from_features(fv)
    clouds = segment_pointclouds(fv, labels)
    scores, _boxes = saliency_scores(clouds)
    classes = {}
    for rid in sorted(scores):
        classes[rid] = classifier.classify(image, labels == rid, fv, context)
    summary = generate_mask(
        labels, scores, classes, config.tau, rho=set(config.rho),
        strict_and=config.eq5_strict_and,
        metadata={"classifier": getattr(classifier, "id", "geometric"),
                  "image_id": image.id, "seed": config.seed})
    summary_rgb, crops = summarize(image, summary, labels=labels)
    return summary, summary_rgb, crops


def process_image(image: RgbdImage, config: RunConfig,
                  gt_mask: np.ndarray | None = None) -> PipelineResult:
    fv, superpixels, labels, models, audit = segment_stage(image, config)
    summary, summary_rgb, crops = saliency_stage(image, labels, config, fv=fv)
    result = PipelineResult(
        image_id=image.id, features=fv, superpixels=superpixels,
        labels=labels, models=models, merge_audit=audit, summary=summary,
        summary_rgb=summary_rgb, crops=crops)
    if gt_mask is not None:
        result.metrics = metrics_mod.evaluate_pair(
            image.id, summary.mask.astype(np.float64), gt_mask)
    return result


def scores_payload(summary: SaliencySummary) -> dict:
    return {
        "metadata": summary.metadata,
        "kept_segments": list(summary.kept_segments),
        "segments": [
            {
                "segment_id": rid,
                "volume_m3": summary.scores[rid].volume_m3,
                "score": summary.scores[rid].score,
                "class": summary.classes[rid].label if rid in summary.classes else None,
                "confidence": (summary.classes[rid].confidence
                               if rid in summary.classes else None),
                "kept": rid in summary.kept_segments,
                "flags": list(summary.scores[rid].flags),
            }
            for rid in sorted(summary.scores)
        ],
    }


def write_image_artifacts(result: PipelineResult, image: RgbdImage,
                          out_dir) -> str:
    """Write one image's artifact directory atomically (temp + rename)."""
    final_dir = os.path.join(out_dir, result.image_id)
    tmp_dir = os.path.join(out_dir, f".tmp-{result.image_id}-{os.getpid()}")
    if os.path.exists(tmp_dir):
        shutil.rmtree(tmp_dir)
    os.makedirs(tmp_dir)
    save_mask(os.path.join(tmp_dir, "mask.png"), result.summary.mask)
    save_rgb(os.path.join(tmp_dir, "summary.png"), result.summary_rgb)
    write_labels(os.path.join(tmp_dir, "segments.raw"), result.labels)
    save_rgb(os.path.join(tmp_dir, "overlay.png"),
             boundary_overlay(image.rgb, result.labels))
    with open(os.path.join(tmp_dir, "scores.json"), "w", encoding="utf-8") as fh:
        json.dump(scores_payload(result.summary), fh, sort_keys=True, indent=2)
    write_merge_log(os.path.join(tmp_dir, "merge_log.csv"), result.merge_audit)
    crops_dir = os.path.join(tmp_dir, "crops")
    os.makedirs(crops_dir)
    for rid, crop in sorted(result.crops.items()):
        save_rgb(os.path.join(crops_dir, f"segment_{rid:04d}.png"), crop)
    if os.path.exists(final_dir):
        shutil.rmtree(final_dir)
    os.replace(tmp_dir, final_dir)
    return final_dir


def _process_entry(args):
    entry, config = args
    gt = entry.ground_truth.mask if entry.ground_truth is not None else None
    result = process_image(entry.image, config, gt_mask=gt)
    path = write_image_artifacts(result, entry.image, config.out_dir)
    return {
        "id": result.image_id,
        "status": "ok",
        "path": path,
        "kept_segments": list(result.summary.kept_segments),
        "metrics": (None if result.metrics is None else {
            "f_measure": result.metrics[1], "e_measure": result.metrics[2],
            "s_measure": result.metrics[3], "mae": result.metrics[4],
        }),
    }


def run_pipeline(config: RunConfig):
    """Process every manifest image; returns (report, records, failures)."""
    entries = load_dataset(config.manifest, config.intrinsics,
                           config.depth_scale)
    os.makedirs(config.out_dir, exist_ok=True)
    records = []
    failures = 0
    jobs = [(entry, config) for entry in entries]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = []
            for entry, job in zip(entries, jobs):
                outcomes.append(pool.submit(_process_entry, job))
            for entry, fut in zip(entries, outcomes):
                try:
                    records.append(fut.result())
                except VolsumError as exc:
                    failures += 1
                    records.append({"id": entry.image.id, "status": "error",
                                    "error": str(exc)})
    else:
        for job in jobs:
            entry = job[0]
            try:
                records.append(_process_entry(job))
            except VolsumError as exc:
                failures += 1
                records.append({"id": entry.image.id, "status": "error",
                                "error": str(exc)})
    rows = [
        (rec["id"], rec["metrics"]["f_measure"], rec["metrics"]["e_measure"],
         rec["metrics"]["s_measure"], rec["metrics"]["mae"])
        for rec in records
        if rec.get("status") == "ok" and rec.get("metrics")
    ]
    report = metrics_mod.MetricReport(per_image=rows)
    payload = {
        "config": config.describe(),
        "images": records,
        "failures": failures,
    }
    if rows:
        f, e, s, m = report.means()
        payload["metric_means"] = {"f_measure": f, "e_measure": e,
                                   "s_measure": s, "mae": m}
    with open(os.path.join(config.out_dir, "run.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
    if rows:
        report.write_csv(os.path.join(config.out_dir, "report.csv"))
    return report, records, failures


def load_segments(path) -> np.ndarray:
    return read_labels(path)
