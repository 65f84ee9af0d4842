"""Command-line interface.

Exit codes: 0 success, 1 partial per-image failures, 2 configuration or
usage errors.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from .errors import VolsumError
from .metrics import MetricReport, evaluate_pair
from .pipeline import (
    CONFIG_TEMPLATE,
    RunConfig,
    run_pipeline,
    saliency_stage,
    segment_stage,
    write_image_artifacts,
)
from .rgbd import (
    CameraIntrinsics,
    load_mask,
    load_rgbd,
    read_labels,
    save_rgb,
    write_labels,
)
from .region_merge import write_merge_log
from .saliency import summarize
from .scene import SceneClassifier, accuracy
from .superpixel import boundary_overlay
from .synthetic import write_suite


@click.group()
def main():
    """Volumetric-saliency guided RGB-D image summarization."""


def _load_config(path) -> RunConfig:
    try:
        return RunConfig.from_yaml(path)
    except (KeyError, ValueError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)


def _load_pair(config: RunConfig, rgb, depth, image_id):
    try:
        return load_rgbd(rgb, depth, config.intrinsics,
                         depth_scale=config.depth_scale, image_id=image_id)
    except VolsumError as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(2)


@main.command("init-config")
@click.option("--out", "out_path", default="volsum.yaml", show_default=True)
@click.option("--manifest", default="manifest.csv", show_default=True)
@click.option("--out-dir", default="out", show_default=True)
@click.option("--fx", default=100.0, show_default=True)
@click.option("--fy", default=100.0, show_default=True)
@click.option("--ox", default=79.5, show_default=True)
@click.option("--oy", default=74.5, show_default=True)
def init_config(out_path, manifest, out_dir, fx, fy, ox, oy):
    """Write a commented configuration template."""
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(CONFIG_TEMPLATE.format(manifest=manifest, out_dir=out_dir,
                                        fx=fx, fy=fy, ox=ox, oy=oy))
    click.echo(out_path)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_override", default=None,
              help="Override the configured output directory.")
@click.option("--workers", default=None, type=int)
def run(config_path, out_override, workers):
    """Run the full summarization pipeline over a dataset manifest."""
    config = _load_config(config_path)
    if out_override:
        config.out_dir = out_override
    if workers:
        config.workers = workers
    report, records, failures = run_pipeline(config)
    for rec in records:
        if rec["status"] == "ok":
            kept = ",".join(str(k) for k in rec["kept_segments"])
            click.echo(f"{rec['id']}: ok kept=[{kept}]")
        else:
            click.echo(f"{rec['id']}: ERROR {rec['error']}", err=True)
    if report.per_image:
        f, e, s, m = report.means()
        click.echo(f"means: F={f:.4f} E={e:.4f} S={s:.4f} MAE={m:.4f}")
    sys.exit(1 if failures else 0)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--rgb", required=True, type=click.Path(exists=True))
@click.option("--depth", required=True, type=click.Path(exists=True))
@click.option("--id", "image_id", default=None)
@click.option("--out", "out_dir", required=True)
def segment(config_path, rgb, depth, image_id, out_dir):
    """Segment one image: modified SLIC + region merging, file outputs."""
    config = _load_config(config_path)
    image = _load_pair(config, rgb, depth, image_id)
    try:
        _fv, _raw, labels, _models, audit = segment_stage(image, config)
    except VolsumError as exc:
        click.echo(f"segment error: {exc}", err=True)
        sys.exit(1)
    os.makedirs(out_dir, exist_ok=True)
    write_labels(os.path.join(out_dir, "segments.raw"), labels)
    save_rgb(os.path.join(out_dir, "overlay.png"),
             boundary_overlay(image.rgb, labels))
    write_merge_log(os.path.join(out_dir, "merge_log.csv"), audit)
    click.echo(f"{int(labels.max()) + 1} regions -> {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--rgb", required=True, type=click.Path(exists=True))
@click.option("--depth", required=True, type=click.Path(exists=True))
@click.option("--segments", "segments_path", required=True,
              type=click.Path(exists=True))
@click.option("--id", "image_id", default=None)
@click.option("--out", "out_dir", required=True)
def saliency(config_path, rgb, depth, segments_path, image_id, out_dir):
    """Score segments, gate by class, and emit mask/summary/crops."""
    config = _load_config(config_path)
    image = _load_pair(config, rgb, depth, image_id)
    labels = read_labels(segments_path)
    if labels.shape != image.shape:
        click.echo("segments raster does not match the image", err=True)
        sys.exit(2)
    try:
        summary, summary_rgb, crops = saliency_stage(image, labels, config)
    except VolsumError as exc:
        click.echo(f"saliency error: {exc}", err=True)
        sys.exit(1)
    os.makedirs(out_dir, exist_ok=True)
    from .pipeline import scores_payload
    from .rgbd import save_mask

    save_mask(os.path.join(out_dir, "mask.png"), summary.mask)
    save_rgb(os.path.join(out_dir, "summary.png"), summary_rgb)
    with open(os.path.join(out_dir, "scores.json"), "w", encoding="utf-8") as fh:
        json.dump(scores_payload(summary), fh, sort_keys=True, indent=2)
    crops_dir = os.path.join(out_dir, "crops")
    os.makedirs(crops_dir, exist_ok=True)
    for rid, crop in sorted(crops.items()):
        save_rgb(os.path.join(crops_dir, f"segment_{rid:04d}.png"), crop)
    click.echo(f"kept={list(summary.kept_segments)} -> {out_dir}")


@main.command()
@click.option("--pred-dir", required=True, type=click.Path(exists=True))
@click.option("--gt-dir", required=True, type=click.Path(exists=True))
@click.option("--out-csv", default=None)
@click.option("--out-json", default=None)
def evaluate(pred_dir, gt_dir, out_csv, out_json):
    """Saliency metrics for matching mask files (by stem) in two dirs."""
    preds = {os.path.splitext(f)[0]: os.path.join(pred_dir, f)
             for f in sorted(os.listdir(pred_dir)) if f.endswith(".png")}
    gts = {os.path.splitext(f)[0]: os.path.join(gt_dir, f)
           for f in sorted(os.listdir(gt_dir)) if f.endswith(".png")}
    shared = sorted(set(preds) & set(gts))
    if not shared:
        click.echo("no matching mask stems between directories", err=True)
        sys.exit(2)
    rows = []
    for stem in shared:
        pred = load_mask(preds[stem]).astype(np.float64)
        gt = load_mask(gts[stem])
        rows.append(evaluate_pair(stem, pred, gt))
    report = MetricReport(per_image=rows)
    f, e, s, m = report.means()
    for row in rows:
        click.echo(f"{row[0]}: F={row[1]:.4f} E={row[2]:.4f} "
                   f"S={row[3]:.4f} MAE={row[4]:.4f}")
    click.echo(f"means: F={f:.4f} E={e:.4f} S={s:.4f} MAE={m:.4f}")
    if out_csv:
        report.write_csv(out_csv)
    if out_json:
        with open(out_json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())


def _read_label_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    images, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, label = (part.strip() for part in line.split(",", 1))
            full = name if os.path.isabs(name) else os.path.join(base, name)
            import cv2

            img = cv2.imread(full, cv2.IMREAD_COLOR)
            if img is None:
                click.echo(f"cannot read {full}", err=True)
                sys.exit(2)
            images.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
            labels.append(label)
    return images, labels


@main.command("classify-scenes")
@click.option("--train-manifest", default=None, type=click.Path(exists=True),
              help="CSV of image,label rows used for training.")
@click.option("--test-manifest", required=True, type=click.Path(exists=True))
@click.option("--save-model", "save_model", default=None)
@click.option("--load-model", "load_model", default=None,
              type=click.Path(exists=True))
@click.option("--vocab-size", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-json", default=None)
def classify_scenes(train_manifest, test_manifest, save_model, load_model,
                    vocab_size, seed, out_json):
    """Train (or load) the BOVW scene classifier and report accuracy."""
    if load_model:
        model = SceneClassifier.load(load_model)
    elif train_manifest:
        train_images, train_labels = _read_label_manifest(train_manifest)
        model = SceneClassifier(vocab_size=vocab_size, seed=seed)
        model.fit(train_images, train_labels)
    else:
        click.echo("need --train-manifest or --load-model", err=True)
        sys.exit(2)
    if save_model:
        model.save(save_model)
    test_images, test_labels = _read_label_manifest(test_manifest)
    predicted = model.predict(test_images)
    acc = accuracy(predicted, test_labels)
    for name, pred, truth in zip(range(len(predicted)), predicted, test_labels):
        click.echo(f"{name}: predicted={pred} truth={truth}")
    click.echo(f"Acc={acc:.4f}")
    if out_json:
        with open(out_json, "w", encoding="utf-8") as fh:
            json.dump({"accuracy": acc,
                       "predictions": list(zip(predicted, test_labels))},
                      fh, sort_keys=True, indent=2)


@main.command("make-synthetic")
@click.option("--suite", required=True,
              type=click.Choice(["room", "shadow", "merge", "scenes"]))
@click.option("--out", "out_dir", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--count", default=None, type=int)
def make_synthetic(suite, out_dir, seed, count):
    """Generate a deterministic synthetic scene suite."""
    index = write_suite(suite, out_dir, seed=seed, count=count)
    click.echo(f"{suite}: {len(index['scenes'])} scene(s) -> {out_dir}")


if __name__ == "__main__":
    main()
