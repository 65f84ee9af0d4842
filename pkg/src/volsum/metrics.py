"""Saliency-map and segmentation quality metrics.

F- and E-measure binarize the prediction at the adaptive threshold
min(2 * mean, 1). The S-measure follows the structure-measure reference
(object term on foreground/background means, region term on the four
quadrants around the ground-truth centroid) including its empty- and
full-ground-truth fallbacks. BDE uses the crack convention for
boundaries: a pixel is boundary when its right or down neighbor carries
a different label.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyBoundary

_EPS = float(np.spacing(1.0))


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    return pred, gt.astype(bool)


def adaptive_threshold(pred: np.ndarray) -> float:
    return float(min(2.0 * pred.mean(), 1.0))


def f_measure(pred, gt, beta2: float = 0.3) -> float:
    """F-beta at the adaptive binarization, beta^2 = 0.3; 0 when P+R = 0."""
    pred, gt = _check_pair(pred, gt)
    binary = pred >= adaptive_threshold(pred)
    tp = float(np.sum(binary & gt))
    fp = float(np.sum(binary & ~gt))
    fn = float(np.sum(~binary & gt))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    if precision + recall == 0:
        return 0.0
    return (1 + beta2) * precision * recall / (beta2 * precision + recall)


def mae(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.abs(pred - gt.astype(np.float64))))


def _s_object_part(pred_part: np.ndarray) -> float:
    if pred_part.size == 0:
        return 0.0
    x = float(pred_part.mean())
    sigma = float(pred_part.std(ddof=1)) if pred_part.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = np.where(gt, pred, 0.0)
    bg = np.where(gt, 0.0, 1.0 - pred)
    u = float(gt.mean())
    return u * _s_object_part(fg[gt]) + (1.0 - u) * _s_object_part(bg[~gt])


def _gt_centroid(gt: np.ndarray):
    h, w = gt.shape
    total = gt.sum()
    if total == 0:
        return round(w / 2), round(h / 2)
    cols = np.arange(1, w + 1, dtype=np.float64)
    rows = np.arange(1, h + 1, dtype=np.float64)
    x = int(round(float((gt.sum(axis=0) @ cols) / total)))
    y = int(round(float((gt.sum(axis=1) @ rows) / total)))
    return x, y


def _quadrants(arr: np.ndarray, x: int, y: int):
    # 1-based centroid splits: (1:Y, 1:X), (1:Y, X+1:), (Y+1:, 1:X), rest.
    return arr[:y, :x], arr[:y, x:], arr[y:, :x], arr[y:, x:]


def _region_ssim(pred_q: np.ndarray, gt_q: np.ndarray) -> float:
    n = pred_q.size
    if n == 0:
        return 1.0
    x = float(pred_q.mean())
    y = float(gt_q.mean())
    if n > 1:
        sigma_x = float(pred_q.var(ddof=1))
        sigma_y = float(gt_q.var(ddof=1))
        sigma_xy = float(np.sum((pred_q - x) * (gt_q - y)) / (n - 1))
    else:
        sigma_x = sigma_y = sigma_xy = 0.0
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0.0 else 0.0


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    x, y = _gt_centroid(gt)
    h, w = gt.shape
    gt_f = gt.astype(np.float64)
    weights = [
        (x * y) / (w * h),
        ((w - x) * y) / (w * h),
        (x * (h - y)) / (w * h),
    ]
    weights.append(1.0 - sum(weights))
    p_quads = _quadrants(pred, x, y)
    g_quads = _quadrants(gt_f, x, y)
    return float(sum(wq * _region_ssim(pq, gq)
                     for wq, pq, gq in zip(weights, p_quads, g_quads)))


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    """Structure measure alpha * S_object + (1 - alpha) * S_region.

    Empty ground truth returns 1 - mean(pred); full ground truth returns
    mean(pred) (reference-toolbox conventions).
    """
    pred, gt = _check_pair(pred, gt)
    u = float(gt.mean())
    if u == 0.0:
        return 1.0 - float(pred.mean())
    if u == 1.0:
        return float(pred.mean())
    value = alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)
    return max(value, 0.0)


def e_measure(pred, gt) -> float:
    """Enhanced-alignment measure at the adaptive binarization.

    E = mean((1 + phi)^2 / 4) with phi the alignment of the bias-centered
    binary maps; all-empty / all-full ground truth uses the closed forms
    mean(1 - FM) and mean(FM).
    """
    pred, gt = _check_pair(pred, gt)
    fm = (pred >= adaptive_threshold(pred)).astype(np.float64)
    gt_f = gt.astype(np.float64)
    if gt_f.sum() == 0:
        enhanced = 1.0 - fm
    elif gt_f.sum() == gt_f.size:
        enhanced = fm
    else:
        a_fm = fm - fm.mean()
        a_gt = gt_f - gt_f.mean()
        align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + _EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def label_boundaries(labels: np.ndarray) -> np.ndarray:
    """Crack-convention boundary pixels (right/down transitions)."""
    labels = np.asarray(labels)
    b = np.zeros(labels.shape, dtype=bool)
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return b


def bde(seg: np.ndarray, gt_seg: np.ndarray) -> float:
    """Mean bidirectional boundary displacement (Euclidean, pixels)."""
    seg = np.asarray(seg)
    gt_seg = np.asarray(gt_seg)
    if seg.shape != gt_seg.shape:
        raise DimensionMismatch(f"seg {seg.shape} vs gt {gt_seg.shape}")
    b1 = np.argwhere(label_boundaries(seg))
    b2 = np.argwhere(label_boundaries(gt_seg))
    if len(b1) == 0 or len(b2) == 0:
        raise EmptyBoundary("a labeling has a single region")
    d12 = cKDTree(b2).query(b1)[0].mean()
    d21 = cKDTree(b1).query(b2)[0].mean()
    return float((d12 + d21) / 2.0)


def voi(seg: np.ndarray, gt_seg: np.ndarray) -> float:
    """Variation of information H(S|G) + H(G|S), natural log."""
    seg = np.asarray(seg).ravel()
    gt_seg = np.asarray(gt_seg).ravel()
    if seg.shape != gt_seg.shape:
        raise DimensionMismatch("labelings differ in size")
    n = seg.size
    _, si = np.unique(seg, return_inverse=True)
    _, gi = np.unique(gt_seg, return_inverse=True)
    ns = si.max() + 1
    ng = gi.max() + 1
    joint = np.zeros((ns, ng))
    np.add.at(joint, (si, gi), 1.0)
    joint /= n
    ps = joint.sum(axis=1)
    pg = joint.sum(axis=0)
    nz = joint > 0
    h_joint = -float(np.sum(joint[nz] * np.log(joint[nz])))
    h_s = -float(np.sum(ps[ps > 0] * np.log(ps[ps > 0])))
    h_g = -float(np.sum(pg[pg > 0] * np.log(pg[pg > 0])))
    return (h_joint - h_g) + (h_joint - h_s)


@dataclass(frozen=True)
class MetricReport:
    """Per-image saliency metrics plus dataset means."""

    per_image: list  # (id, f, e, s, mae)

    def means(self):
        if not self.per_image:
            return (math.nan,) * 4
        arr = np.array([row[1:] for row in self.per_image], dtype=np.float64)
        return tuple(float(v) for v in arr.mean(axis=0))

    def to_json(self) -> str:
        f, e, s, m = self.means()
        payload = {
            "per_image": [
                {"id": rid, "f_measure": fv, "e_measure": ev,
                 "s_measure": sv, "mae": mv}
                for rid, fv, ev, sv, mv in self.per_image
            ],
            "mean": {"f_measure": f, "e_measure": e, "s_measure": s, "mae": m},
            "thresholding": "adaptive_2x_mean",
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "F", "E", "S", "MAE"])
            for row in self.per_image:
                writer.writerow(list(row))
            writer.writerow(["mean", *self.means()])


def evaluate_pair(image_id: str, pred, gt) -> tuple:
    return (image_id, f_measure(pred, gt), e_measure(pred, gt),
            s_measure(pred, gt), mae(pred, gt))
