"""Region merging over a superpixel adjacency graph.

Two adjacent regions merge when both are planar (vMF concentration and
planarity score above thresholds) and both their texture distance and the
weighted color/position/direction distance fall below thresholds. Merge
commits run smallest-weighted-distance first with lowest-id tie-breaks,
refitting the merged region's model after every commit, until no adjacent
pair qualifies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow, EmptySegment, VolsumError
from .features import (
    DEFAULT_GLCM_OFFSETS,
    FeatureVolume,
    GlcmFeatures,
    glcm_features,
)
from .mixture import (
    FisherGaussianMixture,
    fit_em,
    mixture_kl_gaussian,
    mixture_kl_vmf,
)

LAB_COLOR_SCALE = 100.0  # L-range normalizer for the color distance


@dataclass(frozen=True)
class MergeThresholds:
    """Planarity gates and distance thresholds of the merge predicate."""

    c_th: float = 0.05
    k_th: float = 5.0
    d_th: float = 1.5
    delta: float = 0.35
    beta1: float = 0.4
    beta2: float = 0.6
    beta3: float = 0.5

    def __post_init__(self):
        if min(self.c_th, self.k_th, self.d_th, self.delta,
               self.beta1, self.beta2, self.beta3) <= 0:
            raise ValueError("all thresholds and weights must be positive")
        if abs(self.beta1 + self.beta2 - 1.0) > 1e-9:
            raise ValueError("beta1 + beta2 must equal 1")


@dataclass(frozen=True)
class RegionModel:
    mixture: FisherGaussianMixture | None
    mean_lab: np.ndarray
    glcm: GlcmFeatures | None
    curvature: float        # planarity in [0, 1]
    pixel_count: int
    mean_depth: float


@dataclass
class RegionAdjacencyGraph:
    """Undirected adjacency between region ids sharing a 4-connected border."""

    neighbors: dict[int, set[int]] = field(default_factory=dict)

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "RegionAdjacencyGraph":
        neighbors: dict[int, set[int]] = {
            int(r): set() for r in np.unique(labels)}
        right = labels[:, :-1] != labels[:, 1:]
        down = labels[:-1, :] != labels[1:, :]
        for a, b in zip(labels[:, :-1][right], labels[:, 1:][right]):
            neighbors[int(a)].add(int(b))
            neighbors[int(b)].add(int(a))
        for a, b in zip(labels[:-1, :][down], labels[1:, :][down]):
            neighbors[int(a)].add(int(b))
            neighbors[int(b)].add(int(a))
        return cls(neighbors=neighbors)

    def edges(self):
        seen = []
        for i in sorted(self.neighbors):
            for j in sorted(self.neighbors[i]):
                if i < j:
                    seen.append((i, j))
        return seen

    def contract(self, keep: int, drop: int) -> None:
        merged = (self.neighbors[keep] | self.neighbors[drop]) - {keep, drop}
        for n in self.neighbors.pop(drop):
            self.neighbors[n].discard(drop)
        for n in list(self.neighbors[keep]):
            self.neighbors[n].discard(keep)
        self.neighbors[keep] = merged
        for n in merged:
            self.neighbors[n].add(keep)


def curvature(positions: np.ndarray) -> float:
    """Planarity score 1 - 3*l0/(l0+l1+l2) from position PCA eigenvalues.

    1.0 for coplanar (or degenerate/coincident) points, -> 0 for isotropic
    scatter.
    """
    pts = np.asarray(positions, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError("positions must be (n, 3) with n >= 1")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    eigvals = np.linalg.eigvalsh(cov)
    total = float(eigvals.sum())
    if total <= 0:
        return 1.0  # all points coincident
    return float(1.0 - 3.0 * max(eigvals[0], 0.0) / total)


@dataclass(frozen=True)
class TextureStandardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_models(cls, models) -> "TextureStandardizer":
        rows = [m.glcm.as_array() for m in models if m is not None and m.glcm is not None]
        if not rows:
            return cls(mean=np.zeros(6), std=np.ones(6))
        stacked = np.stack(rows)
        std = stacked.std(axis=0)
        return cls(mean=stacked.mean(axis=0), std=np.where(std > 0, std, 1.0))


def texture_distance(i: GlcmFeatures, j: GlcmFeatures,
                     standardizer: TextureStandardizer | None = None) -> float:
    """Euclidean distance between z-scored texture vectors."""
    a, b = i.as_array(), j.as_array()
    if standardizer is not None:
        a = (a - standardizer.mean) / standardizer.std
        b = (b - standardizer.mean) / standardizer.std
    return float(np.linalg.norm(a - b))


def weighted_distance(i: RegionModel, j: RegionModel,
                      t: MergeThresholds) -> float:
    """(b1*Dc + b2*Dde + b3*Dsn) / (b1 + b2 + b3).

    Dc: LAB mean distance over 100; Dde / Dsn: symmetrized KL between the
    Gaussian / vMF parts of the region mixtures.
    """
    if i.mixture is None or j.mixture is None:
        raise ValueError("both region mixtures must be fitted")
    d_c = float(np.linalg.norm(i.mean_lab - j.mean_lab)) / LAB_COLOR_SCALE
    d_de = 0.5 * (mixture_kl_gaussian(i.mixture, j.mixture)
                  + mixture_kl_gaussian(j.mixture, i.mixture))
    d_sn = 0.5 * (mixture_kl_vmf(i.mixture, j.mixture)
                  + mixture_kl_vmf(j.mixture, i.mixture))
    return (t.beta1 * d_c + t.beta2 * d_de + t.beta3 * d_sn) / (
        t.beta1 + t.beta2 + t.beta3)


def region_kappa(model: RegionModel) -> float:
    if model.mixture is None:
        return 0.0
    return float(model.mixture.dominant().kappa)


def _clauses(i: RegionModel, j: RegionModel, t: MergeThresholds,
             standardizer: TextureStandardizer | None):
    if i.mixture is None or j.mixture is None or i.glcm is None or j.glcm is None:
        return None
    return {
        "kappa": min(region_kappa(i), region_kappa(j)),
        "c_u": min(i.curvature, j.curvature),
        "d_t": texture_distance(i.glcm, j.glcm, standardizer),
        "d_w": weighted_distance(i, j, t),
    }


def similar(i: RegionModel, j: RegionModel, t: MergeThresholds,
            standardizer: TextureStandardizer | None = None) -> bool:
    """Merge predicate: both regions planar AND close in texture and d_w.

    All comparisons are strict; the planarity pair (kappa, c_u) must clear
    its thresholds on *both* regions.
    """
    c = _clauses(i, j, t, standardizer)
    if c is None:
        return False
    return (c["kappa"] > t.k_th and c["c_u"] > t.c_th
            and c["d_t"] < t.d_th and c["d_w"] < t.delta)


def model_from_mask(fv: FeatureVolume, mask: np.ndarray,
                    em_components: int = 1, seed: int = 0,
                    glcm_levels: int = 16,
                    glcm_offsets=DEFAULT_GLCM_OFFSETS) -> RegionModel:
    """Fit a RegionModel on the pixels selected by ``mask``."""
    count = int(mask.sum())
    if count == 0:
        raise EmptySegment("region mask selects no pixels")
    mean_lab = fv.lab[mask].mean(axis=0)
    valid = mask & fv.valid
    positions = fv.position[valid]
    normals = fv.normal[valid]
    mean_depth = float(positions[:, 2].mean()) if len(positions) else 0.0
    cu = curvature(positions) if len(positions) >= 3 else 1.0
    rows = np.any(mask, axis=1).nonzero()[0]
    cols = np.any(mask, axis=0).nonzero()[0]
    window = fv.gray[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    sub_mask = mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    try:
        glcm = glcm_features(window, levels=glcm_levels, offsets=glcm_offsets,
                             mask=sub_mask)
    except DegenerateWindow:
        glcm = None
    mixture = None
    if len(positions) >= 4 * em_components:
        try:
            mixture, _ = fit_em(positions, normals,
                                n_components=em_components, seed=seed)
        except VolsumError:
            mixture = None
    return RegionModel(mixture=mixture, mean_lab=mean_lab, glcm=glcm,
                       curvature=cu, pixel_count=count, mean_depth=mean_depth)


def build_region_models(fv: FeatureVolume, labels: np.ndarray,
                        em_components: int = 1, seed: int = 0,
                        glcm_levels: int = 16,
                        glcm_offsets=DEFAULT_GLCM_OFFSETS) -> list[RegionModel]:
    n = int(labels.max()) + 1
    return [
        model_from_mask(fv, labels == rid, em_components=em_components,
                        seed=seed, glcm_levels=glcm_levels,
                        glcm_offsets=glcm_offsets)
        for rid in range(n)
    ]


def merge_regions(labels: np.ndarray, models: list[RegionModel],
                  t: MergeThresholds, refit, max_merges: int | None = None):
    """Agglomerate similar adjacent regions.

    ``refit(mask) -> RegionModel`` rebuilds the model of a merged region.
    Returns ``(labels, models, audit)`` with labels compacted to [0, N'),
    models indexed accordingly, and one audit row per committed merge.
    Texture standardization statistics are frozen from the initial region
    set so the predicate stays stationary across commits.
    """
    labels = np.asarray(labels, dtype=np.int64).copy()
    models_by_id = {rid: models[rid] for rid in range(len(models))}
    rag = RegionAdjacencyGraph.from_labels(labels)
    standardizer = TextureStandardizer.from_models(models)
    ineligible: set[tuple[int, int]] = set()
    audit = []
    budget = max_merges if max_merges is not None else len(models)

    step = 0
    while step < budget:
        best = None
        for i, j in rag.edges():
            if (i, j) in ineligible:
                continue
            c = _clauses(models_by_id[i], models_by_id[j], t, standardizer)
            if c is None:
                continue
            if (c["kappa"] > t.k_th and c["c_u"] > t.c_th
                    and c["d_t"] < t.d_th and c["d_w"] < t.delta):
                key = (c["d_w"], i, j)
                if best is None or key < best[0]:
                    best = (key, i, j, c)
        if best is None:
            break
        _, i, j, c = best
        mask = (labels == i) | (labels == j)
        try:
            new_model = refit(mask)
        except VolsumError:
            ineligible.add((i, j))
            continue
        expected = models_by_id[i].pixel_count + models_by_id[j].pixel_count
        if new_model.pixel_count != expected:
            raise RuntimeError("merge lost pixels")  # internal invariant
        labels[labels == j] = i
        models_by_id[i] = new_model
        del models_by_id[j]
        rag.contract(i, j)
        # The refit changed i's model: stale ineligibility no longer applies.
        ineligible = {p for p in ineligible if i not in p and j not in p}
        audit.append({
            "step": step, "region_i": i, "region_j": j,
            "d_w": c["d_w"], "d_t": c["d_t"],
            "kappa": c["kappa"], "c_u": c["c_u"],
            "merged_into": i,
        })
        step += 1

    old_ids = sorted(models_by_id)
    lut = np.full(int(labels.max()) + 1, -1, dtype=np.int64)
    for new, old in enumerate(old_ids):
        lut[old] = new
    compact = lut[labels]
    merged_models = [models_by_id[old] for old in old_ids]
    return compact.astype(np.int32), merged_models, audit


def write_merge_log(path, audit) -> None:
    fields = ["step", "region_i", "region_j", "d_w", "d_t",
              "kappa", "c_u", "merged_into"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in audit:
            writer.writerow(row)
