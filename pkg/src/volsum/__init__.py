"""Volumetric-saliency guided RGB-D image summarization."""

from .errors import VolsumError
from .features import FeatureExtractor, FeatureVolume, GlcmFeatures
from .mixture import (
    FisherGaussianComponent,
    FisherGaussianEM,
    FisherGaussianMixture,
    fit_em,
    gaussian_log_pdf,
    kl_gaussian,
    kl_vmf,
    vmf_log_pdf,
)
from .pipeline import PipelineResult, RunConfig, process_image, run_pipeline
from .region_merge import (
    MergeThresholds,
    RegionAdjacencyGraph,
    RegionModel,
    curvature,
    merge_regions,
    similar,
    texture_distance,
    weighted_distance,
)
from .rgbd import CameraIntrinsics, GroundTruth, RgbdImage, load_dataset, load_rgbd
from .saliency import (
    GeometricClassifier,
    OrientedBoundingBox,
    SaliencySummary,
    SegmentClass,
    classify_segment,
    convex_hull,
    generate_mask,
    obb_from_hull,
    saliency_scores,
    summarize,
    volume,
)
from .scene import SceneClassifier, bovw_histogram, build_codebook, extract_descriptors
from .superpixel import SlicParams, SlicSegmenter, pixel_cluster_distance, slic_segment

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "FeatureExtractor", "FeatureVolume",
    "FisherGaussianComponent", "FisherGaussianEM", "FisherGaussianMixture",
    "GeometricClassifier", "GlcmFeatures", "GroundTruth", "MergeThresholds",
    "OrientedBoundingBox", "PipelineResult", "RegionAdjacencyGraph",
    "RegionModel", "RgbdImage", "RunConfig", "SaliencySummary",
    "SceneClassifier", "SegmentClass", "SlicParams", "SlicSegmenter",
    "VolsumError", "bovw_histogram", "build_codebook", "classify_segment",
    "convex_hull", "curvature", "extract_descriptors", "fit_em",
    "gaussian_log_pdf", "generate_mask", "kl_gaussian", "kl_vmf",
    "load_dataset", "load_rgbd", "merge_regions", "obb_from_hull",
    "pixel_cluster_distance", "process_image", "run_pipeline",
    "saliency_scores", "similar", "slic_segment", "summarize",
    "texture_distance", "vmf_log_pdf", "volume", "weighted_distance",
]
