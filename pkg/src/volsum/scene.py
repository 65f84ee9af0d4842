"""Bag-of-visual-words scene classification.

Dense 16x16 gray patches on a stride-8 grid, mean-removed and unit-
normalized, quantized against a seeded k-means codebook; images become
L1-normalized word histograms classified one-vs-rest by closed-form
regularized least squares.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._kmeans import kmeans
from .errors import CorpusTooSmall, ImageTooSmall, SingularGram
from .features import rgb_to_gray

MODEL_MAGIC = b"VSSC"


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (V, D)
    patch: int
    stride: int

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


def extract_descriptors(rgb: np.ndarray, patch: int = 16, stride: int = 8) -> np.ndarray:
    """Dense normalized gray-patch descriptors, shape (n, patch*patch).

    Patches with no contrast become zero vectors.
    """
    gray = rgb_to_gray(rgb) / 255.0 if np.asarray(rgb).ndim == 3 else (
        np.asarray(rgb, dtype=np.float64) / 255.0)
    h, w = gray.shape
    if h < 2 * patch or w < 2 * patch:
        raise ImageTooSmall(f"{h}x{w} below {2 * patch}x{2 * patch}")
    rows = range(0, h - patch + 1, stride)
    cols = range(0, w - patch + 1, stride)
    out = np.empty((len(rows) * len(cols), patch * patch))
    idx = 0
    for r in rows:
        for c in cols:
            vec = gray[r:r + patch, c:c + patch].ravel().copy()
            vec -= vec.mean()
            norm = np.linalg.norm(vec)
            out[idx] = vec / norm if norm > 1e-12 else 0.0
            idx += 1
    return out


def descriptor_grid_count(h: int, w: int, patch: int = 16, stride: int = 8) -> int:
    return ((h - patch) // stride + 1) * ((w - patch) // stride + 1)


def build_codebook(corpus: np.ndarray, vocab_size: int, seed: int = 0,
                   patch: int = 16, stride: int = 8, max_iters: int = 50) -> Codebook:
    """Seeded k-means++ codebook over a descriptor corpus."""
    corpus = np.asarray(corpus, dtype=np.float64)
    if corpus.shape[0] < vocab_size:
        raise CorpusTooSmall(f"{corpus.shape[0]} descriptors < V={vocab_size}")
    centers, _, _ = kmeans(corpus, vocab_size, seed=seed, max_iters=max_iters)
    return Codebook(centroids=centers, patch=patch, stride=stride)


def assign_words(descriptors: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest-centroid indices (ties to the lowest index)."""
    d2 = (
        np.sum(descriptors ** 2, axis=1)[:, None]
        - 2.0 * descriptors @ codebook.centroids.T
        + np.sum(codebook.centroids ** 2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def bovw_histogram(rgb: np.ndarray, codebook: Codebook) -> np.ndarray:
    """L1-normalized word histogram over contrastful descriptors.

    Zero-norm (flat-patch) descriptors carry no texture and are dropped
    from the bag; an image whose descriptors are all zero has an empty
    bag and yields the uniform histogram.
    """
    desc = extract_descriptors(rgb, patch=codebook.patch, stride=codebook.stride)
    v = codebook.size
    keep = np.linalg.norm(desc, axis=1) > 0
    if not keep.any():
        return np.full(v, 1.0 / v)
    words = assign_words(desc[keep], codebook)
    hist = np.bincount(words, minlength=v).astype(np.float64)
    return hist / hist.sum()


class SceneClassifier(BaseEstimator, ClassifierMixin):
    """BOVW + one-vs-rest regularized least squares scene classifier."""

    def __init__(self, vocab_size: int = 200, patch: int = 16, stride: int = 8,
                 ridge: float = 1e-3, seed: int = 0, kmeans_iters: int = 50):
        self.vocab_size = vocab_size
        self.patch = patch
        self.stride = stride
        self.ridge = ridge
        self.seed = seed
        self.kmeans_iters = kmeans_iters

    def fit(self, images, labels):
        labels = list(labels)
        if len(images) != len(labels):
            raise ValueError("images and labels must align")
        self.classes_ = sorted(set(labels))
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        corpus = np.concatenate([
            extract_descriptors(img, self.patch, self.stride) for img in images
        ], axis=0)
        self.codebook_ = build_codebook(
            corpus, self.vocab_size, seed=self.seed,
            patch=self.patch, stride=self.stride, max_iters=self.kmeans_iters)
        hists = np.stack([bovw_histogram(img, self.codebook_) for img in images])
        targets = np.zeros((len(labels), len(self.classes_)))
        index = {c: i for i, c in enumerate(self.classes_)}
        for row, lab in enumerate(labels):
            targets[row, index[lab]] = 1.0
        gram = hists.T @ hists + self.ridge * np.eye(hists.shape[1])
        try:
            self.weights_ = np.linalg.solve(gram, hists.T @ targets)
        except np.linalg.LinAlgError as exc:
            raise SingularGram("regularized normal equations singular") from exc
        return self

    def decision_function(self, images) -> np.ndarray:
        hists = np.stack([bovw_histogram(img, self.codebook_) for img in images])
        return hists @ self.weights_

    def predict(self, images):
        scores = self.decision_function(images)
        return [self.classes_[int(np.argmax(row))] for row in scores]

    def score(self, images, labels) -> float:
        predicted = self.predict(images)
        truth = list(labels)
        return float(np.mean([p == t for p, t in zip(predicted, truth)]))

    def save(self, path) -> None:
        """Single binary blob: magic, JSON header, centroid + weight bytes."""
        header = json.dumps({
            "version": 1,
            "vocab_size": self.codebook_.size,
            "descriptor_dim": int(self.codebook_.centroids.shape[1]),
            "patch": self.codebook_.patch,
            "stride": self.codebook_.stride,
            "classes": self.classes_,
            "ridge": self.ridge,
        }, sort_keys=True).encode("utf-8")
        cents = np.ascontiguousarray(self.codebook_.centroids, dtype="<f8")
        weights = np.ascontiguousarray(self.weights_, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(cents.tobytes())
            fh.write(weights.tobytes())

    @classmethod
    def load(cls, path) -> "SceneClassifier":
        with open(path, "rb") as fh:
            if fh.read(4) != MODEL_MAGIC:
                raise ValueError(f"{path}: not a scene model")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            v = header["vocab_size"]
            d = header["descriptor_dim"]
            cents = np.frombuffer(fh.read(v * d * 8), dtype="<f8").reshape(v, d)
            n_classes = len(header["classes"])
            weights = np.frombuffer(fh.read(v * n_classes * 8),
                                    dtype="<f8").reshape(v, n_classes)
        model = cls(vocab_size=v, patch=header["patch"], stride=header["stride"],
                    ridge=header["ridge"])
        model.classes_ = list(header["classes"])
        model.codebook_ = Codebook(centroids=cents.copy(), patch=header["patch"],
                                   stride=header["stride"])
        model.weights_ = weights.copy()
        return model


def accuracy(predicted, truth) -> float:
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth) or not truth:
        raise ValueError("prediction/truth length mismatch")
    return float(np.mean([p == t for p, t in zip(predicted, truth)]))
