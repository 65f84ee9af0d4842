"""Seeded Lloyd k-means with k-means++ initialization.

Shared by the mixture EM initializer and the visual-word codebook. Kept
deliberately small and deterministic: fixed RNG, first-index tie-breaks,
empty clusters re-seeded on the point farthest from its centroid.
"""

from __future__ import annotations

import numpy as np


def _pairwise_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 via the expansion; clip guards tiny negatives.
    d2 = (
        np.sum(points ** 2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers ** 2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of k seed points chosen by D^2 sampling."""
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining mass identical to a chosen seed: pick first unchosen.
            remaining = np.setdiff1d(np.arange(n), chosen[:i], assume_unique=False)
            chosen[i] = remaining[0]
        else:
            r = rng.random() * total
            chosen[i] = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        d2 = np.minimum(d2, np.sum((points - points[chosen[i]]) ** 2, axis=1))
    return chosen


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 50,
           tol: float = 0.0):
    """Lloyd iterations; returns (centers, labels, inertia_path).

    ``inertia_path`` holds the objective after each assignment step and is
    non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)
    centers = points[kmeans_pp_init(points, k, rng)].copy()
    labels = np.zeros(n, dtype=np.int64)
    inertia_path = []
    for _ in range(max_iters):
        d2 = _pairwise_sq(points, centers)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        inertia_path.append(inertia)
        new_centers = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(n), labels]))
                new_centers[c] = points[far]
        if np.allclose(new_centers, centers, rtol=0.0, atol=tol):
            centers = new_centers
            break
        centers = new_centers
    d2 = _pairwise_sq(points, centers)
    labels = np.argmin(d2, axis=1)
    inertia_path.append(float(d2[np.arange(n), labels].sum()))
    return centers, labels, inertia_path
