"""Spatial partitioning by recursive binary median split.

The split axis is the largest axis-aligned extent; the median element is the
lower median, with ties broken by index so identical inputs always produce
identical partitions. Leaves come back in depth-first order (lower half
first), each holding at most the requested leaf size.
"""

from __future__ import annotations

from typing import List

import numpy as np


def median_split(points: np.ndarray, max_leaf_size: int) -> List[np.ndarray]:
    """Partition point indices into spatially local leaves of <= max_leaf_size.

    Returns a list of int64 index arrays; they are disjoint and cover
    range(len(points)) exactly.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    if points.shape[0] == 0:
        raise ValueError("cannot partition an empty point set")
    if max_leaf_size < 1:
        raise ValueError("max_leaf_size must be >= 1")

    leaves: List[np.ndarray] = []
    stack = [np.arange(points.shape[0], dtype=np.int64)]
    while stack:
        idx = stack.pop()
        if idx.size <= max_leaf_size:
            leaves.append(np.sort(idx))
            continue
        sub = points[idx]
        extent = sub.max(axis=0) - sub.min(axis=0)
        axis = int(np.argmax(extent))
        # Stable sort on the chosen coordinate keeps ties in index order;
        # the lower half takes ceil(n/2) elements.
        order = np.argsort(sub[:, axis], kind="stable")
        half = (idx.size + 1) // 2
        lower = idx[order[:half]]
        upper = idx[order[half:]]
        # Depth-first, lower half first: push upper so lower pops next.
        stack.append(upper)
        stack.append(lower)
    return leaves


def group_clusters(cluster_centroids: np.ndarray, group_size: int) -> List[np.ndarray]:
    """Group adjacent clusters by reapplying the median split to their centroids."""
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    return median_split(cluster_centroids, group_size)
