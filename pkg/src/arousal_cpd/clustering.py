"""Segment clustering and breakpoint pruning.

Segments found by GGS are clustered into ``k`` levels; a breakpoint survives
only if the segments on either side landed in different clusters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import InvalidKError
from .evaluation import Partition
from .ggs import BreakpointSet
from .timeseries import UniformSeries

FEATURE_MODES = ("mean", "mean-plus-shape")
SHAPE_POINTS = 16


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 3
    seed: int = 0
    max_iters: int = 100
    restarts: int = 8
    feature_mode: str = "mean"

    def __post_init__(self):
        if self.k < 1:
            raise InvalidKError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be positive")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")


def extract_features(series: UniformSeries, bps: BreakpointSet, mode: str = "mean") -> np.ndarray:
    """One row per segment: channel means, optionally followed by the resampled shape."""
    if bps.series_len != series.n_samples:
        raise ValueError(
            f"breakpoints are for length {bps.series_len}, series has {series.n_samples}"
        )
    if mode not in FEATURE_MODES:
        raise ValueError(f"feature mode must be one of {FEATURE_MODES}, got {mode!r}")
    rows = []
    for a, b in bps.segments():
        seg = series.data[a:b]
        row = [seg.mean(axis=0)]
        if mode == "mean-plus-shape":
            pos = np.linspace(0, b - a - 1, SHAPE_POINTS)
            grid = np.arange(b - a)
            row += [np.interp(pos, grid, col) for col in seg.T]
        rows.append(np.concatenate(row))
    return np.vstack(rows)


def _canonical(labels: np.ndarray, features: np.ndarray) -> np.ndarray:
    used = np.unique(labels)
    centroids = np.array([features[labels == u].mean(axis=0) for u in used])
    # lexsort keys are last-major, so reverse the columns to sort by the first coordinate
    order = np.lexsort(centroids.T[::-1])
    remap = np.empty(used.max() + 1, dtype=int)
    remap[used[order]] = np.arange(len(used))
    return remap[labels]


def kmeans(features: np.ndarray, config: ClusterConfig) -> np.ndarray:
    """k-means++ with restarts; labels are numbered by ascending centroid."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    n = len(features)
    if config.k > n:
        raise InvalidKError(f"k={config.k} exceeds the number of segments ({n})")
    if config.k == 1:
        return np.zeros(n, dtype=int)
    model = KMeans(
        n_clusters=config.k,
        init="k-means++",
        n_init=config.restarts,
        max_iter=config.max_iters,
        random_state=config.seed,
    )
    with warnings.catch_warnings():
        # fewer distinct points than k is legitimate here
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = model.fit_predict(features)
    return _canonical(labels, features)


def prune_breakpoints(bps: BreakpointSet, labels) -> BreakpointSet:
    labels = list(labels)
    if len(labels) != len(bps) + 1:
        raise ValueError(f"need {len(bps) + 1} labels, got {len(labels)}")
    kept = tuple(b for i, b in enumerate(bps) if labels[i] != labels[i + 1])
    return BreakpointSet(kept, bps.series_len)


def merge_labels(bps: BreakpointSet, labels) -> tuple[int, ...]:
    """Label of each merged run after pruning."""
    labels = list(labels)
    merged = [labels[0]]
    for lab in labels[1:]:
        if lab != merged[-1]:
            merged.append(lab)
    return tuple(int(v) for v in merged)


def cluster_partition(series: UniformSeries, bps: BreakpointSet, config: ClusterConfig) -> Partition:
    """Cluster the segments of ``series`` and merge same-cluster neighbours."""
    labels = kmeans(extract_features(series, bps, config.feature_mode), config)
    pruned = prune_breakpoints(bps, labels)
    return Partition.from_breakpoints(pruned.breakpoints, bps.series_len, merge_labels(bps, labels))
