"""Curve featurization, DBSCAN, semi-supervised labeling, homogeneity.

Regularity curves are resampled to a fixed length and extended with a few
summary statistics; the resulting descriptors are clustered with a
deterministic DBSCAN (points visited in index order, cluster ids assigned
in discovery order, Euclidean distance, neighborhoods include the point
itself). Clusters get bug-category names by comparing members against
pre-labeled exemplar descriptors, and the clustering is evaluated with the
homogeneity score 1 - H(C|K)/H(C).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from glitchguard.scoring import RegularityCurve, detect_anomalies

SUMMARY_FEATURES = 5
_SEGMENT_THRESHOLD = 0.5  # fixed: descriptors must not depend on run config


@dataclass(frozen=True)
class CurveDescriptor:
    """Fixed-length featurization of one regularity curve."""

    video_id: str
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ClusterResult:
    """Per-curve cluster ids (-1 noise), assigned categories, parameters."""

    cluster_ids: np.ndarray
    categories: dict[int, str]
    eps: float
    min_pts: int


@dataclass(frozen=True)
class LabelAssignment:
    """Ground-truth class labels and cluster assignments over the same items."""

    classes: tuple
    clusters: tuple

    def __post_init__(self):
        if len(self.classes) != len(self.clusters):
            raise ValueError(f"label vectors differ in length: "
                             f"{len(self.classes)} vs {len(self.clusters)}")
        if not self.classes:
            raise ValueError("label vectors are empty")


def featurize(curve: RegularityCurve, length: int = 128) -> CurveDescriptor:
    """Resample the score curve over normalized time and append summaries.

    The descriptor is [resampled s (length), min s, mean s, fraction of
    frames below 0.5, anomaly segment count, longest segment / video length].
    """
    n = len(curve)
    if n < 2:
        raise ValueError(f"curve '{curve.video_id}' has {n} frames; featurize "
                         f"needs at least 2")
    s = np.asarray(curve.s, dtype=np.float64)
    resampled = np.interp(np.linspace(0.0, n - 1, length), np.arange(n), s)
    segments = detect_anomalies(s, _SEGMENT_THRESHOLD)
    longest = max((seg.end - seg.start + 1 for seg in segments), default=0)
    summary = np.array([
        float(s.min()),
        float(s.mean()),
        float(np.mean(s < _SEGMENT_THRESHOLD)),
        float(len(segments)),
        longest / n,
    ])
    return CurveDescriptor(video_id=curve.video_id,
                           values=np.concatenate([resampled, summary]))


def _as_matrix(points) -> np.ndarray:
    if isinstance(points, np.ndarray) and points.ndim == 2:
        return np.asarray(points, dtype=np.float64)
    rows = [p.values if isinstance(p, CurveDescriptor) else np.asarray(p)
            for p in points]
    dims = {r.shape for r in rows}
    if len(dims) > 1:
        raise ValueError(f"points have mixed dimensions: {sorted(dims)}")
    return np.asarray(rows, dtype=np.float64)


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Deterministic DBSCAN; returns cluster ids, -1 for noise.

    Points are visited in index order and cluster ids are assigned in
    discovery order. A point is core when its eps-ball (inclusive, and
    counting the point itself) holds at least min_pts points.
    """
    if eps <= 0:
        raise ValueError(f"eps {eps} must be > 0")
    if min_pts < 1:
        raise ValueError(f"min_pts {min_pts} must be >= 1")
    x = _as_matrix(points)
    n = x.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    within = sq <= eps * eps
    neighbor_lists = [np.flatnonzero(within[i]) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbor_lists])
    labels = np.full(n, -1, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    next_id = 0
    for start in range(n):
        if visited[start] or not core[start]:
            continue
        visited[start] = True
        labels[start] = next_id
        queue = list(neighbor_lists[start])
        qi = 0
        while qi < len(queue):
            p = int(queue[qi])
            qi += 1
            if labels[p] == -1:
                labels[p] = next_id
            if not visited[p] and core[p]:
                visited[p] = True
                queue.extend(int(q) for q in neighbor_lists[p]
                             if labels[q] == -1 or (core[q] and not visited[q]))
        next_id += 1
    return labels


def default_eps(points, k: int = 4) -> float:
    """Median distance to the k-th nearest neighbor across all points."""
    x = _as_matrix(points)
    n = x.shape[0]
    if n < 2:
        return 1.0
    sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    dists = np.sqrt(np.maximum(sq, 0.0))
    kth = min(k, n - 1)
    sorted_d = np.sort(dists, axis=1)
    value = float(np.median(sorted_d[:, kth]))
    return max(value, 1e-12)


def label_clusters(result: ClusterResult,
                   descriptors: Sequence[CurveDescriptor],
                   exemplars: Sequence[tuple[CurveDescriptor, str]]
                   ) -> dict[int, str]:
    """Name each cluster after its closest pre-labeled exemplar.

    Closest means the exemplar minimizing the median Euclidean distance from
    cluster members to it; exact ties go to the lexicographically smallest
    category name. Noise points stay unlabeled.
    """
    if not exemplars:
        raise ValueError("label_clusters needs at least one exemplar")
    x = _as_matrix(descriptors)
    ids = np.asarray(result.cluster_ids)
    if len(ids) != x.shape[0]:
        raise ValueError("descriptor count does not match cluster ids")
    assigned: dict[int, str] = {}
    for cluster in sorted(set(int(c) for c in ids) - {-1}):
        members = x[ids == cluster]
        best = None
        for exemplar, category in exemplars:
            med = float(np.median(np.linalg.norm(
                members - exemplar.values[None, :], axis=1)))
            if best is None or (med, category) < best:
                best = (med, category)
        assigned[cluster] = best[1]
    return assigned


def cluster_curves(descriptors: Sequence[CurveDescriptor],
                   exemplars: Sequence[tuple[CurveDescriptor, str]],
                   eps: float | None = None,
                   min_pts: int = 3) -> ClusterResult:
    """DBSCAN over descriptors with the default-eps heuristic, then label."""
    chosen = eps if eps else default_eps(descriptors)
    ids = dbscan(descriptors, chosen, min_pts)
    result = ClusterResult(cluster_ids=ids, categories={}, eps=chosen,
                           min_pts=min_pts)
    categories = label_clusters(result, descriptors, exemplars)
    return ClusterResult(cluster_ids=ids, categories=categories, eps=chosen,
                         min_pts=min_pts)


def homogeneity(assignment: LabelAssignment) -> float:
    """1 - H(C|K)/H(C) from empirical counts; 1.0 when H(C) is zero.

    Noise items (cluster id -1) count as their own singleton clusters, which
    are pure by construction.
    """
    classes = list(assignment.classes)
    clusters = list(assignment.clusters)
    fresh = max((int(c) for c in clusters if c != -1), default=-1) + 1
    normalized = []
    for c in clusters:
        if c == -1:
            normalized.append(fresh)
            fresh += 1
        else:
            normalized.append(c)
    n = len(classes)
    class_counts = Counter(classes)
    h_c = -sum((cnt / n) * math.log(cnt / n) for cnt in class_counts.values())
    if h_c == 0.0:
        return 1.0
    joint = Counter(zip(classes, normalized))
    cluster_counts = Counter(normalized)
    h_ck = -sum((cnt / n) * math.log(cnt / cluster_counts[k])
                for (_, k), cnt in joint.items())
    return min(max(1.0 - h_ck / h_c, 0.0), 1.0)


# --- cluster report ----------------------------------------------------------

REPORT_HEADER = "video_id,cluster_id,assigned_category,true_label"


def write_cluster_report(path, rows, score: float) -> None:
    """rows: (video_id, cluster_id, assigned_category, true_label) tuples."""
    lines = [REPORT_HEADER]
    for video_id, cluster_id, assigned, true_label in rows:
        lines.append(f"{video_id},{cluster_id},{assigned},{true_label}")
    lines.append(f"# homogeneity={score:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_cluster_report(path):
    """Returns (rows, homogeneity from the footer comment)."""
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or text[0].strip() != REPORT_HEADER:
        raise ValueError(f"{path}: bad report header")
    rows = []
    score = None
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            if "homogeneity=" in line:
                score = float(line.split("homogeneity=", 1)[1])
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields")
        rows.append((parts[0], int(parts[1]), parts[2], parts[3]))
    if score is None:
        raise ValueError(f"{path}: missing homogeneity footer")
    return rows, score
