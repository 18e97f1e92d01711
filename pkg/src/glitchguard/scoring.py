"""Per-frame reconstruction errors, Regularity Scores, and their outputs.

A recording's clips are reconstructed by the trained model; each frame's
error is the mean squared reconstruction error of that frame, averaged
over every clip that contains it. The Regularity Score is the per-video
min-max-normalized inverse of that error, so it lives in [0, 1] and dips
where the recording stops looking like normal play. Curves are emitted as
CSV and as standalone SVG diagrams with anomalous segments shaded.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RegularityCurve:
    """Per-frame reconstruction error e and Regularity Score s for one video."""

    video_id: str
    e: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        if self.e.shape != self.s.shape or self.e.ndim != 1:
            raise ValueError("e and s must be 1-d arrays of equal length")

    def __len__(self) -> int:
        return self.e.shape[0]


@dataclass(frozen=True)
class AnomalySegment:
    """Maximal run of frames whose score stayed below the threshold."""

    start: int
    end: int  # inclusive
    min_rs: float
    threshold: float

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("segment end before start")


def frame_errors(model, seq, window: int = 10, stride: int = 1,
                 batch_size: int = 32) -> np.ndarray:
    """Per-frame reconstruction error, averaged over all covering clips.

    ``model`` is a ModelCheckpoint or any callable mapping a clip batch
    (B, W, 1, H, Wd) to reconstructions of the same shape (handy for test
    doubles). Raises if the stride leaves any frame uncovered.
    """
    from glitchguard import data as _data
    from glitchguard import model as _model

    reconstruct = model
    if isinstance(model, _model.ModelCheckpoint):
        reconstruct = _model.make_reconstructor(model)
    clips = _data.to_clips(seq, window=window, stride=stride)
    n = len(seq)
    total = np.zeros(n, dtype=np.float64)
    count = np.zeros(n, dtype=np.int64)
    for lo in range(0, len(clips), batch_size):
        chunk = clips[lo:lo + batch_size]
        batch = np.stack([c.tensor for c in chunk])
        recon = reconstruct(batch)
        if recon.shape != batch.shape:
            raise ValueError(f"reconstruction shape {recon.shape} != clip "
                             f"batch shape {batch.shape}")
        per_frame = np.mean((np.asarray(recon, dtype=np.float64) - batch) ** 2,
                            axis=(2, 3, 4))
        for clip, errs in zip(chunk, per_frame):
            total[clip.start_frame:clip.start_frame + window] += errs
            count[clip.start_frame:clip.start_frame + window] += 1
    if np.any(count == 0):
        first = int(np.argmax(count == 0))
        raise ValueError(f"stride {stride} leaves frame {first} outside every "
                         f"clip; per-frame errors would be undefined")
    return total / count


def regularity_score(e: np.ndarray) -> np.ndarray:
    """s(t) = 1 - (e(t) - min e) / (max e - min e); constant e gives s == 1."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.size < 1:
        raise ValueError("e must be a non-empty 1-d array")
    if not np.all(np.isfinite(e)):
        raise ValueError("non-finite reconstruction errors")
    lo, hi = float(e.min()), float(e.max())
    if hi == lo:
        return np.ones_like(e)
    return 1.0 - (e - lo) / (hi - lo)


def score_sequence(model, seq, window: int = 10, stride: int = 1,
                   batch_size: int = 32) -> RegularityCurve:
    e = frame_errors(model, seq, window=window, stride=stride,
                     batch_size=batch_size)
    return RegularityCurve(video_id=seq.video_id, e=e,
                           s=regularity_score(e))


def detect_anomalies(s: np.ndarray, threshold: float,
                     merge_gap: int = 2) -> list[AnomalySegment]:
    """Maximal runs with s < threshold, merging runs separated by <= merge_gap."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} must be in (0, 1)")
    below = np.asarray(s) < threshold
    runs = []
    start = None
    for idx, flag in enumerate(below):
        if flag and start is None:
            start = idx
        elif not flag and start is not None:
            runs.append((start, idx - 1))
            start = None
    if start is not None:
        runs.append((start, len(below) - 1))
    merged: list[tuple[int, int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 <= merge_gap:
            merged[-1] = (merged[-1][0], run[1])
        else:
            merged.append(run)
    return [AnomalySegment(start=a, end=b,
                           min_rs=float(np.min(s[a:b + 1])),
                           threshold=threshold)
            for a, b in merged]


def detection_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC of anomaly scores vs 0/1 labels (rank statistic, tie-averaged)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both positive and negative frames")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    idx = 0
    while idx < len(scores):
        j = idx
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[idx]:
            j += 1
        ranks[order[idx:j + 1]] = 0.5 * (idx + j) + 1.0
        idx = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


# --- curve files and plots ---------------------------------------------------

CURVE_HEADER = "frame_index,error,regularity"


def write_curve_csv(curve: RegularityCurve, path) -> None:
    """CSV with 9-significant-digit decimal values; one row per frame."""
    lines = [CURVE_HEADER]
    for idx in range(len(curve)):
        lines.append(f"{idx},{curve.e[idx]:.9g},{curve.s[idx]:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve_csv(path, video_id: str | None = None) -> RegularityCurve:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or text[0].strip() != CURVE_HEADER:
        found = text[0] if text else "(empty)"
        raise ValueError(f"{path}: bad curve header {found!r}")
    e, s = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields")
        try:
            idx, ev, sv = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed numeric field")
        if idx != len(e):
            raise ValueError(f"{path}:{lineno}: frame_index {idx} out of "
                             f"order (expected {len(e)})")
        e.append(ev)
        s.append(sv)
    if not e:
        raise ValueError(f"{path}: curve has no rows")
    return RegularityCurve(video_id=video_id or path.stem,
                           e=np.array(e), s=np.array(s))


_SVG_W, _SVG_H = 880, 320
_ML, _MR, _MT, _MB = 64, 16, 28, 46


def render_plot(curve: RegularityCurve, segments, path,
                title: str | None = None) -> None:
    """Standalone SVG 1.1 regularity diagram with shaded anomaly segments.

    One polyline vertex per frame; byte-identical output for identical input.
    """
    n = len(curve)
    plot_w = _SVG_W - _ML - _MR
    plot_h = _SVG_H - _MT - _MB

    def x_px(t: float) -> float:
        if n == 1:
            return _ML + plot_w / 2.0
        return _ML + t * plot_w / (n - 1)

    def y_px(v: float) -> float:
        return _MT + (1.0 - v) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">'
        f'{_escape(title or curve.video_id)}</text>',
    ]
    for seg in segments:
        x0, x1 = x_px(seg.start), x_px(seg.end)
        parts.append(f'<rect class="segment" x="{x0:.2f}" y="{_MT}" '
                     f'width="{max(x1 - x0, 1.0):.2f}" height="{plot_h}" '
                     f'fill="#e45756" fill-opacity="0.25"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_px(tick)
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_SVG_W - _MR}" '
                     f'y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{tick:g}</text>')
    if segments:
        thr_y = y_px(segments[0].threshold)
        parts.append(f'<line x1="{_ML}" y1="{thr_y:.2f}" '
                     f'x2="{_SVG_W - _MR}" y2="{thr_y:.2f}" stroke="#888888" '
                     f'stroke-width="1" stroke-dasharray="4,3"/>')
    points = " ".join(f"{x_px(t):.2f},{y_px(float(curve.s[t])):.2f}"
                      for t in range(n))
    parts.append(f'<polyline fill="none" stroke="#4c78a8" stroke-width="1.5" '
                 f'points="{points}"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_SVG_W - _MR}" '
                 f'y2="{_MT + plot_h}" stroke="#000000" stroke-width="1"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" '
                 f'y2="{_MT + plot_h}" stroke="#000000" stroke-width="1"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        t = int(round(frac * (n - 1)))
        parts.append(f'<text x="{x_px(t):.2f}" y="{_MT + plot_h + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{t}</text>')
    parts.append(f'<text x="{_ML + plot_w / 2:.1f}" y="{_SVG_H - 10}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">frame</text>')
    parts.append(f'<text x="16" y="{_MT + plot_h / 2:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12" transform="rotate(-90 16 '
                 f'{_MT + plot_h / 2:.1f})">regularity score</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))
