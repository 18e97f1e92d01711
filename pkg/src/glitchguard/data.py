"""Frame ingestion, clip construction, corpus manifests, and splitting.

Recordings enter as directories of binary PGM frames (one file per frame,
``frame_NNNNNN.pgm``, 1-based). Pixels are scaled into [0, 1]; sliding
windows of W consecutive frames become the model's clips.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FRAME_NAME_RE = re.compile(r"^frame_(\d+)\.pgm$")
MANIFEST_HEADER = ["video_id", "path", "split", "label", "bug_ranges"]


@dataclass(frozen=True)
class FrameSequence:
    """Ordered grayscale frames of one recording, values in [0, 1]."""

    video_id: str
    frames: np.ndarray  # (N, H, W) float32
    source_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be (N, H, W), got "
                             f"{self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass(frozen=True)
class Clip:
    """W consecutive frames from one sequence, shaped (W, 1, H, Wd)."""

    start_frame: int
    tensor: np.ndarray


@dataclass(frozen=True)
class ManifestRow:
    video_id: str
    path: str
    split: str
    label: str
    bug_ranges: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class CorpusManifest:
    rows: tuple[ManifestRow, ...]

    def __post_init__(self):
        ids = [r.video_id for r in self.rows]
        if len(set(ids)) != len(ids):
            dupes = sorted({v for v in ids if ids.count(v) > 1})
            raise ValueError(f"duplicate video_ids in manifest: {dupes}")

    def __len__(self) -> int:
        return len(self.rows)

    def subset(self, predicate) -> "CorpusManifest":
        return CorpusManifest(tuple(r for r in self.rows if predicate(r)))

    def row(self, video_id: str) -> ManifestRow:
        for r in self.rows:
            if r.video_id == video_id:
                return r
        raise KeyError(video_id)


# --- PGM files ---------------------------------------------------------------

def _pgm_tokens(data: bytes, path, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping comments.

    Returns (tokens, offset of the byte right after the single whitespace
    that terminates the last token), per the netpbm header convention.
    """
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise ValueError(f"{path}: malformed PGM header (unexpected end)")
        ch = data[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in b" \t\r\n#":
                pos += 1
            tokens.append(data[start:pos])
            if len(tokens) == count:
                if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
                    raise ValueError(f"{path}: malformed PGM header (missing "
                                     f"whitespace after maxval)")
                pos += 1
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) into a uint8 (H, W) array."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, path, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError(f"{path}: malformed PGM header (non-numeric field)")
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}, expected 255")
    if width < 1 or height < 1:
        raise ValueError(f"{path}: invalid PGM size {width}x{height}")
    pixels = data[offset:offset + width * height]
    if len(pixels) != width * height:
        raise ValueError(f"{path}: truncated PGM data ({len(pixels)} of "
                         f"{width * height} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def write_pgm(path, frame: np.ndarray) -> None:
    """Quantize a float [0, 1] frame to 8 bits and write binary PGM."""
    if frame.ndim != 2:
        raise ValueError(f"frame must be 2-d, got shape {frame.shape}")
    quant = np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0),
                    0, 255).astype(np.uint8)
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quant.tobytes())


def load_frames(directory) -> FrameSequence:
    """Load all frame_NNNNNN.pgm files, ordered by numeric index."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    indexed = []
    for name in os.listdir(directory):
        m = FRAME_NAME_RE.match(name)
        if m:
            indexed.append((int(m.group(1)), name))
    if not indexed:
        raise ValueError(f"{directory}: no frame_NNNNNN.pgm files found")
    indexed.sort()
    frames = []
    paths = []
    shape = None
    for _, name in indexed:
        path = directory / name
        img = read_pgm(path)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(f"{path}: frame size {img.shape} differs from "
                             f"first frame {shape}")
        frames.append(img)
        paths.append(str(path))
    stack = np.stack(frames).astype(np.float32) / 255.0
    return FrameSequence(video_id=directory.name, frames=stack,
                         source_paths=tuple(paths))


def write_frames(seq: FrameSequence, directory) -> None:
    """Write a sequence as frame_NNNNNN.pgm files (1-based, zero-padded)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for idx in range(len(seq)):
        write_pgm(directory / f"frame_{idx + 1:06d}.pgm", seq.frames[idx])


# --- clips -------------------------------------------------------------------

def clip_count(n_frames: int, window: int, stride: int) -> int:
    return (n_frames - window) // stride + 1


def to_clips(seq: FrameSequence, window: int = 10, stride: int = 1) -> list[Clip]:
    """Sliding-window clips; clip k starts at frame k*stride."""
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    n = len(seq)
    if n < window:
        raise ValueError(f"sequence '{seq.video_id}' has {n} frames; at least "
                         f"{window} are required for one clip")
    clips = []
    for k in range(clip_count(n, window, stride)):
        start = k * stride
        tensor = seq.frames[start:start + window][:, None, :, :]
        clips.append(Clip(start_frame=start, tensor=tensor))
    return clips


# --- manifest ----------------------------------------------------------------

def _format_ranges(ranges) -> str:
    return ";".join(f"{a}-{b}" for a, b in ranges)


def _parse_ranges(text: str, where: str) -> tuple[tuple[int, int], ...]:
    text = text.strip()
    if not text:
        return ()
    out = []
    for part in text.split(";"):
        m = re.match(r"^(\d+)-(\d+)$", part.strip())
        if not m:
            raise ValueError(f"{where}: malformed bug_ranges entry {part!r}")
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ValueError(f"{where}: bug range {part!r} ends before start")
        out.append((a, b))
    return tuple(out)


def save_manifest(manifest: CorpusManifest, path) -> None:
    """Write manifest CSV; frame-directory paths are stored relative to it."""
    path = Path(path)
    base = path.resolve().parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for row in manifest.rows:
            rel = os.path.relpath(Path(row.path).resolve(), base)
            writer.writerow([row.video_id, rel, row.split, row.label,
                             _format_ranges(row.bug_ranges)])


def load_manifest(path, check_dirs: bool = True) -> CorpusManifest:
    """Read manifest CSV; relative paths resolve against the manifest's dir."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.resolve().parent
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path}: bad manifest header {header}, expected "
                             f"{MANIFEST_HEADER}")
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(MANIFEST_HEADER):
                raise ValueError(f"{path}:{lineno}: expected "
                                 f"{len(MANIFEST_HEADER)} fields, got "
                                 f"{len(record)}")
            video_id, rel, split, label, ranges = record
            full = Path(rel)
            if not full.is_absolute():
                full = base / full
            rows.append(ManifestRow(video_id=video_id, path=str(full),
                                    split=split, label=label,
                                    bug_ranges=_parse_ranges(
                                        ranges, f"{path}:{lineno}")))
    manifest = CorpusManifest(tuple(rows))
    if check_dirs:
        missing = [r.path for r in manifest.rows if not Path(r.path).is_dir()]
        if missing:
            raise FileNotFoundError(f"manifest {path} references missing frame "
                                    f"directories: {missing[:3]}")
    return manifest


def split_corpus(manifest: CorpusManifest, train_fraction: float = 0.7,
                 seed: int = 0):
    """Seeded by-video split; returns (train manifest, test manifest).

    Video ids are shuffled deterministically and the first
    ceil(n * train_fraction) go to train. Whole videos only, never frames.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction {train_fraction} must be in (0, 1)")
    if len(manifest) < 2:
        raise ValueError("split_corpus needs at least 2 videos")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(manifest))
    # snap away float fuzz (e.g. 10 * 0.7 == 7.000000000000001) before ceil
    n_train = math.ceil(round(len(manifest) * train_fraction, 9))
    train_rows, test_rows = [], []
    for pos, idx in enumerate(order):
        row = manifest.rows[idx]
        if pos < n_train:
            train_rows.append(replace(row, split="train"))
        else:
            test_rows.append(replace(row, split="test"))
    return CorpusManifest(tuple(train_rows)), CorpusManifest(tuple(test_rows))
