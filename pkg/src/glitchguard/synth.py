"""Deterministic gameplay-like frame renderer plus bug injectors.

Scenes are a textured background (gradient + a few low-frequency sine
waves) with soft-edged sprites moving along closed-form trajectories, so a
frame is a pure function of (SceneSpec, frame index). Injectors overwrite
rendered frames with four pixel-level bug classes and return exact
per-frame ground truth, which is what the acceptance analog needs.

Each category carries a characteristic temporal profile (onset window and
duration behavior; a boundary hole persists to the end of the recording,
a black screen is a short burst). That mirrors how real bug classes leave
recognizably distinct regularity-curve shapes, and it is what makes the
generated corpus clusterable by category.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from glitchguard.data import (
    CorpusManifest,
    FrameSequence,
    ManifestRow,
    save_manifest,
    split_corpus,
    write_frames,
)

CATEGORIES = ("black_screen", "boundary_hole", "screen_tear",
              "texture_corruption")
VOID_INTENSITY = 0.5

# onset/duration as fractions of sequence length; None duration = to the end
_PROFILES = {
    "black_screen": {"onset": (0.20, 0.35), "duration": (0.07, 0.12),
                     "region": None},
    "texture_corruption": {"onset": (0.35, 0.50), "duration": (0.22, 0.32),
                           "region": (0.30, 0.45)},
    "boundary_hole": {"onset": (0.50, 0.62), "duration": None,
                      "region": (0.42, 0.60)},
    "screen_tear": {"onset": (0.25, 0.45), "duration": (0.12, 0.20),
                    "region": None},
}


@dataclass(frozen=True)
class SpriteSpec:
    """One moving sprite: soft-edged rectangle or disc on a trajectory.

    Linear motion bounces off frame margins (triangle-wave reflection);
    sinusoidal motion oscillates around (x0, y0). Both are closed-form in
    the frame index.
    """

    shape: str  # "rectangle" | "disc"
    size: float  # radius / half-side in pixels
    intensity: float
    motion: str = "linear"  # "linear" | "sinusoidal"
    x0: float = 0.0
    y0: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    amp_x: float = 0.0
    amp_y: float = 0.0
    period: float = 60.0
    phase: float = 0.0

    def __post_init__(self):
        if self.shape not in ("rectangle", "disc"):
            raise ValueError(f"unknown sprite shape {self.shape!r}")
        if self.motion not in ("linear", "sinusoidal"):
            raise ValueError(f"unknown sprite motion {self.motion!r}")
        if self.size <= 0:
            raise ValueError("sprite size must be positive")

    def position(self, t: int, height: int, width: int) -> tuple[float, float]:
        if self.motion == "linear":
            return (_bounce(self.x0 + self.vx * t, self.size,
                            width - 1 - self.size),
                    _bounce(self.y0 + self.vy * t, self.size,
                            height - 1 - self.size))
        w = 2.0 * math.pi * t / self.period + self.phase
        return (self.x0 + self.amp_x * math.sin(w),
                self.y0 + self.amp_y * math.cos(w))


def _bounce(value: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return lo
    span = hi - lo
    m = (value - lo) % (2.0 * span)
    return lo + (m if m <= span else 2.0 * span - m)


@dataclass(frozen=True)
class SceneSpec:
    """Pure description of a scene; rendering depends only on (spec, t)."""

    seed: int
    height: int
    width: int
    bg_base: float = 0.08
    bg_gradient: tuple[float, float] = (0.20, 0.08)  # full-frame x/y ramp
    bg_noise_amp: float = 0.09
    bg_noise_waves: int = 5
    sprites: tuple[SpriteSpec, ...] = ()


def _background(spec: SceneSpec) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(spec.height), np.arange(spec.width),
                         indexing="ij")
    gx, gy = spec.bg_gradient
    img = (spec.bg_base
           + gx * jj / max(spec.width - 1, 1)
           + gy * ii / max(spec.height - 1, 1))
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.bg_noise_waves):
        fi, fj = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        img = img + (spec.bg_noise_amp / spec.bg_noise_waves) * np.sin(
            2.0 * math.pi * (fi * ii / spec.height + fj * jj / spec.width)
            + phase)
    return img


def render_frame(spec: SceneSpec, t: int) -> np.ndarray:
    """Render frame t: background composited with every sprite, in [0, 1]."""
    for sprite in spec.sprites:
        if 2 * sprite.size >= min(spec.height, spec.width):
            raise ValueError(f"sprite size {sprite.size} does not fit in a "
                             f"{spec.height}x{spec.width} frame")
    img = _background(spec)
    ii, jj = np.meshgrid(np.arange(spec.height, dtype=np.float64),
                         np.arange(spec.width, dtype=np.float64),
                         indexing="ij")
    for sprite in spec.sprites:
        cx, cy = sprite.position(t, spec.height, spec.width)
        if sprite.shape == "disc":
            dist = np.sqrt((ii - cy) ** 2 + (jj - cx) ** 2)
            cover = np.clip(sprite.size + 0.5 - dist, 0.0, 1.0)
        else:
            cover = (np.clip(sprite.size + 0.5 - np.abs(ii - cy), 0.0, 1.0)
                     * np.clip(sprite.size + 0.5 - np.abs(jj - cx), 0.0, 1.0))
        img = img * (1.0 - cover) + sprite.intensity * cover
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_normal(spec: SceneSpec, n_frames: int,
                  video_id: str | None = None) -> FrameSequence:
    """Render a clean sequence; bit-identical for identical inputs."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    frames = np.stack([render_frame(spec, t) for t in range(n_frames)])
    return FrameSequence(video_id=video_id or f"scene_{spec.seed:08d}",
                         frames=frames)


@dataclass(frozen=True)
class BugInjection:
    """One injected bug: category, onset, duration, optional region, seed."""

    category: str
    onset: int
    duration: int
    region: tuple[int, int, int, int] | None = None  # (y0, x0, h, w)
    noise_seed: int = 0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown bug category {self.category!r}; "
                             f"known: {CATEGORIES}")
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if self.onset < 0:
            raise ValueError("onset must be >= 0")


def _check_region(region, shape, category):
    if region is None:
        raise ValueError(f"{category} needs a region")
    y0, x0, h, w = region
    if h < 1 or w < 1 or y0 < 0 or x0 < 0 or y0 + h > shape[0] \
            or x0 + w > shape[1]:
        raise ValueError(f"region {region} outside {shape[0]}x{shape[1]} frame")
    return y0, x0, h, w


def inject_bug(seq: FrameSequence, injection: BugInjection):
    """Overwrite frames [onset, onset+duration) with the bug's pixel effect.

    Returns (buggy FrameSequence, per-frame 0/1 ground-truth labels).
    """
    n = len(seq)
    t0, d = injection.onset, injection.duration
    if t0 + d > n:
        raise ValueError(f"injection window [{t0}, {t0 + d}) exceeds sequence "
                         f"length {n}")
    frames = seq.frames.copy()
    shape = seq.frame_shape
    if injection.category == "black_screen":
        frames[t0:t0 + d] = 0.0
    elif injection.category == "texture_corruption":
        y0, x0, h, w = _check_region(injection.region, shape,
                                     injection.category)
        rng = np.random.default_rng(injection.noise_seed)
        frames[t0:t0 + d, y0:y0 + h, x0:x0 + w] = rng.uniform(
            size=(d, h, w)).astype(np.float32)
    elif injection.category == "boundary_hole":
        y0, x0, h, w = _check_region(injection.region, shape,
                                     injection.category)
        frames[t0:t0 + d, y0:y0 + h, x0:x0 + w] = VOID_INTENSITY
    elif injection.category == "screen_tear":
        rng = np.random.default_rng(injection.noise_seed)
        tear_row = int(rng.integers(shape[0] // 4, 3 * shape[0] // 4))
        offset = int(rng.integers(max(2, shape[1] // 6),
                                  max(3, shape[1] // 2)))
        frames[t0:t0 + d, tear_row:, :] = np.roll(
            frames[t0:t0 + d, tear_row:, :], offset, axis=2)
    labels = np.zeros(n, dtype=np.int8)
    labels[t0:t0 + d] = 1
    return FrameSequence(video_id=seq.video_id, frames=frames), labels


def random_scene(height: int, width: int, n_sprites: int, bg_seed: int,
                 sprite_rng: np.random.Generator) -> SceneSpec:
    """Scene with a corpus-shared background and per-video random sprites."""
    sprites = []
    margin = max(4.0, min(height, width) * 0.12)
    for _ in range(n_sprites):
        shape = "disc" if sprite_rng.random() < 0.5 else "rectangle"
        size = float(sprite_rng.uniform(2.0, min(height, width) * 0.12))
        # keep sprites clearly darker or brighter than the mid-gray background
        if sprite_rng.random() < 0.5:
            intensity = float(sprite_rng.uniform(0.02, 0.18))
        else:
            intensity = float(sprite_rng.uniform(0.82, 0.98))
        x0 = float(sprite_rng.uniform(margin, width - 1 - margin))
        y0 = float(sprite_rng.uniform(margin, height - 1 - margin))
        if sprite_rng.random() < 0.5:
            angle = sprite_rng.uniform(0.0, 2.0 * math.pi)
            speed = sprite_rng.uniform(0.25, 0.9)
            sprites.append(SpriteSpec(shape, size, intensity, "linear",
                                      x0=x0, y0=y0,
                                      vx=float(speed * math.cos(angle)),
                                      vy=float(speed * math.sin(angle))))
        else:
            sprites.append(SpriteSpec(
                shape, size, intensity, "sinusoidal", x0=x0, y0=y0,
                amp_x=float(sprite_rng.uniform(3.0, width * 0.25)),
                amp_y=float(sprite_rng.uniform(3.0, height * 0.25)),
                period=float(sprite_rng.uniform(40.0, 120.0)),
                phase=float(sprite_rng.uniform(0.0, 2.0 * math.pi))))
    return SceneSpec(seed=bg_seed, height=height, width=width,
                     sprites=tuple(sprites))


def make_labeled_corpus(specs, injections_per_category: int, out_dir, *,
                        categories=("black_screen", "texture_corruption",
                                    "boundary_hole"),
                        n_frames: int = 300, buggy_frames: int | None = None,
                        train_fraction: float = 0.7, sprites: int = 3,
                        seed: int = 0) -> CorpusManifest:
    """Render and write a labeled synthetic corpus; returns its manifest.

    Normal videos come from ``specs`` and are split train/test by video;
    each category gets ``injections_per_category`` buggy test videos whose
    scenes share the corpus background but carry fresh sprites. Frames go to
    ``out_dir/<video_id>/frame_NNNNNN.pgm`` and the manifest to
    ``out_dir/manifest.csv``.
    """
    if not specs:
        raise ValueError("make_labeled_corpus needs at least one scene spec")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buggy_frames = buggy_frames or n_frames
    base = specs[0]

    normal_rows = []
    for idx, spec in enumerate(specs):
        video_id = f"normal_{idx:03d}"
        seq = render_normal(spec, n_frames, video_id=video_id)
        write_frames(seq, out_dir / video_id)
        normal_rows.append(ManifestRow(video_id=video_id,
                                       path=str(out_dir / video_id),
                                       split="train", label="normal"))
    if len(normal_rows) >= 2:
        train, test = split_corpus(CorpusManifest(tuple(normal_rows)),
                                   train_fraction=train_fraction, seed=seed)
        rows = sorted(train.rows + test.rows, key=lambda r: r.video_id)
    else:
        rows = list(normal_rows)  # too few normals to hold any out

    video_counter = 0
    for category in categories:
        if category not in CATEGORIES:
            raise ValueError(f"unknown bug category {category!r}")
        for j in range(injections_per_category):
            rng = np.random.default_rng([seed, 1000 + video_counter])
            video_counter += 1
            scene = random_scene(base.height, base.width, sprites,
                                 bg_seed=base.seed, sprite_rng=rng)
            video_id = f"{category}_{j:03d}"
            seq = render_normal(scene, buggy_frames, video_id=video_id)
            injection = _draw_corpus_injection(category, buggy_frames,
                                               base.height, base.width, rng)
            buggy, labels = inject_bug(seq, injection)
            write_frames(buggy, out_dir / video_id)
            first, last = injection.onset, injection.onset + injection.duration - 1
            rows.append(ManifestRow(video_id=video_id,
                                    path=str(out_dir / video_id),
                                    split="test", label=category,
                                    bug_ranges=((first, last),)))
    manifest = CorpusManifest(tuple(rows))
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest


def _draw_corpus_injection(category: str, n_frames: int, height: int,
                           width: int, rng: np.random.Generator) -> BugInjection:
    profile = _PROFILES[category]
    lo, hi = profile["onset"]
    t0 = int(rng.uniform(lo, hi) * n_frames)
    if profile["duration"] is None:
        d = n_frames - t0
    else:
        dlo, dhi = profile["duration"]
        d = min(max(1, int(rng.uniform(dlo, dhi) * n_frames)), n_frames - t0)
    region = None
    if profile["region"] is not None:
        rlo, rhi = profile["region"]
        h = max(2, int(rng.uniform(rlo, rhi) * height))
        w = max(2, int(rng.uniform(rlo, rhi) * width))
        y0 = int(rng.integers(0, height - h + 1))
        x0 = int(rng.integers(0, width - w + 1))
        region = (y0, x0, h, w)
    return BugInjection(category, t0, d, region=region,
                        noise_seed=int(rng.integers(0, 2 ** 31)))
