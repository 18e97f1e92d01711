import numpy as np
import pytest

from glitchguard.data import load_frames, load_manifest
from glitchguard.synth import (
    BugInjection,
    SceneSpec,
    SpriteSpec,
    inject_bug,
    make_labeled_corpus,
    random_scene,
    render_normal,
)


def scene(seed=0, sprites=(), **kw):
    return SceneSpec(seed=seed, height=24, width=24, sprites=sprites, **kw)


def moving_scene(seed=0, speed=0.4):
    sprite = SpriteSpec("disc", size=3.0, intensity=0.9, motion="linear",
                        x0=8.0, y0=8.0, vx=speed, vy=speed / 2)
    return scene(seed=seed, sprites=(sprite,))


# --- rendering ----------------------------------------------------------------

def test_render_deterministic():
    seq1 = render_normal(moving_scene(), 12)
    seq2 = render_normal(moving_scene(), 12)
    np.testing.assert_array_equal(seq1.frames, seq2.frames)


def test_static_sprite_gives_identical_frames():
    sprite = SpriteSpec("rectangle", size=3.0, intensity=0.1, motion="linear",
                        x0=10.0, y0=10.0, vx=0.0, vy=0.0)
    seq = render_normal(scene(sprites=(sprite,)), 8)
    for t in range(1, 8):
        np.testing.assert_array_equal(seq.frames[t], seq.frames[0])


def test_slow_sprite_moves_smoothly():
    seq = render_normal(moving_scene(speed=0.4), 40)
    diffs = np.abs(np.diff(seq.frames, axis=0)).mean(axis=(1, 2))
    assert float(diffs.max()) < 0.05


def test_pixels_stay_in_unit_range():
    seq = render_normal(moving_scene(), 20)
    assert float(seq.frames.min()) >= 0.0
    assert float(seq.frames.max()) <= 1.0


def test_oversized_sprite_rejected():
    sprite = SpriteSpec("disc", size=20.0, intensity=0.5, x0=12.0, y0=12.0)
    with pytest.raises(ValueError, match="sprite size"):
        render_normal(scene(sprites=(sprite,)), 2)


def test_random_scene_shares_background_across_sprite_draws():
    a = random_scene(24, 24, 2, bg_seed=7,
                     sprite_rng=np.random.default_rng(1))
    b = random_scene(24, 24, 2, bg_seed=7,
                     sprite_rng=np.random.default_rng(2))
    assert a.seed == b.seed
    assert a.sprites != b.sprites
    bg_a = render_normal(SceneSpec(a.seed, 24, 24), 1)
    bg_b = render_normal(SceneSpec(b.seed, 24, 24), 1)
    np.testing.assert_array_equal(bg_a.frames, bg_b.frames)


# --- injectors -----------------------------------------------------------------

def test_black_screen_definition():
    seq = render_normal(moving_scene(), 12)
    buggy, labels = inject_bug(seq, BugInjection("black_screen", 5, 3))
    assert labels.tolist() == [0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0]
    assert not buggy.frames[5:8].any()
    np.testing.assert_array_equal(buggy.frames[:5], seq.frames[:5])
    np.testing.assert_array_equal(buggy.frames[8:], seq.frames[8:])


def test_full_length_injection_labels_everything():
    seq = render_normal(moving_scene(), 6)
    _, labels = inject_bug(seq, BugInjection("black_screen", 0, 6))
    assert labels.tolist() == [1] * 6


def test_texture_corruption_changes_region():
    seq = render_normal(moving_scene(seed=3), 10)
    injection = BugInjection("texture_corruption", 2, 5,
                             region=(4, 4, 10, 10), noise_seed=9)
    buggy, labels = inject_bug(seq, injection)
    region_clean = seq.frames[2:7, 4:14, 4:14]
    region_buggy = buggy.frames[2:7, 4:14, 4:14]
    assert float(np.abs(region_buggy - region_clean).mean()) > 0.1
    # untouched outside the region and outside the window
    np.testing.assert_array_equal(buggy.frames[:2], seq.frames[:2])
    np.testing.assert_array_equal(buggy.frames[2:7, :4], seq.frames[2:7, :4])
    assert labels.sum() == 5


def test_boundary_hole_is_constant_void():
    seq = render_normal(moving_scene(seed=4), 10)
    buggy, _ = inject_bug(seq, BugInjection("boundary_hole", 3, 7,
                                            region=(6, 6, 8, 8)))
    assert np.all(buggy.frames[3:, 6:14, 6:14] == 0.5)


def test_screen_tear_shifts_rows_below_line():
    seq = render_normal(moving_scene(seed=5), 10)
    buggy, labels = inject_bug(seq, BugInjection("screen_tear", 4, 3,
                                                 noise_seed=11))
    changed = np.any(buggy.frames != seq.frames, axis=(1, 2))
    assert changed.tolist() == labels.astype(bool).tolist()
    # rows strictly above every possible tear line are untouched
    np.testing.assert_array_equal(buggy.frames[:, :6], seq.frames[:, :6])


def test_modified_iff_labeled():
    for category, region in (("black_screen", None),
                             ("boundary_hole", (5, 5, 9, 9)),
                             ("screen_tear", None)):
        seq = render_normal(moving_scene(seed=6), 14)
        buggy, labels = inject_bug(
            seq, BugInjection(category, 4, 6, region=region, noise_seed=2))
        changed = np.any(buggy.frames != seq.frames, axis=(1, 2))
        assert changed.tolist() == labels.astype(bool).tolist(), category


def test_injection_window_must_fit():
    seq = render_normal(moving_scene(), 8)
    with pytest.raises(ValueError, match="exceeds sequence"):
        inject_bug(seq, BugInjection("black_screen", 6, 5))


def test_region_must_fit_frame():
    seq = render_normal(moving_scene(), 8)
    with pytest.raises(ValueError, match="outside"):
        inject_bug(seq, BugInjection("boundary_hole", 0, 2,
                                     region=(20, 20, 10, 10)))


def test_unknown_category_rejected():
    with pytest.raises(ValueError, match="unknown bug category"):
        BugInjection("lag_spike", 0, 1)


# --- corpus -------------------------------------------------------------------

def test_make_labeled_corpus_counts_and_roundtrip(tmp_path):
    specs = [random_scene(24, 24, 2, bg_seed=1,
                          sprite_rng=np.random.default_rng(i))
             for i in range(4)]
    manifest = make_labeled_corpus(specs, 2, tmp_path / "corpus",
                                   n_frames=30, buggy_frames=24, seed=5)
    assert len(manifest) == 4 + 3 * 2
    normals = [r for r in manifest.rows if r.label == "normal"]
    buggy = [r for r in manifest.rows if r.label != "normal"]
    assert len(normals) == 4 and len(buggy) == 6
    assert all(r.bug_ranges for r in buggy)
    assert all(not r.bug_ranges for r in normals)
    assert all(r.split == "test" for r in buggy)
    assert sum(r.split == "train" for r in normals) == 3  # ceil(4 * 0.7)

    reloaded = load_manifest(tmp_path / "corpus" / "manifest.csv")
    assert {r.video_id for r in reloaded.rows} == \
        {r.video_id for r in manifest.rows}
    row = next(r for r in manifest.rows if r.label == "normal")
    seq = load_frames(row.path)
    rendered = render_normal(specs[int(row.video_id.split("_")[1])], 30)
    np.testing.assert_allclose(
        seq.frames, np.rint(rendered.frames * 255.0) / 255.0, atol=1e-7)


def test_corpus_is_reproducible(tmp_path):
    specs = [random_scene(16, 16, 1, bg_seed=2,
                          sprite_rng=np.random.default_rng(0))]
    make_labeled_corpus(specs, 1, tmp_path / "a", n_frames=20,
                        categories=("black_screen",), seed=9)
    make_labeled_corpus(specs, 1, tmp_path / "b", n_frames=20,
                        categories=("black_screen",), seed=9)
    a = (tmp_path / "a" / "black_screen_000" / "frame_000005.pgm").read_bytes()
    b = (tmp_path / "b" / "black_screen_000" / "frame_000005.pgm").read_bytes()
    assert a == b
