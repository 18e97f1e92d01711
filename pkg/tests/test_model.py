import numpy as np
import pytest

from glitchguard.model import (
    AutoencoderConfig,
    BadMagicError,
    CheckpointVersionError,
    ModelCheckpoint,
    TrainingHyper,
    TruncatedCheckpointError,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    loss_and_grads,
    forward_loss,
    param_shapes,
    save_checkpoint,
    train,
    _lstm_forward_sequence,
    _lstm_params,
)
from glitchguard.numerics import convlstm_cell_step, gradient_check


def micro_config(seed=0):
    return AutoencoderConfig(8, 8, window=3, conv1_channels=2, conv1_kernel=3,
                             conv1_stride=2, conv2_channels=2, conv2_kernel=3,
                             conv2_stride=1, lstm_hidden=(2, 2, 2), seed=seed)


def tiny_config(seed=0):
    # 16x16 frames: conv 5/2 -> 6, conv 3/1 -> 4; hidden 8/4/8
    return AutoencoderConfig(16, 16, window=5, conv1_channels=6,
                             conv1_kernel=5, conv1_stride=2, conv2_channels=4,
                             conv2_kernel=3, conv2_stride=1,
                             lstm_hidden=(8, 4, 8), seed=seed)


def rand_clips(config, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(n, config.window, 1, config.frame_height,
                             config.frame_width)).astype(np.float32)


# --- configuration and initialization ----------------------------------------

def test_default_config_mirrors_decoder_exactly_at_32():
    cfg = AutoencoderConfig(32, 32)
    plan = cfg.plan()
    assert plan["enc1"] == (6, 6) and plan["enc2"] == (1, 1)
    assert plan["dec1_spec"].transpose_out_size(1) == 6
    assert plan["dec2_spec"].transpose_out_size(6) == 32


def test_config_underflow_names_layer():
    with pytest.raises(ValueError, match="enc1"):
        AutoencoderConfig(8, 8, conv1_kernel=11, conv1_stride=4)


def test_init_same_seed_is_bit_identical():
    a, b = init_params(micro_config(seed=5)), init_params(micro_config(seed=5))
    assert a.equals(b)


def test_init_different_seeds_differ():
    a, b = init_params(micro_config(seed=1)), init_params(micro_config(seed=2))
    assert not a.equals(b)


def test_init_biases_zero_except_forget_gates():
    ck = init_params(micro_config())
    for name, value in ck.params.items():
        if ".b_f" in name:
            np.testing.assert_array_equal(value, np.ones_like(value))
        elif name.endswith(".b") or ".b_" in name:
            assert not value.any(), name


# --- forward -------------------------------------------------------------------

def test_forward_shape_and_range():
    cfg = AutoencoderConfig(32, 32, window=10, conv1_channels=4,
                            conv2_channels=4, lstm_hidden=(4, 2, 4))
    ck = init_params(cfg)
    clip = rand_clips(cfg, 1, seed=3)[0]
    recon = forward(ck, clip)
    assert recon.shape == clip.shape
    assert float(recon.min()) >= 0.0 and float(recon.max()) <= 1.0


def test_forward_deterministic():
    cfg = micro_config(seed=9)
    ck = init_params(cfg)
    clip = rand_clips(cfg, 1, seed=4)[0]
    np.testing.assert_array_equal(forward(ck, clip), forward(ck, clip))


def test_forward_rejects_wrong_shape():
    ck = init_params(micro_config())
    with pytest.raises(ValueError, match="clip shape"):
        forward(ck, np.zeros((3, 1, 9, 9), dtype=np.float32))


def test_fused_lstm_layer_matches_cell_step_loop():
    cfg = micro_config(seed=11)
    ck = init_params(cfg)
    lp = _lstm_params({k: v.astype(np.float64)
                       for k, v in ck.params.items()}, 1)
    rng = np.random.default_rng(12)
    xs = rng.uniform(size=(2, 4, 2, 3, 3))
    hs, _ = _lstm_forward_sequence(lp, xs)
    h = np.zeros((2, 2, 3, 3))
    c = np.zeros((2, 2, 3, 3))
    for t in range(4):
        h, c = convlstm_cell_step(xs[:, t], h, c, lp)
        np.testing.assert_allclose(hs[:, t], h, atol=1e-12)


def test_end_to_end_gradients_match_finite_differences():
    cfg = micro_config(seed=13)
    ck = init_params(cfg)
    params = {k: v.astype(np.float64) for k, v in ck.params.items()}
    clips = np.random.default_rng(14).uniform(size=(2, 3, 1, 8, 8))
    err = gradient_check(
        lambda p: loss_and_grads(p, cfg, clips), params, eps=1e-5,
        loss_fn=lambda p: forward_loss(p, cfg, clips))
    assert err < 1e-3


# --- training --------------------------------------------------------------------

def test_train_zero_steps_returns_checkpoint_unchanged():
    cfg = micro_config()
    ck = init_params(cfg)
    out, history = train(ck, rand_clips(cfg, 4), TrainingHyper(max_steps=0))
    assert history == []
    assert out.equals(ck)


def test_train_is_deterministic():
    cfg = micro_config(seed=21)
    clips = rand_clips(cfg, 10, seed=22)
    hyper = TrainingHyper(max_steps=8, batch_size=3)
    out1, hist1 = train(init_params(cfg), clips, hyper, seed=5)
    out2, hist2 = train(init_params(cfg), clips, hyper, seed=5)
    assert hist1 == hist2
    assert out1.equals(out2)


def test_train_reduces_loss_on_constant_scene():
    cfg = tiny_config(seed=31)
    rng = np.random.default_rng(32)
    frame = rng.uniform(0.2, 0.8, size=(16, 16)).astype(np.float32)
    clip = np.broadcast_to(frame, (cfg.window, 1, 16, 16)).copy()[None]
    clips = np.repeat(clip, 50, axis=0)
    out, history = train(init_params(cfg), clips,
                         TrainingHyper(max_steps=200), seed=33)
    assert history[-1] <= 0.5 * history[0]
    assert out.steps == 200


def test_train_rejects_empty_dataset():
    ck = init_params(micro_config())
    with pytest.raises(ValueError, match="empty"):
        train(ck, [], TrainingHyper(max_steps=1))


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainingHyper(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainingHyper(batch_size=0)


# --- checkpoint files ---------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    cfg = micro_config(seed=41)
    ck = init_params(cfg)
    out, _ = train(ck, rand_clips(cfg, 4, seed=42),
                   TrainingHyper(max_steps=2), seed=43)
    path = tmp_path / "model.ckpt"
    save_checkpoint(out, path)
    loaded = load_checkpoint(path)
    assert loaded.equals(out)
    # a second save of the loaded checkpoint is byte-identical
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    ck = init_params(micro_config())
    save_checkpoint(ck, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(BadMagicError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "trunc.ckpt"
    save_checkpoint(init_params(micro_config()), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 37])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "ver.ckpt"
    save_checkpoint(init_params(micro_config()), path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_param_order_is_fixed_by_config():
    names = list(param_shapes(micro_config()))
    assert names[0] == "enc1.w" and names[-1] == "dec2.b"
    assert "lstm1.wx_i" in names and "lstm3.b_g" in names
    assert names == list(param_shapes(micro_config()))


def test_batched_forward_matches_single():
    cfg = micro_config(seed=51)
    ck = init_params(cfg)
    clips = rand_clips(cfg, 3, seed=52)
    batched = forward_batch(ck, clips)
    for idx in range(3):
        np.testing.assert_allclose(batched[idx], forward(ck, clips[idx]),
                                   atol=1e-6)
