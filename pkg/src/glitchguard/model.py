"""Spatiotemporal autoencoder: conv encoder, 3-layer ConvLSTM stack, deconv decoder.

Each frame of a clip is spatially encoded (two strided convs with tanh),
the encoded frame sequence runs through three stacked ConvLSTM layers, and
each step's top hidden state is spatially decoded back to a frame (two
transposed convs, tanh between them, sigmoid at the end so outputs stay in
[0, 1]). Training minimizes MSE reconstruction loss with Adam and is fully
deterministic given (seed, dataset, hyper).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from glitchguard.numerics import (
    GATES,
    AdamConfig,
    AdamState,
    ConvLstmParams,
    ConvSpec,
    NumericError,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    mse_loss,
    sigmoid,
)

CHECKPOINT_MAGIC = b"GBLD"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Base class for checkpoint file problems."""


class BadMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


@dataclass(frozen=True)
class AutoencoderConfig:
    """Architecture of the autoencoder; decoder geometry is derived by mirroring.

    Defaults follow the usual reconstruction stack for this kind of model:
    11x11 stride-4 and 5x5 stride-2 encoder convs, ConvLSTM hidden widths
    (64, 32, 64). Every width is configurable so desk-scale variants are
    first class. The decoder's transposed convs get output_padding chosen so
    the reconstruction shape equals the input shape exactly.
    """

    frame_height: int
    frame_width: int
    window: int = 10
    conv1_channels: int = 128
    conv1_kernel: int = 11
    conv1_stride: int = 4
    conv1_padding: int = 0
    conv2_channels: int = 64
    conv2_kernel: int = 5
    conv2_stride: int = 2
    conv2_padding: int = 0
    lstm_hidden: tuple[int, int, int] = (64, 32, 64)
    lstm_kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window {self.window} < 1")
        if self.frame_height < 1 or self.frame_width < 1:
            raise ValueError("frame size must be positive")
        if len(self.lstm_hidden) != 3:
            raise ValueError("lstm_hidden must have exactly 3 layer widths")
        self.plan()  # fail fast on impossible shape arithmetic

    def enc1_spec(self) -> ConvSpec:
        return ConvSpec(1, self.conv1_channels, self.conv1_kernel,
                        self.conv1_stride, self.conv1_padding)

    def enc2_spec(self) -> ConvSpec:
        return ConvSpec(self.conv1_channels, self.conv2_channels,
                        self.conv2_kernel, self.conv2_stride,
                        self.conv2_padding)

    def plan(self) -> dict:
        """Spatial sizes at each stage plus mirrored decoder specs.

        Raises ValueError naming the layer whose shape arithmetic underflows.
        """
        h0, w0 = self.frame_height, self.frame_width
        e1, e2 = self.enc1_spec(), self.enc2_spec()
        h1, w1 = e1.out_size(h0), e1.out_size(w0)
        if h1 < 1 or w1 < 1:
            raise ValueError(f"layer enc1: output {h1}x{w1} underflows for "
                             f"frames {h0}x{w0}")
        h2, w2 = e2.out_size(h1), e2.out_size(w1)
        if h2 < 1 or w2 < 1:
            raise ValueError(f"layer enc2: output {h2}x{w2} underflows for "
                             f"input {h1}x{w1}")
        d1 = _mirror(e2, self.lstm_hidden[2], self.conv1_channels,
                     (h2, w2), (h1, w1), "dec1")
        d2 = _mirror(e1, self.conv1_channels, 1, (h1, w1), (h0, w0), "dec2")
        return {"frame": (h0, w0), "enc1": (h1, w1), "enc2": (h2, w2),
                "dec1_spec": d1, "dec2_spec": d2}

    def dec1_spec(self) -> ConvSpec:
        return self.plan()["dec1_spec"]

    def dec2_spec(self) -> ConvSpec:
        return self.plan()["dec2_spec"]


def _mirror(enc: ConvSpec, in_ch: int, out_ch: int, in_hw, target_hw,
            name: str) -> ConvSpec:
    """Transposed-conv spec inverting ``enc``'s geometry onto target_hw."""
    ops = []
    for size, target in zip(in_hw, target_hw):
        base = (size - 1) * enc.stride - 2 * enc.padding + enc.kernel_size
        ops.append(target - base)
    if ops[0] != ops[1]:
        raise ValueError(f"layer {name}: height/width need different "
                         f"output_padding ({ops[0]} vs {ops[1]}); choose frame "
                         f"sizes with matching stride remainders")
    op = ops[0]
    if not 0 <= op < enc.stride:
        raise ValueError(f"layer {name}: cannot mirror stride {enc.stride} "
                         f"conv onto target size (needs output_padding {op})")
    return ConvSpec(in_ch, out_ch, enc.kernel_size, enc.stride, enc.padding,
                    output_padding=op)


@dataclass(frozen=True)
class TrainingHyper:
    learning_rate: float = 1e-3
    batch_size: int = 4
    max_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate {self.learning_rate} must be > 0")
        if self.batch_size < 1:
            raise ValueError(f"batch_size {self.batch_size} must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2,
                          self.eps, self.weight_decay)


@dataclass(eq=False)
class ModelCheckpoint:
    """Config plus all parameters and training metadata; serializable."""

    config: AutoencoderConfig
    params: dict[str, np.ndarray]
    steps: int = 0
    final_loss: float = 0.0
    train_seed: int = 0
    version: int = CHECKPOINT_VERSION

    def equals(self, other: "ModelCheckpoint") -> bool:
        if (self.config != other.config or self.steps != other.steps
                or self.train_seed != other.train_seed
                or self.version != other.version
                or not _float_equal(self.final_loss, other.final_loss)):
            return False
        if list(self.params) != list(other.params):
            return False
        return all(np.array_equal(self.params[k], other.params[k])
                   for k in self.params)


def _float_equal(a: float, b: float) -> bool:
    return (a == b) or (math.isnan(a) and math.isnan(b))


def param_shapes(config: AutoencoderConfig) -> dict[str, tuple]:
    """Canonical parameter names and shapes, in fixed serialization order."""
    plan = config.plan()
    e1, e2 = config.enc1_spec(), config.enc2_spec()
    d1, d2 = plan["dec1_spec"], plan["dec2_spec"]
    shapes: dict[str, tuple] = {
        "enc1.w": (e1.out_channels, e1.in_channels, e1.kernel_size,
                   e1.kernel_size),
        "enc1.b": (e1.out_channels,),
        "enc2.w": (e2.out_channels, e2.in_channels, e2.kernel_size,
                   e2.kernel_size),
        "enc2.b": (e2.out_channels,),
    }
    k = config.lstm_kernel
    in_ch = config.conv2_channels
    for layer, hidden in enumerate(config.lstm_hidden, start=1):
        for gate in GATES:
            shapes[f"lstm{layer}.wx_{gate}"] = (hidden, in_ch, k, k)
            shapes[f"lstm{layer}.wh_{gate}"] = (hidden, hidden, k, k)
            shapes[f"lstm{layer}.b_{gate}"] = (hidden,)
        in_ch = hidden
    shapes["dec1.w"] = (d1.in_channels, d1.out_channels, d1.kernel_size,
                        d1.kernel_size)
    shapes["dec1.b"] = (d1.out_channels,)
    shapes["dec2.w"] = (d2.in_channels, d2.out_channels, d2.kernel_size,
                        d2.kernel_size)
    shapes["dec2.b"] = (d2.out_channels,)
    return shapes


def init_params(config: AutoencoderConfig) -> ModelCheckpoint:
    """Glorot-uniform weights, zero biases, forget-gate biases 1.0; seeded."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b") or ".b_" in name:
            bias = np.zeros(shape, dtype=np.float32)
            if ".b_f" in name:
                bias[:] = 1.0
            params[name] = bias
        else:
            k2 = shape[2] * shape[3] if len(shape) == 4 else 1
            fan_in, fan_out = shape[1] * k2, shape[0] * k2
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit,
                                       size=shape).astype(np.float32)
    return ModelCheckpoint(config=config, params=params,
                           final_loss=float("nan"))


def _lstm_params(params: dict, layer: int) -> ConvLstmParams:
    pre = f"lstm{layer}"
    return ConvLstmParams(
        wx={g: params[f"{pre}.wx_{g}"] for g in GATES},
        wh={g: params[f"{pre}.wh_{g}"] for g in GATES},
        b={g: params[f"{pre}.b_{g}"] for g in GATES},
        hidden_channels=params[f"{pre}.b_i"].shape[0],
    )


def _lstm_forward_sequence(lp: ConvLstmParams, xs: np.ndarray):
    """Run one ConvLSTM layer over (B, T, C, h, w); returns (hs, cache).

    The input-to-state convolutions of all steps are batched into a single
    call; only the state-to-state convolution stays inside the time loop.
    """
    b, t, c, h, w = xs.shape
    ch = lp.hidden_channels
    wx_cat = np.concatenate([lp.wx[g] for g in GATES], axis=0)
    wh_cat = np.concatenate([lp.wh[g] for g in GATES], axis=0)
    b_cat = np.concatenate([lp.b[g] for g in GATES])
    xspec = ConvSpec(c, 4 * ch, lp.kernel_size, 1, lp.kernel_size // 2)
    hspec = ConvSpec(ch, 4 * ch, lp.kernel_size, 1, lp.kernel_size // 2)
    ax = conv2d_forward(xs.reshape(b * t, c, h, w), xspec, wx_cat, b_cat)
    ax = ax.reshape(b, t, 4 * ch, h, w)
    hs = np.zeros((b, t, ch, h, w), dtype=xs.dtype)
    gates = np.zeros((b, t, 4 * ch, h, w), dtype=xs.dtype)
    cells = np.zeros((b, t, ch, h, w), dtype=xs.dtype)
    h_prev = np.zeros((b, ch, h, w), dtype=xs.dtype)
    c_prev = np.zeros_like(h_prev)
    h_prevs = np.zeros_like(hs)
    c_prevs = np.zeros_like(cells)
    for step in range(t):
        h_prevs[:, step] = h_prev
        c_prevs[:, step] = c_prev
        a = ax[:, step] + conv2d_forward(h_prev, hspec, wh_cat)
        i = sigmoid(a[:, 0 * ch:1 * ch])
        f = sigmoid(a[:, 1 * ch:2 * ch])
        o = sigmoid(a[:, 2 * ch:3 * ch])
        g = np.tanh(a[:, 3 * ch:4 * ch])
        gates[:, step] = np.concatenate([i, f, o, g], axis=1)
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        cells[:, step] = c_prev
        hs[:, step] = h_prev
    cache = {"xs": xs, "gates": gates, "cells": cells, "h_prevs": h_prevs,
             "c_prevs": c_prevs, "wx_cat": wx_cat, "wh_cat": wh_cat,
             "xspec": xspec, "hspec": hspec, "ch": ch}
    return hs, cache


def _lstm_backward_sequence(cache: dict, grad_hs: np.ndarray):
    """BPTT through one layer; returns (grad_xs, per-gate param grads)."""
    xs, gates, cells = cache["xs"], cache["gates"], cache["cells"]
    h_prevs, c_prevs = cache["h_prevs"], cache["c_prevs"]
    wx_cat, wh_cat = cache["wx_cat"], cache["wh_cat"]
    xspec, hspec, ch = cache["xspec"], cache["hspec"], cache["ch"]
    b, t = xs.shape[0], xs.shape[1]
    da_all = np.zeros_like(gates)
    dh_next = np.zeros((b,) + grad_hs.shape[2:], dtype=xs.dtype)
    dc_next = np.zeros((b, ch) + xs.shape[3:], dtype=xs.dtype)
    dwh = np.zeros_like(wh_cat)
    for step in reversed(range(t)):
        a = gates[:, step]
        i, f = a[:, 0 * ch:1 * ch], a[:, 1 * ch:2 * ch]
        o, g = a[:, 2 * ch:3 * ch], a[:, 3 * ch:4 * ch]
        tc = np.tanh(cells[:, step])
        dh = grad_hs[:, step] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prevs[:, step] * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        da_all[:, step] = da
        dc_next = dc * f
        dh_next, dwh_step, _ = conv2d_backward(da, h_prevs[:, step], hspec,
                                               wh_cat)
        dwh += dwh_step
    flat = (b * t,) + da_all.shape[2:]
    da_flat = da_all.reshape(flat)
    xs_flat = xs.reshape((b * t,) + xs.shape[2:])
    dxs, dwx, db = conv2d_backward(da_flat, xs_flat, xspec, wx_cat)
    grads = {}
    for gi, gate in enumerate(GATES):
        grads[f"wx_{gate}"] = dwx[gi * ch:(gi + 1) * ch]
        grads[f"wh_{gate}"] = dwh[gi * ch:(gi + 1) * ch]
        grads[f"b_{gate}"] = db[gi * ch:(gi + 1) * ch]
    return dxs.reshape(xs.shape), grads


def _forward_with_cache(params: dict, config: AutoencoderConfig,
                        clips: np.ndarray):
    """Forward pass over (B, W, 1, H, Wd) clips; returns (recon, caches)."""
    b, t = clips.shape[0], clips.shape[1]
    plan = config.plan()
    e1, e2 = config.enc1_spec(), config.enc2_spec()
    d1, d2 = plan["dec1_spec"], plan["dec2_spec"]
    frames = clips.reshape((b * t,) + clips.shape[2:])
    z1 = conv2d_forward(frames, e1, params["enc1.w"], params["enc1.b"])
    a1 = np.tanh(z1)
    z2 = conv2d_forward(a1, e2, params["enc2.w"], params["enc2.b"])
    a2 = np.tanh(z2)
    feats = a2.reshape((b, t) + a2.shape[1:])
    lstm_caches = []
    hs = feats
    for layer in (1, 2, 3):
        hs, cache = _lstm_forward_sequence(_lstm_params(params, layer), hs)
        lstm_caches.append(cache)
    top = hs.reshape((b * t,) + hs.shape[2:])
    z3 = deconv2d_forward(top, d1, params["dec1.w"], params["dec1.b"])
    a3 = np.tanh(z3)
    z4 = deconv2d_forward(a3, d2, params["dec2.w"], params["dec2.b"])
    recon = sigmoid(z4)
    caches = {"frames": frames, "a1": a1, "a2": a2, "top": top, "a3": a3,
              "recon": recon, "lstm": lstm_caches, "specs": (e1, e2, d1, d2),
              "batch": (b, t)}
    return recon.reshape(clips.shape), caches


def _backward(params: dict, config: AutoencoderConfig, caches: dict,
              grad_recon: np.ndarray) -> dict:
    """Gradients of every parameter block given d(loss)/d(reconstruction)."""
    e1, e2, d1, d2 = caches["specs"]
    b, t = caches["batch"]
    recon = caches["recon"]
    grads: dict[str, np.ndarray] = {}
    dz4 = grad_recon.reshape(recon.shape) * recon * (1.0 - recon)
    da3, grads["dec2.w"], grads["dec2.b"] = deconv2d_backward(
        dz4, caches["a3"], d2, params["dec2.w"])
    dz3 = da3 * (1.0 - caches["a3"] ** 2)
    dtop, grads["dec1.w"], grads["dec1.b"] = deconv2d_backward(
        dz3, caches["top"], d1, params["dec1.w"])
    dhs = dtop.reshape((b, t) + dtop.shape[1:])
    for layer in (3, 2, 1):
        dhs, lgrads = _lstm_backward_sequence(caches["lstm"][layer - 1], dhs)
        for k, v in lgrads.items():
            grads[f"lstm{layer}.{k}"] = v
    da2 = dhs.reshape((b * t,) + dhs.shape[2:])
    dz2 = da2 * (1.0 - caches["a2"] ** 2)
    da1, grads["enc2.w"], grads["enc2.b"] = conv2d_backward(
        dz2, caches["a1"], e2, params["enc2.w"])
    dz1 = da1 * (1.0 - caches["a1"] ** 2)
    _, grads["enc1.w"], grads["enc1.b"] = conv2d_backward(
        dz1, caches["frames"], e1, params["enc1.w"], need_input_grad=False)
    return grads


def loss_and_grads(params: dict, config: AutoencoderConfig,
                   clips: np.ndarray):
    """Reconstruction MSE and its gradient w.r.t. every parameter block."""
    recon, caches = _forward_with_cache(params, config, clips)
    loss, grad_recon = mse_loss(recon, clips)
    return loss, _backward(params, config, caches, grad_recon)


def forward_loss(params: dict, config: AutoencoderConfig,
                 clips: np.ndarray) -> float:
    """Reconstruction MSE only (the cheap path for finite differences)."""
    recon, _ = _forward_with_cache(params, config, clips)
    return mse_loss(recon, clips)[0]


def forward_batch(checkpoint: ModelCheckpoint, clips: np.ndarray) -> np.ndarray:
    """Reconstruct a batch of clips (B, W, 1, H, Wd) -> same shape."""
    _check_clip_shape(checkpoint.config, clips.shape[1:])
    recon, _ = _forward_with_cache(checkpoint.params, checkpoint.config, clips)
    return recon


def forward(checkpoint: ModelCheckpoint, clip: np.ndarray) -> np.ndarray:
    """Reconstruct one clip (W, 1, H, Wd); outputs lie in [0, 1]."""
    _check_clip_shape(checkpoint.config, clip.shape)
    return forward_batch(checkpoint, clip[None])[0]


def _check_clip_shape(config: AutoencoderConfig, shape) -> None:
    want = (config.window, 1, config.frame_height, config.frame_width)
    if tuple(shape) != want:
        raise ValueError(f"clip shape {tuple(shape)} does not match config "
                         f"{want}")


def make_reconstructor(checkpoint: ModelCheckpoint) -> Callable:
    """Batch reconstruction closure for the scoring stage."""
    return lambda clips: forward_batch(checkpoint, clips)


def train(checkpoint: ModelCheckpoint, clips, hyper: TrainingHyper,
          seed: int = 0, progress: Callable[[int, float], None] | None = None):
    """Train on bug-free clips; returns (new checkpoint, per-step loss history).

    ``clips`` is an array (N, W, 1, H, Wd) or a sequence of objects with a
    ``tensor`` attribute of that shape. Clip order per epoch is a seeded
    deterministic shuffle; the result is bit-reproducible for a fixed
    (seed, dataset, hyper) on one platform.
    """
    data = _stack_clips(checkpoint.config, clips)
    if hyper.max_steps == 0:
        return checkpoint, []
    rng = np.random.default_rng(seed)
    params = dict(checkpoint.params)
    state = AdamState.zeros_like(params)
    adam_cfg = hyper.adam()
    history: list[float] = []
    order = rng.permutation(len(data))
    cursor = 0
    for step in range(hyper.max_steps):
        if cursor >= len(order):
            order = rng.permutation(len(data))
            cursor = 0
        batch_idx = order[cursor:cursor + hyper.batch_size]
        cursor += hyper.batch_size
        loss, grads = loss_and_grads(params, checkpoint.config,
                                     data[batch_idx])
        if not math.isfinite(loss):
            raise NumericError(f"train: non-finite loss at step {step}")
        params, state = adam_step(params, grads, state, adam_cfg)
        history.append(loss)
        if progress is not None:
            progress(step, loss)
    return replace_params(checkpoint, params, hyper.max_steps, history[-1],
                          seed), history


def replace_params(checkpoint: ModelCheckpoint, params: dict, steps: int,
                   final_loss: float, train_seed: int) -> ModelCheckpoint:
    return ModelCheckpoint(config=checkpoint.config, params=dict(params),
                           steps=steps, final_loss=final_loss,
                           train_seed=train_seed, version=checkpoint.version)


def _stack_clips(config: AutoencoderConfig, clips) -> np.ndarray:
    if isinstance(clips, np.ndarray):
        data = clips
    else:
        tensors = [c.tensor if hasattr(c, "tensor") else np.asarray(c)
                   for c in clips]
        if not tensors:
            raise ValueError("train: empty clip dataset")
        data = np.stack(tensors)
    if data.size == 0:
        raise ValueError("train: empty clip dataset")
    _check_clip_shape(config, data.shape[1:])
    return np.ascontiguousarray(data, dtype=np.float32)


# --- checkpoint serialization ------------------------------------------------
#
# Layout: magic "GBLD", version (u32 LE), length-prefixed (u32 LE) UTF-8
# text block of key=value lines (config + metadata), then per parameter in
# canonical order: name length (u32 LE), UTF-8 name, element count (u64 LE),
# raw little-endian float32 data.

_CONFIG_INT_FIELDS = (
    "frame_height", "frame_width", "window",
    "conv1_channels", "conv1_kernel", "conv1_stride", "conv1_padding",
    "conv2_channels", "conv2_kernel", "conv2_stride", "conv2_padding",
    "lstm_kernel", "seed",
)


def _config_text(ckpt: ModelCheckpoint) -> str:
    cfg = ckpt.config
    lines = [f"{name}={getattr(cfg, name)}" for name in _CONFIG_INT_FIELDS]
    lines.append("lstm_hidden=" + ",".join(str(h) for h in cfg.lstm_hidden))
    lines.append(f"meta.steps={ckpt.steps}")
    lines.append(f"meta.final_loss={ckpt.final_loss!r}")
    lines.append(f"meta.train_seed={ckpt.train_seed}")
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str):
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise CheckpointError(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    try:
        kwargs = {name: int(fields[name]) for name in _CONFIG_INT_FIELDS}
        kwargs["lstm_hidden"] = tuple(
            int(v) for v in fields["lstm_hidden"].split(","))
        config = AutoencoderConfig(**kwargs)
        meta = (int(fields["meta.steps"]), float(fields["meta.final_loss"]),
                int(fields["meta.train_seed"]))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad config block: {exc}") from exc
    return config, meta


def save_checkpoint(checkpoint: ModelCheckpoint, path) -> None:
    """Write the platform-independent binary checkpoint format."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(np.uint32(checkpoint.version).tobytes())
    text = _config_text(checkpoint).encode("utf-8")
    buf.write(np.uint32(len(text)).tobytes())
    buf.write(text)
    for name in param_shapes(checkpoint.config):
        arr = np.ascontiguousarray(checkpoint.params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        buf.write(np.uint32(len(encoded)).tobytes())
        buf.write(encoded)
        buf.write(np.uint64(arr.size).tobytes())
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedCheckpointError(f"truncated checkpoint while reading "
                                       f"{what}")
    return data


def load_checkpoint(path) -> ModelCheckpoint:
    """Read a checkpoint; raises distinct errors for bad magic, version,
    or truncation. Roundtrips bit-identically with save_checkpoint."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected "
                                f"{CHECKPOINT_MAGIC!r}")
        version = int(np.frombuffer(_read_exact(fh, 4, "version"),
                                    dtype="<u4")[0])
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(f"unsupported checkpoint version "
                                         f"{version}, expected "
                                         f"{CHECKPOINT_VERSION}")
        text_len = int(np.frombuffer(_read_exact(fh, 4, "config length"),
                                     dtype="<u4")[0])
        text = _read_exact(fh, text_len, "config block").decode("utf-8")
        config, (steps, final_loss, train_seed) = _parse_config_text(text)
        params: dict[str, np.ndarray] = {}
        for name, shape in param_shapes(config).items():
            name_len = int(np.frombuffer(_read_exact(fh, 4, "name length"),
                                         dtype="<u4")[0])
            stored = _read_exact(fh, name_len, "parameter name").decode("utf-8")
            if stored != name:
                raise CheckpointError(f"parameter order mismatch: found "
                                      f"{stored!r}, expected {name!r}")
            count = int(np.frombuffer(_read_exact(fh, 8, "element count"),
                                      dtype="<u8")[0])
            expected = int(np.prod(shape))
            if count != expected:
                raise CheckpointError(f"parameter {name!r} has {count} "
                                      f"elements, config implies {expected}")
            raw = _read_exact(fh, 4 * count, f"parameter {name!r} data")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return ModelCheckpoint(config=config, params=params, steps=steps,
                           final_loss=final_loss, train_seed=train_seed,
                           version=version)
