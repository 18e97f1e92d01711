"""Dense-array layer math with hand-derived backward passes.

Everything the autoencoder needs is here: strided 2-d cross-correlation,
its transpose, the ConvLSTM cell, the MSE objective, an Adam update, and a
finite-difference harness that keeps the analytic gradients honest. There
is deliberately no autodiff tape; each operation ships its own backward.

All functions are pure (inputs are never mutated) and keep the dtype of
their inputs, so training can run in float32 while gradient checks run the
identical code in float64. Spatial ops accept a single item ``(C, H, W)``
or a batch ``(B, C, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

GATES = ("i", "f", "o", "g")


class NumericError(RuntimeError):
    """A numeric invariant broke (non-finite loss or gradient)."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp may overflow to inf for very negative x; 1/(1+inf) == 0 is the
    # correct saturated value, so the warning is suppressed rather than fixed.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one (de)convolution: channels, square kernel, stride, padding.

    ``output_padding`` applies to the transposed direction only: it extends
    the output by that many rows/columns at the bottom/right (those positions
    receive only the bias), which is required to invert a strided convolution
    whose input size was not an exact multiple of the stride.
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    output_padding: int = 0

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"ConvSpec: channel counts must be >= 1, got "
                             f"{self.in_channels}->{self.out_channels}")
        if self.kernel_size < 1:
            raise ValueError(f"ConvSpec: kernel_size {self.kernel_size} < 1")
        if self.stride < 1:
            raise ValueError(f"ConvSpec: stride {self.stride} < 1")
        if self.padding < 0:
            raise ValueError(f"ConvSpec: padding {self.padding} < 0")
        if not 0 <= self.output_padding < max(self.stride, 1):
            raise ValueError(f"ConvSpec: output_padding {self.output_padding} "
                             f"must lie in [0, stride={self.stride})")

    def out_size(self, size: int) -> int:
        """Output spatial size of the forward (conv) direction."""
        return (size + 2 * self.padding - self.kernel_size) // self.stride + 1

    def transpose_out_size(self, size: int) -> int:
        """Output spatial size of the transposed (deconv) direction."""
        return ((size - 1) * self.stride - 2 * self.padding
                + self.kernel_size + self.output_padding)


def _batched(x: np.ndarray, what: str):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"{what}: expected 3 or 4 dimensions, got shape {x.shape}")


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    b, c, h, w = x.shape
    out = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, :, p:p + h, p:p + w] = x
    return out


def _windows(xp: np.ndarray, k: int, s: int) -> np.ndarray:
    """Strided read-only view (B, C, H', W', k, k) over a padded input."""
    b, c, h, w = xp.shape
    oh, ow = (h - k) // s + 1, (w - k) // s + 1
    sb, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, (b, c, oh, ow, k, k), (sb, sc, sh * s, sw * s, sh, sw),
        writeable=False)


def _check_conv_args(x, spec: ConvSpec, weights, bias, what: str):
    b, c, h, w = x.shape
    if c != spec.in_channels:
        raise ValueError(f"{what}: input has {c} channels, spec expects "
                         f"{spec.in_channels}")
    if weights.shape != _weight_shape(spec, what):
        raise ValueError(f"{what}: weights shape {weights.shape} != expected "
                         f"{_weight_shape(spec, what)}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ValueError(f"{what}: bias shape {bias.shape} != "
                         f"({spec.out_channels},)")


def _weight_shape(spec: ConvSpec, what: str):
    k = spec.kernel_size
    if what.startswith("deconv"):
        return (spec.in_channels, spec.out_channels, k, k)
    return (spec.out_channels, spec.in_channels, k, k)


def conv2d_forward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    """Strided 2-d cross-correlation with zero padding.

    x: (C,H,W) or (B,C,H,W); weights: (out, in, k, k); bias: (out,) or None.
    Output spatial size is floor((H + 2p - k)/s) + 1 per axis.
    """
    xb, single = _batched(x, "conv2d")
    _check_conv_args(xb, spec, weights, bias, "conv2d")
    h, w = xb.shape[2], xb.shape[3]
    oh, ow = spec.out_size(h), spec.out_size(w)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d: output size {oh}x{ow} < 1 for input "
                         f"{h}x{w} (kernel {spec.kernel_size}, stride "
                         f"{spec.stride}, padding {spec.padding})")
    v = _windows(_pad2d(xb, spec.padding), spec.kernel_size, spec.stride)
    y = np.tensordot(v, weights, axes=([1, 4, 5], [1, 2, 3]))
    y = y.transpose(0, 3, 1, 2)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return y[0] if single else y


def conv2d_backward(grad_out: np.ndarray, cached_input: np.ndarray,
                    spec: ConvSpec, weights: np.ndarray,
                    need_input_grad: bool = True):
    """Analytic gradients of conv2d_forward.

    Returns (grad_input, grad_weights, grad_bias); grad_input is None when
    need_input_grad is False (first layers never propagate into the data).
    """
    xb, single = _batched(cached_input, "conv2d_backward")
    gb, gsingle = _batched(grad_out, "conv2d_backward")
    if single != gsingle or gb.shape[0] != xb.shape[0]:
        raise ValueError("conv2d_backward: grad_out batch does not match input")
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    h, w = xb.shape[2], xb.shape[3]
    oh, ow = spec.out_size(h), spec.out_size(w)
    if gb.shape[1:] != (spec.out_channels, oh, ow):
        raise ValueError(f"conv2d_backward: grad_out shape {gb.shape[1:]} != "
                         f"expected ({spec.out_channels}, {oh}, {ow})")
    grad_bias = gb.sum(axis=(0, 2, 3))
    v = _windows(_pad2d(xb, p), k, s)
    grad_weights = np.tensordot(gb, v, axes=([0, 2, 3], [0, 2, 3]))
    grad_input = None
    if need_input_grad:
        gp = np.zeros((xb.shape[0], spec.in_channels, h + 2 * p, w + 2 * p),
                      dtype=xb.dtype)
        t = np.tensordot(gb, weights, axes=([1], [0]))  # (B, H', W', C, k, k)
        for ki in range(k):
            for kj in range(k):
                gp[:, :, ki:ki + s * oh:s, kj:kj + s * ow:s] += \
                    t[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        grad_input = gp[:, :, p:p + h, p:p + w] if p else gp
        if single:
            grad_input = grad_input[0]
    return grad_input, grad_weights, grad_bias


def deconv2d_forward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                     bias: np.ndarray | None = None) -> np.ndarray:
    """Transposed convolution (spatial upsampling inverse of conv2d geometry).

    x: (C,H,W) or (B,C,H,W); weights: (in, out, k, k); output spatial size
    (H-1)*s - 2p + k + output_padding per axis.
    """
    xb, single = _batched(x, "deconv2d")
    _check_conv_args(xb, spec, weights, bias, "deconv2d")
    b, c, h, w = xb.shape
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    oh, ow = spec.transpose_out_size(h), spec.transpose_out_size(w)
    if oh < 1 or ow < 1:
        raise ValueError(f"deconv2d: output size {oh}x{ow} < 1 for input "
                         f"{h}x{w} (kernel {k}, stride {s}, padding {p})")
    ch, cw = (h - 1) * s + k, (w - 1) * s + k  # scatter canvas before crop/pad
    canvas = np.zeros((b, spec.out_channels, ch, cw), dtype=xb.dtype)
    t = np.tensordot(xb, weights, axes=([1], [0]))  # (B, H, W, D, k, k)
    for ki in range(k):
        for kj in range(k):
            canvas[:, :, ki:ki + s * h:s, kj:kj + s * w:s] += \
                t[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    y = np.zeros((b, spec.out_channels, oh, ow), dtype=xb.dtype)
    hc, wc = min(oh, ch - p), min(ow, cw - p)
    y[:, :, :hc, :wc] = canvas[:, :, p:p + hc, p:p + wc]
    if bias is not None:
        y += bias[None, :, None, None]
    return y[0] if single else y


def deconv2d_backward(grad_out: np.ndarray, cached_input: np.ndarray,
                      spec: ConvSpec, weights: np.ndarray):
    """Analytic gradients of deconv2d_forward.

    Returns (grad_input, grad_weights, grad_bias).
    """
    xb, single = _batched(cached_input, "deconv2d_backward")
    gb, gsingle = _batched(grad_out, "deconv2d_backward")
    if single != gsingle or gb.shape[0] != xb.shape[0]:
        raise ValueError("deconv2d_backward: grad_out batch does not match input")
    b, c, h, w = xb.shape
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    oh, ow = spec.transpose_out_size(h), spec.transpose_out_size(w)
    if gb.shape[1:] != (spec.out_channels, oh, ow):
        raise ValueError(f"deconv2d_backward: grad_out shape {gb.shape[1:]} != "
                         f"expected ({spec.out_channels}, {oh}, {ow})")
    grad_bias = gb.sum(axis=(0, 2, 3))
    # Re-embed grad_out on the uncropped scatter canvas; rows added by
    # output_padding never received kernel contributions, so they drop out.
    ch, cw = (h - 1) * s + k, (w - 1) * s + k
    gc = np.zeros((b, spec.out_channels, ch, cw), dtype=gb.dtype)
    hc, wc = min(oh, ch - p), min(ow, cw - p)
    gc[:, :, p:p + hc, p:p + wc] = gb[:, :, :hc, :wc]
    v = _windows(gc, k, s)  # (B, D, h, w, k, k)
    grad_input = np.tensordot(v, weights,
                              axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    grad_weights = np.tensordot(xb, v, axes=([0, 2, 3], [0, 2, 3]))
    if single:
        grad_input = grad_input[0]
    return grad_input, grad_weights, grad_bias


@dataclass(frozen=True)
class ConvLstmParams:
    """Per-gate convolution kernels and biases of one ConvLSTM layer.

    Gate order is (i, f, o, g): input, forget, output, candidate. All gate
    convolutions run at stride 1 with 'same' zero padding (kernel_size // 2),
    so hidden state keeps the input's spatial size.

    wx[gate]: (hidden, in, k, k); wh[gate]: (hidden, hidden, k, k);
    b[gate]: (hidden,).
    """

    wx: Mapping[str, np.ndarray]
    wh: Mapping[str, np.ndarray]
    b: Mapping[str, np.ndarray]
    hidden_channels: int

    def __post_init__(self):
        ref = None
        for gate in GATES:
            for group, name in ((self.wx, "wx"), (self.wh, "wh"), (self.b, "b")):
                if gate not in group:
                    raise ValueError(f"ConvLstmParams: missing {name}[{gate}]")
            if self.wx[gate].shape[0] != self.hidden_channels:
                raise ValueError(f"ConvLstmParams: wx[{gate}] has "
                                 f"{self.wx[gate].shape[0]} output channels, "
                                 f"expected hidden {self.hidden_channels}")
            shape = self.wx[gate].shape
            if ref is None:
                ref = shape
            elif shape != ref:
                raise ValueError(f"ConvLstmParams: wx[{gate}] shape {shape} "
                                 f"differs from wx[i] shape {ref}")
            hs = (self.hidden_channels, self.hidden_channels,
                  shape[2], shape[3])
            if self.wh[gate].shape != hs:
                raise ValueError(f"ConvLstmParams: wh[{gate}] shape "
                                 f"{self.wh[gate].shape} != {hs}")
            if self.b[gate].shape != (self.hidden_channels,):
                raise ValueError(f"ConvLstmParams: b[{gate}] shape "
                                 f"{self.b[gate].shape} != "
                                 f"({self.hidden_channels},)")
        if shape[2] != shape[3] or shape[2] % 2 == 0:
            raise ValueError("ConvLstmParams: gate kernels must be square "
                             f"with odd size, got {shape[2]}x{shape[3]}")

    @property
    def kernel_size(self) -> int:
        return self.wx["i"].shape[2]

    @property
    def in_channels(self) -> int:
        return self.wx["i"].shape[1]

    def x_spec(self) -> ConvSpec:
        k = self.kernel_size
        return ConvSpec(self.in_channels, self.hidden_channels, k, 1, k // 2)

    def h_spec(self) -> ConvSpec:
        k = self.kernel_size
        return ConvSpec(self.hidden_channels, self.hidden_channels, k, 1, k // 2)


def convlstm_cell_step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                       params: ConvLstmParams):
    """One ConvLSTM time step.

    i = sigmoid(Wxi*x + Whi*h + bi), f and o likewise,
    g = tanh(Wxg*x + Whg*h + bg), c = f.c_prev + i.g, h = o.tanh(c).
    Returns (h, c).
    """
    xs, hs = params.x_spec(), params.h_spec()
    pre = {}
    for gate in GATES:
        pre[gate] = (conv2d_forward(x, xs, params.wx[gate], params.b[gate])
                     + conv2d_forward(h_prev, hs, params.wh[gate]))
    if pre["i"].shape != c_prev.shape:
        raise ValueError(f"convlstm_cell_step: cell state shape {c_prev.shape} "
                         f"is incompatible with gate shape {pre['i'].shape}")
    i, f, o = sigmoid(pre["i"]), sigmoid(pre["f"]), sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def convlstm_cell_backward(x, h_prev, c_prev, params: ConvLstmParams,
                           grad_h, grad_c=None):
    """Analytic gradients of one ConvLSTM step.

    grad_h / grad_c are the gradients arriving at the step's outputs (grad_c
    may be None). Returns (grad_x, grad_h_prev, grad_c_prev, param_grads)
    where param_grads maps 'wx_i', 'wh_i', 'b_i', ... to arrays.
    """
    xs, hs = params.x_spec(), params.h_spec()
    pre = {}
    for gate in GATES:
        pre[gate] = (conv2d_forward(x, xs, params.wx[gate], params.b[gate])
                     + conv2d_forward(h_prev, hs, params.wh[gate]))
    i, f, o = sigmoid(pre["i"]), sigmoid(pre["f"]), sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c = f * c_prev + i * g
    tc = np.tanh(c)

    dh = grad_h
    dc = dh * o * (1.0 - tc * tc)
    if grad_c is not None:
        dc = dc + grad_c
    dpre = {
        "i": dc * g * i * (1.0 - i),
        "f": dc * c_prev * f * (1.0 - f),
        "o": dh * tc * o * (1.0 - o),
        "g": dc * i * (1.0 - g * g),
    }
    grad_c_prev = dc * f
    grad_x = None
    grad_h_prev = None
    param_grads = {}
    for gate in GATES:
        gx, gwx, gb = conv2d_backward(dpre[gate], x, xs, params.wx[gate])
        gh, gwh, _ = conv2d_backward(dpre[gate], h_prev, hs, params.wh[gate])
        grad_x = gx if grad_x is None else grad_x + gx
        grad_h_prev = gh if grad_h_prev is None else grad_h_prev + gh
        param_grads[f"wx_{gate}"] = gwx
        param_grads[f"wh_{gate}"] = gwh
        param_grads[f"b_{gate}"] = gb
    return grad_x, grad_h_prev, grad_c_prev, param_grads


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements; returns (loss, grad_pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: pred shape {pred.shape} != target shape "
                         f"{target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()},
                   step=0)


def adam_step(params: Mapping[str, np.ndarray],
              grads: Mapping[str, np.ndarray],
              state: AdamState, hyper: AdamConfig):
    """One bias-corrected Adam update; returns (new_params, new_state).

    Pure: inputs are left untouched. Update rule:
    p -= lr * m_hat / (sqrt(v_hat) + eps), with decoupled-from-nothing plain
    L2 weight decay folded into the gradient when weight_decay > 0.
    """
    if set(params) != set(grads):
        raise ValueError("adam_step: params and grads have different keys")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape "
                             f"{p.shape} for block '{name}'")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adam_step: non-finite gradient in block "
                               f"'{name}'")
        if hyper.weight_decay:
            g = g + hyper.weight_decay * p
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * (g * g)
        m_hat = m / (1.0 - hyper.beta1 ** t)
        v_hat = v / (1.0 - hyper.beta2 ** t)
        new_params[name] = p - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def gradient_check(fn: Callable[[Mapping[str, np.ndarray]], tuple],
                   params: Mapping[str, np.ndarray],
                   eps: float = 1e-5,
                   loss_fn: Callable[[Mapping[str, np.ndarray]], float]
                   | None = None,
                   max_components_per_block: int | None = None,
                   sample_seed: int = 0) -> float:
    """Max relative error between fn's analytic gradient and central differences.

    fn(params) must deterministically return (loss, grads) with grads keyed
    like params. Each checked component compares
    (f(p+eps) - f(p-eps)) / (2 eps) against the analytic value with relative
    error |a - n| / max(|a|, |n|, 1e-6). Run with float64 params for a
    meaningful comparison.

    ``loss_fn``, when given, is a cheaper loss-only evaluation used for the
    perturbed points. By default every component of every block is checked;
    ``max_components_per_block`` restricts each block to a seeded random
    subset (for large models where the full sweep is wasteful).
    """
    _, analytic = fn(params)
    evaluate = loss_fn if loss_fn is not None else (lambda p: fn(p)[0])
    rng = np.random.default_rng(sample_seed)
    worst = 0.0
    work = {k: np.array(p, copy=True) for k, p in params.items()}
    for name, p in work.items():
        a = np.asarray(analytic[name]).reshape(-1)
        flat = p.reshape(-1)
        indices = np.arange(flat.size)
        if (max_components_per_block is not None
                and flat.size > max_components_per_block):
            indices = np.sort(rng.choice(flat.size, max_components_per_block,
                                         replace=False))
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + eps
            lo_hi = evaluate(work)
            flat[idx] = orig - eps
            lo_lo = evaluate(work)
            flat[idx] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            ana = float(a[idx])
            rel = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
    return worst
