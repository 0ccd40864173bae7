"""3D convolution and max pooling over video volumes, the deep 3D-CNN
assembled from them, and clip splitting/averaging for video-level prediction.

Convolution here means cross-correlation (no kernel flip), stride 1, with
optional symmetric zero padding per axis. Pool windows equal their stride
(non-overlapping); extents that do not divide evenly are padded on the right
with -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .tensor import Rng, default_dtype
from .heads import dense_backward, dense_forward, init_dense
from . import fusion


@dataclass
class Conv3dParams:
    kernels: np.ndarray  # [f, c, kt, kh, kw]
    bias: np.ndarray  # [f]
    padding: tuple = (0, 0, 0)  # zeros added on both sides of (t, h, w)

    @property
    def n_filters(self):
        return self.kernels.shape[0]


def init_conv3d(n_filters, in_channels, kernel_size, padding, rng: Rng) -> Conv3dParams:
    kt, kh, kw = kernel_size
    fan_in = in_channels * kt * kh * kw
    fan_out = n_filters * kt * kh * kw
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    kernels = rng.uniform(-limit, limit, size=(n_filters, in_channels, kt, kh, kw))
    return Conv3dParams(
        kernels=kernels,
        bias=np.zeros(n_filters, dtype=default_dtype()),
        padding=tuple(padding),
    )


def conv3d_forward(p: Conv3dParams, x):
    """Correlate x [n×c×t×h×w] with the kernels at stride 1. Returns (y, cache);
    each output extent is padded extent - kernel extent + 1.

    Channels-last matmuls per kernel offset keep the working set small; the
    brute-force oracle in the test suite pins the semantics.
    """
    if x.ndim != 5 or x.shape[1] != p.kernels.shape[1]:
        raise DimensionError(
            f"conv3d expects [n,{p.kernels.shape[1]},t,h,w], got {x.shape}"
        )
    pt, ph, pw = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    f, _, kt, kh, kw = p.kernels.shape
    if xp.shape[2] < kt or xp.shape[3] < kh or xp.shape[4] < kw:
        raise DimensionError(
            f"padded input {xp.shape[2:]} smaller than kernel {(kt, kh, kw)}"
        )
    n = x.shape[0]
    to, ho, wo = xp.shape[2] - kt + 1, xp.shape[3] - kh + 1, xp.shape[4] - kw + 1
    xp_t = np.ascontiguousarray(np.moveaxis(xp, 1, -1))  # [n,tp,hp,wp,c]
    acc = np.zeros((n, to, ho, wo, f), dtype=x.dtype)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                acc += xp_t[:, i : i + to, j : j + ho, k : k + wo, :] @ p.kernels[:, :, i, j, k].T
    y = np.moveaxis(acc, -1, 1) + p.bias[None, :, None, None, None]
    return np.ascontiguousarray(y), (xp_t, x.shape, p)


def conv3d_backward(cache, grad_y):
    """Returns (grad_kernels, grad_bias, grad_x)."""
    xp_t, x_shape, p = cache
    f, c, kt, kh, kw = p.kernels.shape
    n, _, t, h, w = x_shape
    to, ho, wo = grad_y.shape[2:]
    grad_bias = grad_y.sum(axis=(0, 2, 3, 4))
    gy_t = np.ascontiguousarray(np.moveaxis(grad_y, 1, -1))  # [n,to,ho,wo,f]
    gy_flat = gy_t.reshape(-1, f)
    grad_kernels = np.empty_like(p.kernels)
    gxp_t = np.zeros_like(xp_t)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                patch = xp_t[:, i : i + to, j : j + ho, k : k + wo, :]
                grad_kernels[:, :, i, j, k] = gy_flat.T @ patch.reshape(-1, c)
                gxp_t[:, i : i + to, j : j + ho, k : k + wo, :] += gy_t @ p.kernels[:, :, i, j, k]
    pt, ph, pw = p.padding
    gx_pad = np.moveaxis(gxp_t, -1, 1)
    grad_x = gx_pad[:, :, pt : pt + t, ph : ph + h, pw : pw + w]
    return grad_kernels, grad_bias, np.ascontiguousarray(grad_x)


@dataclass
class Pool3dSpec:
    window: tuple  # (pt, ph, pw); stride equals the window


def maxpool3d(spec: Pool3dSpec, x):
    """Non-overlapping window maxima over (t,h,w). Ties break toward the first
    position in (t,h,w) scan order. Returns (y, cache)."""
    if x.ndim != 5:
        raise DimensionError(f"maxpool3d expects [n,c,t,h,w], got {x.shape}")
    pt, ph, pw = spec.window
    n, c, t, h, w = x.shape
    pad = ((-t) % pt, (-h) % ph, (-w) % pw)
    xp = x
    if any(pad):
        xp = np.pad(
            x,
            ((0, 0), (0, 0), (0, pad[0]), (0, pad[1]), (0, pad[2])),
            constant_values=-np.inf,
        )
    to, ho, wo = xp.shape[2] // pt, xp.shape[3] // ph, xp.shape[4] // pw
    tiles = xp.reshape(n, c, to, pt, ho, ph, wo, pw)
    tiles = tiles.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(n, c, to, ho, wo, pt * ph * pw)
    idx = tiles.argmax(axis=-1)
    y = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, xp.shape, idx, spec)


def maxpool3d_backward(cache, grad_y):
    """Route each window's upstream gradient to its argmax position."""
    x_shape, xp_shape, idx, spec = cache
    pt, ph, pw = spec.window
    n, c, t, h, w = x_shape
    to, ho, wo = idx.shape[2:]
    flat = np.zeros((n, c, to, ho, wo, pt * ph * pw), dtype=grad_y.dtype)
    np.put_along_axis(flat, idx[..., None], grad_y[..., None], axis=-1)
    tiles = flat.reshape(n, c, to, ho, wo, pt, ph, pw).transpose(0, 1, 2, 5, 3, 6, 4, 7)
    gx_pad = tiles.reshape(n, c, to * pt, ho * ph, wo * pw)
    return np.ascontiguousarray(gx_pad[:, :, :t, :h, :w])


@dataclass
class C3dSpec:
    """Topology description: conv groups (filter counts per conv layer), one
    pool per group, two fully-connected widths, then the class count."""

    input_shape: tuple  # (c, t, h, w)
    conv_groups: list  # e.g. [[64], [128], [256, 256], ...]
    pool_windows: list  # one (pt, ph, pw) per group
    fc_dims: tuple  # (fc6, fc7)
    n_classes: int
    kernel_size: tuple = (3, 3, 3)

    def validate(self):
        if len(self.conv_groups) != len(self.pool_windows):
            raise ConfigError(
                f"{len(self.conv_groups)} conv groups but {len(self.pool_windows)} pools"
            )
        if len(self.input_shape) != 4 or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"bad input shape {self.input_shape}")
        for gi, group in enumerate(self.conv_groups):
            if not group or any(f < 1 for f in group):
                raise ConfigError(f"conv group {gi} has invalid filter counts {group}")
        if len(self.fc_dims) != 2 or any(d < 1 for d in self.fc_dims):
            raise ConfigError(f"need two positive fully-connected widths, got {self.fc_dims}")
        if self.n_classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.n_classes}")
        self.shape_chain()

    def shape_chain(self):
        """Per-layer output shapes (c,t,h,w); raises naming the offending layer."""
        c, t, h, w = self.input_shape
        chain = [("input", (c, t, h, w))]
        for gi, (group, window) in enumerate(zip(self.conv_groups, self.pool_windows)):
            for li, filters in enumerate(group):
                c = filters  # same-padded convs keep (t,h,w)
                chain.append((f"conv{gi + 1}{'abc'[li]}", (c, t, h, w)))
            if t < window[0] or h < window[1] or w < window[2]:
                raise ConfigError(f"pool{gi + 1} window {window} exceeds volume {(t, h, w)}")
            t, h, w = -(-t // window[0]), -(-h // window[1]), -(-w // window[2])
            chain.append((f"pool{gi + 1}", (c, t, h, w)))
        chain.append(("fc6", (self.fc_dims[0],)))
        chain.append(("fc7", (self.fc_dims[1],)))
        chain.append(("softmax", (self.n_classes,)))
        return chain

    def flat_dim(self):
        pooled = self.shape_chain()[-4][1]
        return int(np.prod(pooled))

    def param_count(self):
        kt, kh, kw = self.kernel_size
        total = 0
        c = self.input_shape[0]
        for group in self.conv_groups:
            for filters in group:
                total += filters * c * kt * kh * kw + filters
                c = filters
        dims = [self.flat_dim(), self.fc_dims[0], self.fc_dims[1], self.n_classes]
        for d_in, d_out in zip(dims, dims[1:]):
            total += d_out * d_in + d_out
        return total


def full_scale_c3d_spec(n_classes=60) -> C3dSpec:
    """The deep reference topology: 8 convs, 5 pools (first 1x2x2, rest 2x2x2),
    4096-wide fully-connected pair, for 3x16x112x112 clips."""
    return C3dSpec(
        input_shape=(3, 16, 112, 112),
        conv_groups=[[64], [128], [256, 256], [512, 512], [512, 512]],
        pool_windows=[(1, 2, 2), (2, 2, 2), (2, 2, 2), (2, 2, 2), (2, 2, 2)],
        fc_dims=(4096, 4096),
        n_classes=n_classes,
    )


def desk_scale_c3d_spec(n_classes, input_shape=(3, 16, 16, 16), filters=(8, 16), fc_dim=64) -> C3dSpec:
    """A CPU-trainable variant with the same layer kinds and order: one conv
    per group (one group per filter count), first pool 1x2x2, the rest 2x2x2."""
    return C3dSpec(
        input_shape=tuple(input_shape),
        conv_groups=[[f] for f in filters],
        pool_windows=[(1, 2, 2)] + [(2, 2, 2)] * (len(filters) - 1),
        fc_dims=(fc_dim, fc_dim),
        n_classes=n_classes,
    )


class C3dModel:
    """The assembled conv/pool/fc stack. `forward` exposes the first
    fully-connected layer's activations as the feature tap."""

    def __init__(self, spec: C3dSpec, convs, fc6, fc7, out):
        self.spec = spec
        self.convs = convs  # list of Conv3dParams, in order
        self.pools = [Pool3dSpec(w) for w in spec.pool_windows]
        self.fc6 = fc6
        self.fc7 = fc7
        self.out = out
        self._conv_names = []
        for gi, group in enumerate(spec.conv_groups):
            for li in range(len(group)):
                self._conv_names.append(f"conv{gi + 1}{'abc'[li]}")

    def param_items(self):
        items = []
        for name, conv in zip(self._conv_names, self.convs):
            items.append((name + ".kernels", conv.kernels))
            items.append((name + ".bias", conv.bias))
        for name, dense in (("fc6", self.fc6), ("fc7", self.fc7), ("out", self.out)):
            items.append((name + ".W", dense.W))
            items.append((name + ".b", dense.b))
        return items

    def forward(self, x):
        """Returns (logits, fc6 activations, cache) for a clip batch [n,c,t,h,w]."""
        caches = []
        conv_iter = iter(self.convs)
        h = x
        for group, pool in zip(self.spec.conv_groups, self.pools):
            for _ in group:
                conv = next(conv_iter)
                z, ccache = conv3d_forward(conv, h)
                a = np.maximum(z, 0.0)
                caches.append(("conv", ccache, a))
                h = a
            h, pcache = maxpool3d(pool, h)
            caches.append(("pool", pcache, None))
        n = h.shape[0]
        flat_shape = h.shape
        flat = h.reshape(n, -1)
        f6, c6 = dense_forward(self.fc6, flat)
        f7, c7 = dense_forward(self.fc7, f6)
        logits, co = dense_forward(self.out, f7)
        return logits, f6, (caches, flat_shape, c6, c7, co)

    def backward(self, cache, grad_logits):
        """Returns gradients as a dict aligned with `param_items` names."""
        caches, flat_shape, c6, c7, co = cache
        grads = {}
        dWo, dbo, d7 = dense_backward(self.out, co, grad_logits)
        dW7, db7, d6 = dense_backward(self.fc7, c7, d7)
        dW6, db6, dflat = dense_backward(self.fc6, c6, d6)
        grads["out.W"], grads["out.b"] = dWo, dbo
        grads["fc7.W"], grads["fc7.b"] = dW7, db7
        grads["fc6.W"], grads["fc6.b"] = dW6, db6
        dh = dflat.reshape(flat_shape)
        conv_idx = len(self.convs) - 1
        for kind, lcache, act in reversed(caches):
            if kind == "pool":
                dh = maxpool3d_backward(lcache, dh)
            else:
                dh = dh * (act > 0.0)
                dk, db, dh = conv3d_backward(lcache, dh)
                name = self._conv_names[conv_idx]
                grads[name + ".kernels"] = dk
                grads[name + ".bias"] = db
                conv_idx -= 1
        return grads, dh


def build_c3d(spec: C3dSpec, rng: Rng) -> C3dModel:
    """Instantiate the spec with Glorot-uniform weights and zero biases."""
    spec.validate()
    kt, kh, kw = spec.kernel_size
    pad = (kt // 2, kh // 2, kw // 2)  # same-padding: only pools shrink extents
    convs = []
    c = spec.input_shape[0]
    for group in spec.conv_groups:
        for filters in group:
            convs.append(init_conv3d(filters, c, spec.kernel_size, pad, rng))
            c = filters
    fc6 = init_dense(spec.flat_dim(), spec.fc_dims[0], rng, activation="relu")
    fc7 = init_dense(spec.fc_dims[0], spec.fc_dims[1], rng, activation="relu")
    out = init_dense(spec.fc_dims[1], spec.n_classes, rng, activation="none")
    return C3dModel(spec, convs, fc6, fc7, out)


def clip_split(pixels, clip_len=16):
    """Partition a video [c,T,h,w] into non-overlapping fixed-length clips.

    Videos shorter than one clip are padded by repeating the last frame; a
    trailing remainder is padded the same way when it covers at least half a
    clip and dropped otherwise.
    """
    if pixels.ndim != 4:
        raise DimensionError(f"expected [c,T,h,w] pixels, got {pixels.shape}")
    t = pixels.shape[1]
    if t == 0:
        raise DataError("cannot split an empty video")

    def pad_to(block, n_frames):
        short = n_frames - block.shape[1]
        if short <= 0:
            return block
        tail = np.repeat(block[:, -1:], short, axis=1)
        return np.concatenate([block, tail], axis=1)

    if t < clip_len:
        return [pad_to(pixels, clip_len)]
    clips = [pixels[:, s : s + clip_len] for s in range(0, t - clip_len + 1, clip_len)]
    rem = t % clip_len
    if rem * 2 >= clip_len:
        clips.append(pad_to(pixels[:, t - rem :], clip_len))
    return clips


def clip_average(predictions):
    """Mean of per-clip probability vectors, as a Prediction."""
    probs = np.asarray(predictions, dtype=default_dtype())
    if probs.ndim != 2:
        raise DimensionError(f"expected [n_clips, K] probabilities, got {probs.shape}")
    return fusion.Prediction.from_probs(probs.mean(axis=0))
