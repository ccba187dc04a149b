"""The two five-convolution detector variants and their output geometry.

Both variants share kernels and channel counts; the 64-pixel variant runs
its first convolution at stride 2 so that both collapse a training-size
input to a single 2-channel output cell.  Four 2x2 poolings give output
strides of 16 px (rf32) and 32 px (rf64) when the stack is slid over a
larger frame.

Pruned channel widths live in ``CHANNELS`` so alternative prunings are a
one-line change.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .layers import (
    ConvLayer,
    conv2d_backward,
    conv2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    maxpool2x2_infer,
    relu_infer,
    relu_backward,
    relu_forward,
)

RF32 = "rf32"
RF64 = "rf64"
VARIANTS = (RF32, RF64)

# Channel widths of the four feature convolutions (quartered VGG-16 front).
CHANNELS = (16, 16, 32, 32)

_WINDOW = {RF32: 32, RF64: 64}
_STRIDE = {RF32: 16, RF64: 32}
_FIRST_CONV_STRIDE = {RF32: 1, RF64: 2}
_FORMAT_VERSION = 1


@dataclass
class LayerSpec:
    """One stage of the stack: convolution plus optional ReLU / 2x2 pool."""

    conv: ConvLayer
    relu: bool
    pool: bool


@dataclass
class NetworkSpec:
    """Five-convolution network: four feature stages and a 2-channel head.

    The flattened post-ReLU, post-pool activations of the layer at
    ``embedding_layer_index`` are the embeddings the regularizer acts on.
    Immutable once trained; safe to share read-only across threads.
    """

    variant: str
    layers: list
    embedding_layer_index: int = 3

    @property
    def window_px(self):
        return _WINDOW[self.variant]

    @property
    def stride_px(self):
        return _STRIDE[self.variant]


@dataclass
class OutputGeometry:
    """Maps heatmap grid cells to window positions in the source image."""

    grid_h: int
    grid_w: int
    stride_px: int
    window_px: int


def build_model(variant, seed):
    """Freshly initialized network for a variant.

    Kernels are fan-in-scaled uniform draws from the given seed; biases
    start at zero.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = 3
    for i, out_ch in enumerate(CHANNELS):
        stride = _FIRST_CONV_STRIDE[variant] if i == 0 else 1
        conv = ConvLayer(
            kernel=_init_kernel(rng, out_ch, in_ch, 3, 3),
            bias=np.zeros(out_ch, dtype=np.float32),
            stride=stride,
            pad=1,
        )
        layers.append(LayerSpec(conv=conv, relu=True, pool=True))
        in_ch = out_ch
    head = ConvLayer(
        kernel=_init_kernel(rng, 2, in_ch, 2, 2),
        bias=np.zeros(2, dtype=np.float32),
        stride=1,
        pad=0,
    )
    layers.append(LayerSpec(conv=head, relu=False, pool=False))
    return NetworkSpec(variant=variant, layers=layers)


def _init_kernel(rng, out_ch, in_ch, kh, kw):
    # sqrt(6/fan_in) keeps activation variance steady through the ReLU
    # stages; smaller scales stall the first epochs at this depth.
    fan_in = in_ch * kh * kw
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(out_ch, in_ch, kh, kw)).astype(np.float32)


def parameters(model):
    """Learnable arrays in a fixed order: kernel, bias per layer."""
    out = []
    for spec in model.layers:
        out.append(spec.conv.kernel)
        out.append(spec.conv.bias)
    return out


def parameter_count(model):
    return sum(p.size for p in parameters(model))


def output_geometry(variant, input_h, input_w):
    """Heatmap grid produced by sliding the window over an input frame."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    window = _WINDOW[variant]
    stride = _STRIDE[variant]
    if input_h < window or input_w < window:
        raise ValueError(
            f"input {input_h}x{input_w} smaller than the {window}px window"
        )
    return OutputGeometry(
        grid_h=(input_h - window) // stride + 1,
        grid_w=(input_w - window) // stride + 1,
        stride_px=stride,
        window_px=window,
    )


def _crop_even(x):
    return x[:, :, : x.shape[2] - x.shape[2] % 2, : x.shape[3] - x.shape[3] % 2]


def forward_features(model, x, crop_odd=False):
    """Run the four feature stages; returns the embedding-layer activations.

    With ``crop_odd`` the spatial dims are cropped to even right before
    every downsampling step (each pooling, and a strided conv's input),
    which realizes floor-based geometry on arbitrary frame sizes
    (remainder pixels drop on the right/bottom).  Without the input crop
    a padded stride-2 conv on an odd dim would round up instead, minting
    a grid row whose window starts before the frame.  Training-size
    inputs never need either crop.
    """
    for spec in model.layers[: model.embedding_layer_index + 1]:
        if crop_odd and spec.conv.stride == 2:
            x = _crop_even(x)
        x = conv2d_forward(x, spec.conv)
        if spec.relu:
            x = relu_infer(x)
        if spec.pool:
            if crop_odd:
                x = _crop_even(x)
            x = maxpool2x2_infer(x)
    return x


def forward_scores(model, x, crop_odd=False):
    """Full forward pass to the 2-channel score map."""
    feat = forward_features(model, x, crop_odd=crop_odd)
    return conv2d_forward(feat, model.layers[-1].conv)


def forward_training(model, x):
    """Forward pass on training-size input, keeping what backward needs.

    Returns (scores, embeddings, caches): scores N x 2 from the single
    output cell, embeddings N x d as the flattened post-pool activations of
    the embedding layer, and per-layer caches.
    """
    n = x.shape[0]
    if x.shape[2] != model.window_px or x.shape[3] != model.window_px:
        raise ValueError(
            f"{model.variant} trains on {model.window_px}x{model.window_px} "
            f"inputs, got {x.shape[2]}x{x.shape[3]}"
        )
    caches = []
    for spec in model.layers:
        conv_in = x
        pre_relu = conv2d_forward(x, spec.conv)
        x = relu_forward(pre_relu) if spec.relu else pre_relu
        pool_idx = None
        if spec.pool:
            x, pool_idx = maxpool2x2_forward(x)
        caches.append((conv_in, pre_relu, pool_idx))
    if x.shape[2:] != (1, 1):
        raise ValueError(f"training forward must end in a 1x1 cell, got {x.shape}")
    embedding_map = caches[-1][0]
    return x.reshape(n, 2), embedding_map.reshape(n, -1), caches


def backprop(model, caches, grad_scores, grad_embedding=None):
    """Reverse pass from the score gradient (plus an optional gradient
    injected at the embedding layer's output).

    Returns one (grad_kernel, grad_bias) pair per layer.  The injected
    embedding gradient bypasses the head entirely, so the head's parameter
    gradients depend only on the score gradient.
    """
    n = grad_scores.shape[0]
    param_grads = [None] * len(model.layers)

    head = model.layers[-1]
    conv_in, _, _ = caches[-1]
    g = grad_scores.reshape(n, 2, 1, 1).astype(np.float32, copy=False)
    g, gk, gb = conv2d_backward(conv_in, head.conv, g)
    param_grads[-1] = (gk, gb)

    if grad_embedding is not None:
        g = g + grad_embedding.reshape(g.shape).astype(np.float32, copy=False)

    for i in range(model.embedding_layer_index, -1, -1):
        spec = model.layers[i]
        conv_in, pre_relu, pool_idx = caches[i]
        if spec.pool:
            g = maxpool2x2_backward(pool_idx, g)
        if spec.relu:
            g = relu_backward(pre_relu, g)
        g, gk, gb = conv2d_backward(conv_in, spec.conv, g)
        param_grads[i] = (gk, gb)
    return param_grads


def embedding_dim(model):
    """Flattened embedding width for training-size input (128 for both
    variants under the default channel widths)."""
    size = model.window_px
    for i, spec in enumerate(model.layers[: model.embedding_layer_index + 1]):
        size = (size + 2 * spec.conv.pad - spec.conv.kernel.shape[2]) // spec.conv.stride + 1
        if spec.pool:
            size //= 2
    return size * size * model.layers[model.embedding_layer_index].conv.out_channels


def save_model(model, path):
    """Flat binary serialization; round-trips bit-exactly.

    Layout: magic ``VGGH``, format version u32, variant u8, then for each
    layer six u32 dims (out_ch, in_ch, kh, kw, stride, pad) followed by the
    kernel and bias as little-endian f32.
    """
    blob = bytearray()
    blob += b"VGGH"
    blob += struct.pack("<I", _FORMAT_VERSION)
    blob += struct.pack("<B", VARIANTS.index(model.variant))
    for spec in model.layers:
        conv = spec.conv
        oc, ic, kh, kw = conv.kernel.shape
        blob += struct.pack("<6I", oc, ic, kh, kw, conv.stride, conv.pad)
        blob += conv.kernel.astype("<f4", copy=False).tobytes()
        blob += conv.bias.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def need(nbytes, what):
        nonlocal off
        if off + nbytes > len(blob):
            raise DataFormatError(
                f"{path}: truncated while reading {what} at offset {off} "
                f"(need {nbytes} bytes, file has {len(blob) - off} left)"
            )
        chunk = blob[off : off + nbytes]
        off += nbytes
        return chunk

    if need(4, "magic") != b"VGGH":
        raise DataFormatError(f"{path}: bad magic at offset 0, expected VGGH")
    (version,) = struct.unpack("<I", need(4, "format version"))
    if version != _FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    (variant_id,) = struct.unpack("<B", need(1, "variant id"))
    if variant_id >= len(VARIANTS):
        raise DataFormatError(f"{path}: unknown variant id {variant_id}")
    variant = VARIANTS[variant_id]

    layers = []
    for i in range(5):
        oc, ic, kh, kw, stride, pad = struct.unpack(
            "<6I", need(24, f"layer {i} header")
        )
        ksize = oc * ic * kh * kw
        kernel = np.frombuffer(need(4 * ksize, f"layer {i} kernel"), dtype="<f4")
        bias = np.frombuffer(need(4 * oc, f"layer {i} bias"), dtype="<f4")
        conv = ConvLayer(
            kernel=kernel.reshape(oc, ic, kh, kw).copy(),
            bias=bias.copy(),
            stride=stride,
            pad=pad,
        )
        layers.append(LayerSpec(conv=conv, relu=i < 4, pool=i < 4))
    if off != len(blob):
        raise DataFormatError(
            f"{path}: {len(blob) - off} trailing bytes after offset {off}"
        )
    if layers[-1].conv.out_channels != 2:
        raise DataFormatError(f"{path}: classifier layer must have 2 channels")
    return NetworkSpec(variant=variant, layers=layers)
