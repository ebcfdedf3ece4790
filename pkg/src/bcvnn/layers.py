"""Forward computation for complex-valued layers.

Linear layers (conv2d, dense) decompose each complex product into four
real sub-operations plus one addition and one subtraction; pooling and
activation apply real-valued functions to the two parts independently.
Bernoulli channel dropout masks whole channels of the real part, the
imaginary part, or both, which is what makes a network Bayesian here:
stochastic forward passes sample from the induced weight distribution.

Activations are carried as ComplexTensor values at the API boundary and
as raw (real, imag) array pairs inside the layer engine. Per-layer
backward kernels live next to their forwards so the cache layout stays
private to each pair; the whole-network gradient is composed in
``bcvnn.train``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import ComplexTensor

NETWORK_SCHEMA_VERSION = 1


class PartMode(enum.Enum):
    """Which part(s) of a complex activation receive a dropout mask."""

    REAL = "R"
    IMAG = "I"
    BOTH = "B"

    @classmethod
    def from_letter(cls, letter: str) -> "PartMode":
        try:
            return cls(letter.upper())
        except ValueError:
            raise ConfigError(f"unknown part mode {letter!r}, expected R, I, or B") from None


# Fixed order used for deterministic tie-breaking and enumeration.
MODE_ORDER = (PartMode.REAL, PartMode.IMAG, PartMode.BOTH)
MODE_RANK = {m: i for i, m in enumerate(MODE_ORDER)}


class LayerKind(enum.Enum):
    CONV2D = "conv2d"
    DENSE = "dense"
    POOL = "pool"
    ACTIVATION = "activation"
    DROPOUT = "dropout"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network; only the fields for its kind are set."""

    kind: LayerKind
    out_channels: int | None = None
    kernel: tuple | None = None
    stride: int = 1
    out_features: int | None = None
    window: tuple | None = None
    reduction: str | None = None
    fn: str | None = None
    keep_rate: float | None = None
    part_mode: PartMode | None = None
    bias: bool = True


def conv2d(out_channels, kernel, stride=1, bias=True) -> LayerSpec:
    kernel = tuple(int(k) for k in kernel)
    if len(kernel) != 2 or min(kernel) < 1:
        raise ConfigError(f"conv kernel must be two extents >= 1, got {kernel}")
    if out_channels < 1 or stride < 1:
        raise ConfigError("conv out_channels and stride must be >= 1")
    return LayerSpec(LayerKind.CONV2D, out_channels=int(out_channels), kernel=kernel,
                     stride=int(stride), bias=bias)


def dense(out_features, bias=True) -> LayerSpec:
    if out_features < 1:
        raise ConfigError("dense out_features must be >= 1")
    return LayerSpec(LayerKind.DENSE, out_features=int(out_features), bias=bias)


def pool(window, reduction="avg") -> LayerSpec:
    window = tuple(int(w) for w in window)
    if len(window) != 2 or min(window) < 1:
        raise ConfigError(f"pool window must be two extents >= 1, got {window}")
    if reduction not in ("max", "avg"):
        raise ConfigError(f"pool reduction must be 'max' or 'avg', got {reduction!r}")
    return LayerSpec(LayerKind.POOL, window=window, reduction=reduction)


def activation(fn="crelu") -> LayerSpec:
    if fn != "crelu":
        raise ConfigError(f"unsupported activation {fn!r} (only 'crelu')")
    return LayerSpec(LayerKind.ACTIVATION, fn=fn)


def dropout(keep_rate, part_mode=PartMode.BOTH) -> LayerSpec:
    if not 0.0 < keep_rate <= 1.0:
        raise ConfigError(f"keep_rate must be in (0, 1], got {keep_rate}")
    if isinstance(part_mode, str):
        part_mode = PartMode.from_letter(part_mode)
    return LayerSpec(LayerKind.DROPOUT, keep_rate=float(keep_rate), part_mode=part_mode)


@dataclass(frozen=True)
class ComplexWeights:
    """Deterministic parameters of one linear layer: dual-part matrix plus optional bias."""

    m_real: np.ndarray
    m_imag: np.ndarray
    bias_real: np.ndarray | None = None
    bias_imag: np.ndarray | None = None

    def __post_init__(self):
        if self.m_real.shape != self.m_imag.shape:
            raise ShapeError(f"weight part shapes differ: {self.m_real.shape} vs {self.m_imag.shape}")
        if (self.bias_real is None) != (self.bias_imag is None):
            raise ShapeError("bias must be present for both parts or neither")
        if self.bias_real is not None:
            out = self.m_real.shape[0]
            if self.bias_real.shape != (out,) or self.bias_imag.shape != (out,):
                raise ShapeError(f"bias length must equal output count {out}")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer sequence with a fixed per-sample input shape and class count.

    Shape compatibility is validated here, so a constructed spec always
    describes a runnable network. Dense layers flatten whatever shape
    they receive; dropout layers must be intermediate.
    """

    layers: tuple
    input_shape: tuple
    classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        if all(l.kind is LayerKind.DROPOUT for l in self.layers):
            raise ConfigError("network needs at least one non-dropout layer")
        first, last = self.layers[0], self.layers[-1]
        if first.kind is LayerKind.DROPOUT or last.kind is LayerKind.DROPOUT:
            raise ConfigError("dropout layers must be intermediate layers")
        object.__setattr__(self, "layer_shapes", tuple(_infer_shapes(self)))

    @property
    def bayesian_indices(self) -> tuple:
        """Indices of the dropout layers, in network order."""
        return tuple(i for i, l in enumerate(self.layers) if l.kind is LayerKind.DROPOUT)

    @property
    def bayesian_count(self) -> int:
        return len(self.bayesian_indices)

    def layer_input_shape(self, index) -> tuple:
        return self.input_shape if index == 0 else self.layer_shapes[index - 1]


def _infer_shapes(spec: NetworkSpec):
    """Walk the layer list computing per-sample output shapes; raises ConfigError on mismatch."""
    shapes = []
    cur = spec.input_shape
    if min(cur) < 1:
        raise ConfigError(f"input extents must be >= 1, got {cur}")
    for i, layer in enumerate(spec.layers):
        if layer.kind is LayerKind.CONV2D:
            if len(cur) != 3:
                raise ConfigError(f"layer {i}: conv2d needs (C,H,W) input, got {cur}")
            c, h, w = cur
            kh, kw = layer.kernel
            if h < kh or w < kw:
                raise ConfigError(f"layer {i}: spatial extents {h}x{w} smaller than kernel {kh}x{kw}")
            s = layer.stride
            cur = (layer.out_channels, (h - kh) // s + 1, (w - kw) // s + 1)
        elif layer.kind is LayerKind.DENSE:
            cur = (layer.out_features,)
        elif layer.kind is LayerKind.POOL:
            if len(cur) != 3:
                raise ConfigError(f"layer {i}: pool needs (C,H,W) input, got {cur}")
            c, h, w = cur
            wh, ww = layer.window
            if h % wh or w % ww:
                raise ConfigError(f"layer {i}: extents {h}x{w} not divisible by window {wh}x{ww}")
            cur = (c, h // wh, w // ww)
        elif layer.kind in (LayerKind.ACTIVATION, LayerKind.DROPOUT):
            pass
        else:  # pragma: no cover - enum is closed
            raise ConfigError(f"layer {i}: unknown kind {layer.kind}")
        shapes.append(cur)
    if int(np.prod(cur)) != spec.classes:
        raise ConfigError(f"final output size {int(np.prod(cur))} != class count {spec.classes}")
    return shapes


def weight_shapes(spec: NetworkSpec):
    """Per-layer (matrix shape, bias length) for parametric layers, None otherwise."""
    out = []
    for i, layer in enumerate(spec.layers):
        shape_in = spec.layer_input_shape(i)
        if layer.kind is LayerKind.CONV2D:
            c = shape_in[0]
            kh, kw = layer.kernel
            out.append(((layer.out_channels, c, kh, kw), layer.out_channels if layer.bias else None))
        elif layer.kind is LayerKind.DENSE:
            fan_in = int(np.prod(shape_in))
            out.append(((layer.out_features, fan_in), layer.out_features if layer.bias else None))
        else:
            out.append(None)
    return out


def init_weights(spec: NetworkSpec, rng, dtype=np.float64):
    """Gaussian init with per-part variance 1/(2*fan_in); zero biases. Deterministic per rng."""
    weights = []
    for shapes in weight_shapes(spec):
        if shapes is None:
            weights.append(None)
            continue
        m_shape, bias_len = shapes
        fan_in = int(np.prod(m_shape[1:]))
        std = np.sqrt(1.0 / (2.0 * fan_in))
        m_real = rng.normal(0.0, std, size=m_shape).astype(dtype)
        m_imag = rng.normal(0.0, std, size=m_shape).astype(dtype)
        if bias_len is None:
            weights.append(ComplexWeights(m_real, m_imag))
        else:
            zeros = np.zeros(bias_len, dtype=dtype)
            weights.append(ComplexWeights(m_real, m_imag, zeros.copy(), zeros.copy()))
    return weights


def apply_genome(spec: NetworkSpec, modes) -> NetworkSpec:
    """Return a copy of ``spec`` with dropout part modes replaced layer by layer.

    ``modes`` may be PartMode values, bare letters, or one string like "R-B-I".
    """
    if isinstance(modes, str):
        modes = modes.replace("-", "").strip()
    modes = list(modes)
    indices = spec.bayesian_indices
    if len(modes) != len(indices):
        raise ConfigError(f"genome length {len(modes)} != Bayesian layer count {len(indices)}")
    layers = list(spec.layers)
    for idx, mode in zip(indices, modes):
        if isinstance(mode, str):
            mode = PartMode.from_letter(mode)
        layers[idx] = replace(layers[idx], part_mode=mode)
    return NetworkSpec(tuple(layers), spec.input_shape, spec.classes)


# --- network config document ------------------------------------------


def network_to_doc(spec: NetworkSpec) -> dict:
    layers = []
    for l in spec.layers:
        if l.kind is LayerKind.CONV2D:
            layers.append({"kind": "conv2d", "out_channels": l.out_channels,
                           "kernel": list(l.kernel), "stride": l.stride, "bias": l.bias})
        elif l.kind is LayerKind.DENSE:
            layers.append({"kind": "dense", "out_features": l.out_features, "bias": l.bias})
        elif l.kind is LayerKind.POOL:
            layers.append({"kind": "pool", "window": list(l.window), "reduction": l.reduction})
        elif l.kind is LayerKind.ACTIVATION:
            layers.append({"kind": "activation", "fn": l.fn})
        else:
            layers.append({"kind": "dropout", "keep_rate": l.keep_rate,
                           "part_mode": l.part_mode.value})
    return {"schema_version": NETWORK_SCHEMA_VERSION, "input_shape": list(spec.input_shape),
            "classes": spec.classes, "layers": layers}


def network_from_doc(doc: dict) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise ConfigError("network document must be a mapping")
    version = doc.get("schema_version")
    if version != NETWORK_SCHEMA_VERSION:
        raise ConfigError(f"unsupported network schema_version {version!r}")
    try:
        input_shape = tuple(int(s) for s in doc["input_shape"])
        classes = int(doc["classes"])
        raw_layers = doc["layers"]
    except KeyError as exc:
        raise ConfigError(f"network document missing field {exc}") from None
    layers = []
    for entry in raw_layers:
        kind = entry.get("kind")
        if kind == "conv2d":
            layers.append(conv2d(entry["out_channels"], entry["kernel"],
                                 entry.get("stride", 1), entry.get("bias", True)))
        elif kind == "dense":
            layers.append(dense(entry["out_features"], entry.get("bias", True)))
        elif kind == "pool":
            layers.append(pool(entry["window"], entry.get("reduction", "avg")))
        elif kind == "activation":
            layers.append(activation(entry.get("fn", "crelu")))
        elif kind == "dropout":
            layers.append(dropout(entry["keep_rate"], entry.get("part_mode", "B")))
        else:
            raise ConfigError(f"unknown layer kind {kind!r}")
    return NetworkSpec(tuple(layers), input_shape, classes)


def read_network_json(path) -> NetworkSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"network document is not valid JSON: {exc}") from None
    return network_from_doc(doc)


def write_network_json(spec: NetworkSpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_doc(spec), fh, indent=2)
        fh.write("\n")


# --- im2col machinery ---------------------------------------------------


def _im2col(x, kh, kw, stride):
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), (oh, ow)


def _col2im(dcols, x_shape, kh, kw, stride, oh, ow):
    n, c, h, w = x_shape
    d6 = dcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += d6[:, :, i, j]
    return dx


# --- layer kernels -------------------------------------------------------
#
# Each forward takes and returns raw batched (real, imag) array pairs and
# a cache consumed by the matching backward. Gradients mirror the four
# real sub-operations of the forward pass.


def _conv_forward(xr, xi, layer: LayerSpec, w: ComplexWeights):
    kh, kw = layer.kernel
    stride = layer.stride
    n = xr.shape[0]
    if xr.shape[1] != w.m_real.shape[1]:
        raise ShapeError(f"conv input channels {xr.shape[1]} != kernel channels {w.m_real.shape[1]}")
    if xr.shape[2] < kh or xr.shape[3] < kw:
        raise ShapeError(f"conv spatial extents {xr.shape[2:]} smaller than kernel ({kh},{kw})")
    cols_r, (oh, ow) = _im2col(xr, kh, kw, stride)
    cols_i, _ = _im2col(xi, kh, kw, stride)
    cout = w.m_real.shape[0]
    wr = w.m_real.reshape(cout, -1)
    wi = w.m_imag.reshape(cout, -1)
    out_r = cols_r @ wr.T - cols_i @ wi.T
    out_i = cols_r @ wi.T + cols_i @ wr.T
    if w.bias_real is not None:
        out_r += w.bias_real
        out_i += w.bias_imag
    out_r = out_r.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)
    out_i = out_i.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)
    cache = (cols_r, cols_i, xr.shape, (oh, ow))
    return out_r, out_i, cache


def _conv_backward(gr, gi, layer: LayerSpec, w: ComplexWeights, cache):
    cols_r, cols_i, x_shape, (oh, ow) = cache
    kh, kw = layer.kernel
    cout = w.m_real.shape[0]
    gr_mat = gr.transpose(0, 2, 3, 1).reshape(-1, cout)
    gi_mat = gi.transpose(0, 2, 3, 1).reshape(-1, cout)
    wr = w.m_real.reshape(cout, -1)
    wi = w.m_imag.reshape(cout, -1)
    d_wr = (gr_mat.T @ cols_r + gi_mat.T @ cols_i).reshape(w.m_real.shape)
    d_wi = (gi_mat.T @ cols_r - gr_mat.T @ cols_i).reshape(w.m_imag.shape)
    dcols_r = gr_mat @ wr + gi_mat @ wi
    dcols_i = gi_mat @ wr - gr_mat @ wi
    dxr = _col2im(dcols_r, x_shape, kh, kw, layer.stride, oh, ow)
    dxi = _col2im(dcols_i, x_shape, kh, kw, layer.stride, oh, ow)
    if w.bias_real is not None:
        d_br = gr.sum(axis=(0, 2, 3))
        d_bi = gi.sum(axis=(0, 2, 3))
    else:
        d_br = d_bi = None
    return dxr, dxi, (d_wr, d_wi, d_br, d_bi)


def _dense_forward(xr, xi, layer: LayerSpec, w: ComplexWeights):
    orig_shape = xr.shape
    n = orig_shape[0]
    xr2 = xr.reshape(n, -1)
    xi2 = xi.reshape(n, -1)
    if xr2.shape[1] != w.m_real.shape[1]:
        raise ShapeError(f"dense input length {xr2.shape[1]} != weight input dim {w.m_real.shape[1]}")
    out_r = xr2 @ w.m_real.T - xi2 @ w.m_imag.T
    out_i = xr2 @ w.m_imag.T + xi2 @ w.m_real.T
    if w.bias_real is not None:
        out_r = out_r + w.bias_real
        out_i = out_i + w.bias_imag
    return out_r, out_i, (xr2, xi2, orig_shape)


def _dense_backward(gr, gi, layer: LayerSpec, w: ComplexWeights, cache):
    xr2, xi2, orig_shape = cache
    d_wr = gr.T @ xr2 + gi.T @ xi2
    d_wi = gi.T @ xr2 - gr.T @ xi2
    dxr = (gr @ w.m_real + gi @ w.m_imag).reshape(orig_shape)
    dxi = (gi @ w.m_real - gr @ w.m_imag).reshape(orig_shape)
    if w.bias_real is not None:
        d_br = gr.sum(axis=0)
        d_bi = gi.sum(axis=0)
    else:
        d_br = d_bi = None
    return dxr, dxi, (d_wr, d_wi, d_br, d_bi)


def _pool_windows(x, wh, ww):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // wh, wh, w // ww, ww).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // wh, w // ww, wh * ww)


def _pool_forward(xr, xi, layer: LayerSpec):
    wh, ww = layer.window
    if xr.ndim != 4:
        raise ShapeError(f"pool needs NCHW input, got rank {xr.ndim}")
    if xr.shape[2] % wh or xr.shape[3] % ww:
        raise ShapeError(f"pool extents {xr.shape[2:]} not divisible by window ({wh},{ww})")
    win_r = _pool_windows(xr, wh, ww)
    win_i = _pool_windows(xi, wh, ww)
    if layer.reduction == "avg":
        out_r = win_r.mean(axis=-1)
        out_i = win_i.mean(axis=-1)
        cache = (xr.shape, None, None)
    else:
        idx_r = win_r.argmax(axis=-1)
        idx_i = win_i.argmax(axis=-1)
        out_r = np.take_along_axis(win_r, idx_r[..., None], axis=-1)[..., 0]
        out_i = np.take_along_axis(win_i, idx_i[..., None], axis=-1)[..., 0]
        cache = (xr.shape, idx_r, idx_i)
    return out_r, out_i, cache


def _pool_backward(gr, gi, layer: LayerSpec, cache):
    x_shape, idx_r, idx_i = cache
    n, c, h, w = x_shape
    wh, ww = layer.window
    oh, ow = h // wh, w // ww

    def expand(g, idx):
        win = np.zeros((n, c, oh, ow, wh * ww), dtype=g.dtype)
        if idx is None:
            win += (g / (wh * ww))[..., None]
        else:
            np.put_along_axis(win, idx[..., None], g[..., None], axis=-1)
        return win.reshape(n, c, oh, ow, wh, ww).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)

    return expand(gr, idx_r), expand(gi, idx_i)


def _activation_forward(xr, xi, layer: LayerSpec):
    mask_r = xr > 0
    mask_i = xi > 0
    return xr * mask_r, xi * mask_i, (mask_r, mask_i)


def _activation_backward(gr, gi, cache):
    mask_r, mask_i = cache
    return gr * mask_r, gi * mask_i


def _channel_axis_size(shape):
    # batched layouts only: (N, F) or (N, C, H, W); channel axis is 1
    if len(shape) not in (2, 4):
        raise ShapeError(f"dropout needs (N,F) or (N,C,H,W) input, got {shape}")
    return shape[1]


def _mask_scale(mask, keep_rate, shape):
    scaled = mask.astype(np.float64) / keep_rate
    extra = (1,) * (len(shape) - 2)
    return scaled.reshape((1, -1) + extra)


def draw_dropout_masks(channels, keep_rate, part_mode, rng):
    """Draw boolean keep-masks, real stream first; None for an untouched part."""
    z_real = z_imag = None
    if part_mode in (PartMode.REAL, PartMode.BOTH):
        z_real = rng.random(channels) < keep_rate
    if part_mode in (PartMode.IMAG, PartMode.BOTH):
        z_imag = rng.random(channels) < keep_rate
    return z_real, z_imag


def _dropout_forward(xr, xi, layer: LayerSpec, rng, fixed_masks=None):
    channels = _channel_axis_size(xr.shape)
    if fixed_masks is not None:
        z_real, z_imag = fixed_masks
    else:
        if rng is None:
            raise ValueError("stochastic dropout requires an rng")
        z_real, z_imag = draw_dropout_masks(channels, layer.keep_rate, layer.part_mode, rng)
    s_real = s_imag = None
    out_r, out_i = xr, xi  # untouched part passes through bit-identically
    if z_real is not None:
        s_real = _mask_scale(z_real, layer.keep_rate, xr.shape)
        out_r = xr * s_real
    if z_imag is not None:
        s_imag = _mask_scale(z_imag, layer.keep_rate, xi.shape)
        out_i = xi * s_imag
    return out_r, out_i, (s_real, s_imag), (z_real, z_imag)


def _dropout_backward(gr, gi, cache):
    s_real, s_imag = cache
    dxr = gr if s_real is None else gr * s_real
    dxi = gi if s_imag is None else gi * s_imag
    return dxr, dxi


# --- public layer operations --------------------------------------------


def _lift(t: ComplexTensor, batched_rank):
    if len(t.shape) == batched_rank:
        return t.real, t.imag, True
    if len(t.shape) == batched_rank - 1:
        return t.real[None, ...], t.imag[None, ...], False
    raise ShapeError(f"expected rank {batched_rank} (batched) or {batched_rank - 1}, got {t.shape}")


def complex_conv2d(input: ComplexTensor, w: ComplexWeights, stride=1) -> ComplexTensor:
    """Valid-padding complex convolution over NCHW (or single CHW) input."""
    xr, xi, batched = _lift(input, 4)
    layer = conv2d(w.m_real.shape[0], w.m_real.shape[2:], stride, bias=w.bias_real is not None)
    out_r, out_i, _ = _conv_forward(xr, xi, layer, w)
    if not batched:
        out_r, out_i = out_r[0], out_i[0]
    return ComplexTensor(out_r, out_i)


def complex_dense(input: ComplexTensor, w: ComplexWeights) -> ComplexTensor:
    """Complex matrix-vector (or matrix-batch) product with the same four sub-operations."""
    xr, xi, batched = _lift(input, 2)
    layer = dense(w.m_real.shape[0], bias=w.bias_real is not None)
    out_r, out_i, _ = _dense_forward(xr, xi, layer, w)
    if not batched:
        out_r, out_i = out_r[0], out_i[0]
    return ComplexTensor(out_r, out_i)


def complex_pool(input: ComplexTensor, window, reduction="avg") -> ComplexTensor:
    """Window pooling applied to real and imaginary parts independently."""
    xr, xi, batched = _lift(input, 4)
    out_r, out_i, _ = _pool_forward(xr, xi, pool(window, reduction))
    if not batched:
        out_r, out_i = out_r[0], out_i[0]
    return ComplexTensor(out_r, out_i)


def complex_activation(input: ComplexTensor, fn="crelu") -> ComplexTensor:
    """Separate-part ReLU."""
    layer = activation(fn)
    out_r, out_i, _ = _activation_forward(input.real, input.imag, layer)
    return ComplexTensor(out_r, out_i)


def bernoulli_channel_dropout(input: ComplexTensor, keep_rate, part_mode, rng) -> ComplexTensor:
    """Drop whole channels of the selected part(s), scaling survivors by 1/keep_rate.

    One mask entry per channel per masked part is drawn per call (real
    stream first when both parts are masked), so a batch shares the same
    channel mask within a single forward pass. The untouched part under
    single-part modes is returned bit-identically.
    """
    layer = dropout(keep_rate, part_mode)
    rank = len(input.shape)
    if rank in (1, 3):
        xr, xi = input.real[None, ...], input.imag[None, ...]
        out_r, out_i, _, _ = _dropout_forward(xr, xi, layer, rng)
        return ComplexTensor(out_r[0], out_i[0])
    if rank in (2, 4):
        out_r, out_i, _, _ = _dropout_forward(input.real, input.imag, layer, rng)
        return ComplexTensor(out_r, out_i)
    raise ShapeError(f"dropout expects flat or NCHW input, got {input.shape}")


def forward_with_cache(spec: NetworkSpec, weights, input: ComplexTensor, stochastic, rng,
                       fixed_masks=None):
    """Run all layers on a batched input, returning logits, caches, and drawn masks.

    ``fixed_masks`` (one (z_real, z_imag) pair per dropout layer) replays a
    previous stochastic pass; used for gradient checking and backward reuse.
    """
    if len(weights) != len(spec.layers):
        raise ShapeError(f"weights list length {len(weights)} != layer count {len(spec.layers)}")
    xr, xi = input.real, input.imag
    caches = []
    drawn = []
    drop_idx = 0
    for layer, w in zip(spec.layers, weights):
        if layer.kind is LayerKind.CONV2D:
            xr, xi, cache = _conv_forward(xr, xi, layer, w)
        elif layer.kind is LayerKind.DENSE:
            xr, xi, cache = _dense_forward(xr, xi, layer, w)
        elif layer.kind is LayerKind.POOL:
            xr, xi, cache = _pool_forward(xr, xi, layer)
        elif layer.kind is LayerKind.ACTIVATION:
            xr, xi, cache = _activation_forward(xr, xi, layer)
        else:  # dropout
            if stochastic:
                fixed = fixed_masks[drop_idx] if fixed_masks is not None else None
                xr, xi, cache, masks = _dropout_forward(xr, xi, layer, rng, fixed)
                drawn.append(masks)
            else:
                cache = (None, None)  # identity at deterministic prediction time
                drawn.append((None, None))
            drop_idx += 1
        caches.append(cache)
    n = xr.shape[0]
    logits = ComplexTensor(xr.reshape(n, -1), xi.reshape(n, -1))
    return logits, caches, drawn


def forward(spec: NetworkSpec, weights, input: ComplexTensor, stochastic=False, rng=None) -> ComplexTensor:
    """Sequential forward pass producing per-sample logits of length ``classes``.

    With ``stochastic=False`` dropout layers act as identity; with True,
    each dropout layer draws fresh masks from ``rng``.
    """
    xr, xi, batched = _lift(input, len(spec.input_shape) + 1)
    if (xr.shape[1:] != tuple(spec.input_shape)):
        raise ShapeError(f"input shape {xr.shape[1:]} != spec input shape {spec.input_shape}")
    logits, _, _ = forward_with_cache(spec, weights, ComplexTensor(xr, xi), stochastic, rng)
    if not batched:
        return ComplexTensor(logits.real[0], logits.imag[0])
    return logits
