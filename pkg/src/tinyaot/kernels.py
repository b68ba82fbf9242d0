"""Runtime operator kernels over pre-folded constants.

Each kernel evaluates the integer part of its quantized transfer
function exactly (64-bit integer accumulation), applies the folded
scale ratio in double precision, rounds half away from zero, saturates
to int8, and finally applies the fused activation in the output's
quantized domain.

Bit-exactness contract: the folded constants are combined as

    y = bias_term[j] + scale_ratio * bracket[i, j]

with bias_term = z_y + (s_b / s_y) * (b_q - z_b) and
scale_ratio = (s_x * s_w) / s_y. The naive reference evaluates the
unfolded equations with the same expression shapes, so engine and
reference agree bit for bit. Softmax uses math.exp element by element
(not numpy's vectorized exp) for the same reason.

Kernels are reentrant and hold no shared mutable state; one inference
runs one operator at a time, handing the activation buffer from each
step to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .quant import I8_MAX, I8_MIN, QuantParams, round_half_away

_I8_DTYPE = np.int8


@dataclass
class FoldedFC:
    """Pre-computed constants of the quantized fully connected layer.

    weights is the [n, p] working matrix (column j holds output neuron
    j). weight_col_sums stores the unscaled column sums so each folded
    term stays independently recomputable; nzxzw = n * zx * zw.
    """

    weights: np.ndarray  # int8 [n, p]
    bias_term: np.ndarray  # float64 [p]
    scale_ratio: float
    weight_col_sums: np.ndarray  # int32 [p]
    zx: int
    zw: int
    nzxzw: int


@dataclass
class FoldedConv:
    """Pre-computed constants shared by Conv2D and DepthwiseConv2D.

    filters keeps the file layout: [f, fh, fw, c] for conv (one batch
    per filter), [1, fh, fw, k] for depthwise. filter_sums holds one
    unscaled filter sum per output channel; window_const is the folded
    m*n*c*zx*zf term (m*n*zx*zw for depthwise, where c plays no role).
    """

    filters: np.ndarray  # int8, 4-D
    bias_term: np.ndarray  # float64, one per output channel
    scale_ratio: float
    filter_sums: np.ndarray  # int32, one per output channel
    zx: int
    zf: int
    window_const: int


@dataclass
class FoldedPool:
    """Folded pair for AveragePool2D: scale ratio and 1/(m*n)."""

    scale_ratio: float
    inv_window: float


def _saturate(values: np.ndarray) -> np.ndarray:
    return np.clip(values, I8_MIN, I8_MAX)


def _apply_fused(y: np.ndarray, fused: str, out_quant: QuantParams) -> np.ndarray:
    """Fused activation in the already-requantized output domain."""
    if fused == "NONE":
        return y
    if fused == "RELU":
        return np.maximum(y, out_quant.zero_point)
    if fused == "RELU6":
        z = out_quant.zero_point
        return np.minimum(np.maximum(y, z), z + round_half_away(6.0 / out_quant.scale))
    raise ValueError(f"unknown fused activation {fused!r}")


def fully_connected(x, f: FoldedFC, fused: str, out_quant: QuantParams) -> np.ndarray:
    """Quantized dense layer: y = round(bias + ratio * bracket), saturated."""
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != f.weights.shape[0]:
        raise ShapeError(f"input {x.shape} incompatible with weights {f.weights.shape}")
    acc = x @ f.weights.astype(np.int64)  # [m, p]
    row_sums = x.sum(axis=1)  # [m]
    bracket = acc - f.zw * row_sums[:, None] - f.zx * f.weight_col_sums.astype(np.int64)[None, :] + f.nzxzw
    y = f.bias_term[None, :] + f.scale_ratio * bracket.astype(np.float64)
    y = _saturate(round_half_away(y))
    return _apply_fused(y, fused, out_quant).astype(_I8_DTYPE)


def page_starts(p: int, page_size: int) -> range:
    """First output column of each page; ceil(p / page_size) pages in total."""
    return range(0, p, page_size)


def fully_connected_paged(
    x, f: FoldedFC, fused: str, out_quant: QuantParams, page_size: int
) -> np.ndarray:
    """fully_connected computed one output-neuron group at a time.

    A page carries page_size output columns' weights, bias terms,
    accumulators and output elements; the input row is shared across
    pages. Output is bit-identical to the unpaged kernel for any
    page_size in [1, p].
    """
    p = f.weights.shape[1]
    if not 1 <= page_size <= p:
        raise ShapeError(f"page_size {page_size} outside [1, {p}]")
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != f.weights.shape[0]:
        raise ShapeError(f"input {x.shape} incompatible with weights {f.weights.shape}")
    row_sums = x.sum(axis=1)
    pages = []
    for start in page_starts(p, page_size):
        stop = min(start + page_size, p)
        acc = x @ f.weights[:, start:stop].astype(np.int64)
        bracket = (
            acc
            - f.zw * row_sums[:, None]
            - f.zx * f.weight_col_sums[start:stop].astype(np.int64)[None, :]
            + f.nzxzw
        )
        y = f.bias_term[start:stop][None, :] + f.scale_ratio * bracket.astype(np.float64)
        pages.append(_apply_fused(_saturate(round_half_away(y)), fused, out_quant))
    return np.concatenate(pages, axis=1).astype(_I8_DTYPE)


def _output_extent(dim: int, filt: int, stride: int, padding: str) -> int:
    if padding == "SAME":
        return -(-dim // stride)
    return -(-(dim - filt + 1) // stride)


def extract_view(x: np.ndarray, i: int, j: int, attrs: dict) -> np.ndarray:
    """Input window read at output position (i, j).

    x is [h, w] or [h, w, c]; attrs carry padding, stride_h/stride_w and
    filter_h/filter_w. SAME shifts the window by floor((filter-1)/2) and
    zero-fills out-of-bounds elements; VALID reads in bounds only.
    """
    padding = attrs["padding"]
    sh, sw = attrs["stride_h"], attrs["stride_w"]
    fh, fw = attrs["filter_h"], attrs["filter_w"]
    h, w = x.shape[0], x.shape[1]
    oh = _output_extent(h, fh, sh, padding)
    ow = _output_extent(w, fw, sw, padding)
    if not (0 <= i < oh and 0 <= j < ow):
        raise IndexError(f"output position ({i}, {j}) outside [{oh}, {ow}]")

    top = sh * i
    left = sw * j
    if padding == "SAME":
        top -= (fh - 1) // 2
        left -= (fw - 1) // 2
    view = np.zeros((fh, fw) + x.shape[2:], dtype=x.dtype)
    src_top, src_left = max(top, 0), max(left, 0)
    src_bottom, src_right = min(top + fh, h), min(left + fw, w)
    if src_top < src_bottom and src_left < src_right:
        view[src_top - top : src_bottom - top, src_left - left : src_right - left] = x[
            src_top:src_bottom, src_left:src_right
        ]
    return view


def _window_attrs(attrs: dict, fh: int, fw: int) -> dict:
    merged = dict(attrs)
    merged["filter_h"] = fh
    merged["filter_w"] = fw
    return merged


def conv2d(x, f: FoldedConv, attrs: dict, fused: str, out_quant: QuantParams) -> np.ndarray:
    """Quantized 2-D convolution; channels merge, one output per filter."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"conv2d input must be [1, h, w, c], got {x.shape}")
    nf, fh, fw, fc = f.filters.shape
    if x.shape[3] != fc:
        raise ShapeError(f"filter expects {fc} channels, input has {x.shape[3]}")
    attrs = _window_attrs(attrs, fh, fw)
    oh = _output_extent(x.shape[1], fh, attrs["stride_h"], attrs["padding"])
    ow = _output_extent(x.shape[2], fw, attrs["stride_w"], attrs["padding"])

    flat_filters = f.filters.reshape(nf, -1).astype(np.int64)  # [f, fh*fw*c]
    fsums = f.filter_sums.astype(np.int64)
    out = np.empty((1, oh, ow, nf), dtype=_I8_DTYPE)
    plane = x[0]
    for i in range(oh):
        for j in range(ow):
            view = extract_view(plane, i, j, attrs).astype(np.int64)
            acc = flat_filters @ view.ravel()  # [f]
            bracket = acc - f.zf * int(view.sum()) - f.zx * fsums + f.window_const
            y = f.bias_term + f.scale_ratio * bracket.astype(np.float64)
            out[0, i, j] = _apply_fused(_saturate(round_half_away(y)), fused, out_quant)
    return out


def depthwise_conv2d(x, f: FoldedConv, attrs: dict, fused: str, out_quant: QuantParams) -> np.ndarray:
    """Per-channel convolution; channels are never merged.

    With a single input channel the filter's k slices act as k
    independent filters (the TinyConv front layer); otherwise the filter
    channel count must equal the input's.
    """
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"depthwise input must be [1, h, w, c], got {x.shape}")
    one, fh, fw, k = f.filters.shape
    if one != 1:
        raise ShapeError(f"depthwise filter must be [1, fh, fw, k], got {f.filters.shape}")
    c = x.shape[3]
    if c != 1 and k != c:
        raise ShapeError(f"depthwise filter has {k} channels, input has {c}")
    attrs = _window_attrs(attrs, fh, fw)
    oh = _output_extent(x.shape[1], fh, attrs["stride_h"], attrs["padding"])
    ow = _output_extent(x.shape[2], fw, attrs["stride_w"], attrs["padding"])

    filt = f.filters[0].astype(np.int64)  # [fh, fw, k]
    fsums = f.filter_sums.astype(np.int64)
    out = np.empty((1, oh, ow, k), dtype=_I8_DTYPE)
    plane = x[0]
    for i in range(oh):
        for j in range(ow):
            view = extract_view(plane, i, j, attrs).astype(np.int64)
            if c == 1 and k != 1:
                view = np.broadcast_to(view, (fh, fw, k))
            acc = (view * filt).sum(axis=(0, 1))  # [k]
            vsums = view.sum(axis=(0, 1))  # [k]
            bracket = acc - f.zf * vsums - f.zx * fsums + f.window_const
            y = f.bias_term + f.scale_ratio * bracket.astype(np.float64)
            out[0, i, j] = _apply_fused(_saturate(round_half_away(y)), fused, out_quant)
    return out


def average_pool2d(
    x, attrs: dict, fused: str, out_quant: QuantParams, in_quant: QuantParams
) -> np.ndarray:
    """Per-channel window mean: y = round(z_y + ratio * (mean - z_x))."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"pool input must be [1, h, w, c], got {x.shape}")
    fh, fw = attrs["filter_h"], attrs["filter_w"]
    oh = _output_extent(x.shape[1], fh, attrs["stride_h"], attrs["padding"])
    ow = _output_extent(x.shape[2], fw, attrs["stride_w"], attrs["padding"])

    ratio = in_quant.scale / out_quant.scale
    inv_window = 1.0 / (fh * fw)
    zx, zy = in_quant.zero_point, out_quant.zero_point
    out = np.empty((1, oh, ow, x.shape[3]), dtype=_I8_DTYPE)
    plane = x[0]
    for i in range(oh):
        for j in range(ow):
            view = extract_view(plane, i, j, attrs).astype(np.int64)
            sums = view.sum(axis=(0, 1)).astype(np.float64)  # [c]
            y = zy + ratio * (sums * inv_window - zx)
            out[0, i, j] = _apply_fused(_saturate(round_half_away(y)), fused, out_quant)
    return out


def reshape(x, new_shape) -> np.ndarray:
    """Row-major relabeling; data and quantization are untouched."""
    x = np.asarray(x)
    if math.prod(new_shape) != x.size:
        raise ShapeError(f"cannot reshape {x.size} elements to {tuple(new_shape)}")
    return x.reshape(tuple(new_shape))


def relu(x, in_quant: QuantParams, out_quant: QuantParams) -> np.ndarray:
    """Standalone ReLU with requantization into the output domain."""
    x = np.asarray(x, dtype=np.int64)
    ratio = in_quant.scale / out_quant.scale
    zx, zy = in_quant.zero_point, out_quant.zero_point
    pos = _saturate(zy + round_half_away(ratio * (x - zx).astype(np.float64)))
    return np.where(x < zx, zy, pos).astype(_I8_DTYPE)


def relu_fused(x, z: int) -> np.ndarray:
    """Fused ReLU: shared (s, z) collapses the function to a max."""
    return np.maximum(np.asarray(x), z).astype(_I8_DTYPE)


def relu6(x, in_quant: QuantParams, out_quant: QuantParams) -> np.ndarray:
    """Standalone ReLU6: ReLU below the 6-threshold, capped above it."""
    x = np.asarray(x, dtype=np.int64)
    threshold = in_quant.zero_point + 6.0 / in_quant.scale
    cap = _saturate(out_quant.zero_point + round_half_away(6.0 / out_quant.scale))
    return np.where(x < threshold, relu(x, in_quant, out_quant), cap).astype(_I8_DTYPE)


def relu6_fused(x, z: int, s: float) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(x), z), z + round_half_away(6.0 / s)).astype(_I8_DTYPE)


def softmax(x, in_quant: QuantParams, out_quant: QuantParams) -> np.ndarray:
    """Quantized softmax along the last axis (plain vector for 1-D input).

    The exponentials are shifted by the row maximum, which is
    algebraically neutral and keeps exp() in range. math.exp per element,
    not np.exp: the naive reference uses the identical scalar sequence,
    keeping the two paths bit-exact.
    """
    x = np.asarray(x)
    if x.size == 0:
        raise ShapeError("softmax input must have at least one element")
    sx = in_quant.scale
    sy, zy = out_quant.scale, out_quant.zero_point
    rows = x.reshape(-1, x.shape[-1])
    out = np.empty(rows.shape, dtype=_I8_DTYPE)
    for r, row in enumerate(rows):
        values = [int(v) for v in row]
        m = max(values)
        exps = [math.exp(sx * (v - m)) for v in values]
        total = sum(exps)
        out[r] = [max(I8_MIN, min(I8_MAX, round_half_away(zy + e / (sy * total)))) for e in exps]
    return out.reshape(x.shape)
