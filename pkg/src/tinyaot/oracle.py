"""Independent references backing the engine's correctness tests.

Two evaluators over the same Graph:

  * float_reference: double-precision evaluation of each operator's
    real-valued definition over dequantized values. Rounding-free by
    construction; quantizing its per-operator output bounds the engine
    to within one integer unit.
  * naive_quantized_reference: the quantized equations evaluated
    literally with plain nested loops, no constant folding, and the
    same rounding rule as the engine. Folding is semantics-preserving,
    so this must match execute_plan bit for bit.

Padded positions hold quantized zero, so their real-domain value is
s_x * (0 - z_x); both references account for that.

Performance is a non-goal here; these run orders of magnitude slower
than the engine.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError
from .graph import Graph, ShapedOp
from .quant import I8_MAX, I8_MIN, round_half_away


def _out_extent(dim, filt, stride, padding):
    if padding == "SAME":
        return math.ceil(dim / stride)
    return math.ceil((dim - filt + 1) / stride)


# --- float reference ---------------------------------------------------------


def _real_view(plane: np.ndarray, i, j, fh, fw, attrs, pad_value: float) -> np.ndarray:
    """Window at output position (i, j) of a real-valued [h, w, c] plane."""
    sh, sw = attrs["stride_h"], attrs["stride_w"]
    top, left = sh * i, sw * j
    if attrs["padding"] == "SAME":
        top -= (fh - 1) // 2
        left -= (fw - 1) // 2
    h, w = plane.shape[0], plane.shape[1]
    pad = max(0, -top) + max(0, top + fh - h) + max(0, -left) + max(0, left + fw - w)
    if pad:
        widths = [(max(0, -top), max(0, top + fh - h)), (max(0, -left), max(0, left + fw - w))]
        widths += [(0, 0)] * (plane.ndim - 2)
        plane = np.pad(plane, widths, constant_values=pad_value)
        top += widths[0][0]
        left += widths[1][0]
    return plane[top : top + fh, left : left + fw]


def _fused_real(y: np.ndarray, fused: str) -> np.ndarray:
    if fused == "RELU":
        return np.maximum(y, 0.0)
    if fused == "RELU6":
        return np.minimum(np.maximum(y, 0.0), 6.0)
    return y


def _float_op(op: ShapedOp, x: np.ndarray) -> np.ndarray:
    """Real-valued output of one operator given its real-valued input."""
    pad_value = op.in_quant.scale * (0 - op.in_quant.zero_point)

    if op.kind == "FULLY_CONNECTED":
        p, n = op.weights.shape
        wq = op.weights.data.reshape(p, n)
        w_real = op.weights.quant.scale * (wq.astype(np.float64) - op.weights.quant.zero_point)
        b_real = op.bias.quant.scale * (op.bias.data.astype(np.float64) - op.bias.quant.zero_point)
        return _fused_real(x @ w_real.T + b_real, op.fused)

    if op.kind in ("CONV_2D", "DEPTHWISE_CONV_2D"):
        filters = op.weights.data.reshape(op.weights.shape)
        f_real = op.weights.quant.scale * (filters.astype(np.float64) - op.weights.quant.zero_point)
        b_real = op.bias.quant.scale * (op.bias.data.astype(np.float64) - op.bias.quant.zero_point)
        _, fh, fw, _ = op.weights.shape
        oh = _out_extent(x.shape[1], fh, op.attrs["stride_h"], op.attrs["padding"])
        ow = _out_extent(x.shape[2], fw, op.attrs["stride_w"], op.attrs["padding"])
        k = op.output_shape[3]
        out = np.empty((1, oh, ow, k))
        for i in range(oh):
            for j in range(ow):
                view = _real_view(x[0], i, j, fh, fw, op.attrs, pad_value)
                if op.kind == "CONV_2D":
                    out[0, i, j] = np.tensordot(f_real, view, axes=3) + b_real
                else:
                    if x.shape[3] == 1 and k != 1:
                        view = np.broadcast_to(view, (fh, fw, k))
                    out[0, i, j] = (view * f_real[0]).sum(axis=(0, 1)) + b_real
        return _fused_real(out, op.fused)

    if op.kind == "AVERAGE_POOL_2D":
        fh, fw = op.attrs["filter_h"], op.attrs["filter_w"]
        oh = _out_extent(x.shape[1], fh, op.attrs["stride_h"], op.attrs["padding"])
        ow = _out_extent(x.shape[2], fw, op.attrs["stride_w"], op.attrs["padding"])
        out = np.empty((1, oh, ow, x.shape[3]))
        for i in range(oh):
            for j in range(ow):
                view = _real_view(x[0], i, j, fh, fw, op.attrs, pad_value)
                out[0, i, j] = view.mean(axis=(0, 1))
        return _fused_real(out, op.fused)

    if op.kind == "RESHAPE":
        return x.reshape(tuple(op.attrs["new_shape"]))

    if op.kind == "SOFTMAX":
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    raise ShapeError(f"unknown operator kind {op.kind!r}")


def float_reference(g: Graph, x) -> np.ndarray:
    """Dequantize the input and run the whole graph in the real domain.

    Intermediate values are never re-quantized, so the one-unit bound
    against the engine holds per operator, not end to end.
    """
    x = np.asarray(x)
    if x.shape != g.input_shape:
        raise ShapeError(f"input shape {x.shape} != graph input {g.input_shape}")
    real = g.input_quant.scale * (x.astype(np.float64) - g.input_quant.zero_point)
    for op in g.ops:
        real = _float_op(op, real)
    return real


# --- naive quantized reference -----------------------------------------------


def _clamp8(v: int) -> int:
    return max(I8_MIN, min(I8_MAX, v))


def _fused_naive(yq: int, fused: str, out_quant) -> int:
    if fused == "RELU":
        return max(yq, out_quant.zero_point)
    if fused == "RELU6":
        z = out_quant.zero_point
        return min(max(yq, z), z + round_half_away(6.0 / out_quant.scale))
    return yq


def _literal_view(plane, i, j, fh, fw, attrs):
    """Quantized window per the textbook extraction loop: walk the filter
    positions, index with stride and shift, zero-fill out of bounds."""
    sh, sw = attrs["stride_h"], attrs["stride_w"]
    same = attrs["padding"] == "SAME"
    shift_h = (fh - 1) // 2 if same else 0
    shift_w = (fw - 1) // 2 if same else 0
    h, w = plane.shape[0], plane.shape[1]
    channels = plane.shape[2] if plane.ndim == 3 else 1
    view = [[[0] * channels for _ in range(fw)] for _ in range(fh)]
    for k in range(fh):
        for l in range(fw):
            ih = sh * i + k - shift_h
            iw = sw * j + l - shift_w
            if 0 <= ih < h and 0 <= iw < w:
                for ch in range(channels):
                    view[k][l][ch] = int(plane[ih, iw, ch]) if plane.ndim == 3 else int(plane[ih, iw])
    return view


def _naive_fc(op: ShapedOp, x: np.ndarray) -> np.ndarray:
    p, n = op.weights.shape
    w = op.weights.data.reshape(p, n)  # w[j][k] = W_q[k, j]
    bq = op.bias.data
    sx, zx = op.in_quant.scale, op.in_quant.zero_point
    sw, zw = op.weights.quant.scale, op.weights.quant.zero_point
    sb, zb = op.bias.quant.scale, op.bias.quant.zero_point
    sy, zy = op.out_quant.scale, op.out_quant.zero_point
    m = x.shape[0]
    out = np.empty((m, p), dtype=np.int8)
    for i in range(m):
        for j in range(p):
            s_xw = sum(int(x[i, k]) * int(w[j, k]) for k in range(n))
            s_x = sum(int(x[i, k]) for k in range(n))
            s_w = sum(int(w[j, k]) for k in range(n))
            bracket = s_xw - zw * s_x - zx * s_w + n * zx * zw
            y = zy + (sb / sy) * (int(bq[j]) - zb) + ((sx * sw) / sy) * bracket
            out[i, j] = _fused_naive(_clamp8(round_half_away(y)), op.fused, op.out_quant)
    return out


def _naive_conv(op: ShapedOp, x: np.ndarray) -> np.ndarray:
    filters = op.weights.data.reshape(op.weights.shape)
    bq = op.bias.data
    sx, zx = op.in_quant.scale, op.in_quant.zero_point
    sf, zf = op.weights.quant.scale, op.weights.quant.zero_point
    sb, zb = op.bias.quant.scale, op.bias.quant.zero_point
    sy, zy = op.out_quant.scale, op.out_quant.zero_point
    depthwise = op.kind == "DEPTHWISE_CONV_2D"
    if depthwise:
        _, fh, fw, nf = filters.shape
    else:
        nf, fh, fw, fc = filters.shape
    attrs = dict(op.attrs)
    attrs["filter_h"], attrs["filter_w"] = fh, fw
    _, oh, ow, _ = op.output_shape
    c = x.shape[3]
    out = np.empty((1, oh, ow, nf), dtype=np.int8)
    for i in range(oh):
        for j in range(ow):
            view = _literal_view(x[0], i, j, fh, fw, attrs)
            for f in range(nf):
                s_xf = s_x = s_f = 0
                if depthwise:
                    ch = 0 if c == 1 else f
                    for a in range(fh):
                        for b in range(fw):
                            xv = view[a][b][ch]
                            fv = int(filters[0, a, b, f])
                            s_xf += xv * fv
                            s_x += xv
                            s_f += fv
                    window = fh * fw
                else:
                    for a in range(fh):
                        for b in range(fw):
                            for ch in range(c):
                                xv = view[a][b][ch]
                                fv = int(filters[f, a, b, ch])
                                s_xf += xv * fv
                                s_x += xv
                                s_f += fv
                    window = fh * fw * c
                bracket = s_xf - zf * s_x - zx * s_f + window * zx * zf
                y = zy + (sb / sy) * (int(bq[f]) - zb) + ((sx * sf) / sy) * bracket
                out[0, i, j, f] = _fused_naive(_clamp8(round_half_away(y)), op.fused, op.out_quant)
    return out


def _naive_pool(op: ShapedOp, x: np.ndarray) -> np.ndarray:
    sx, zx = op.in_quant.scale, op.in_quant.zero_point
    sy, zy = op.out_quant.scale, op.out_quant.zero_point
    fh, fw = op.attrs["filter_h"], op.attrs["filter_w"]
    ratio = sx / sy
    inv_window = 1.0 / (fh * fw)
    _, oh, ow, c = op.output_shape
    out = np.empty((1, oh, ow, c), dtype=np.int8)
    for i in range(oh):
        for j in range(ow):
            view = _literal_view(x[0], i, j, fh, fw, op.attrs)
            for ch in range(c):
                total = sum(view[a][b][ch] for a in range(fh) for b in range(fw))
                y = zy + ratio * (total * inv_window - zx)
                out[0, i, j, ch] = _fused_naive(_clamp8(round_half_away(y)), op.fused, op.out_quant)
    return out


def _naive_softmax(op: ShapedOp, x: np.ndarray) -> np.ndarray:
    sx = op.in_quant.scale
    sy, zy = op.out_quant.scale, op.out_quant.zero_point
    rows = x.reshape(-1, x.shape[-1])
    out = np.empty(rows.shape, dtype=np.int8)
    for r, row in enumerate(rows):
        values = [int(v) for v in row]
        m = max(values)
        exps = [math.exp(sx * (v - m)) for v in values]
        total = sum(exps)
        out[r] = [_clamp8(round_half_away(zy + e / (sy * total))) for e in exps]
    return out.reshape(x.shape)


def naive_quantized_reference(g: Graph, x) -> np.ndarray:
    """Evaluate each quantized operator equation term by term, unfolded."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != g.input_shape:
        raise ShapeError(f"input shape {x.shape} != graph input {g.input_shape}")
    x = x.astype(np.int8)
    for op in g.ops:
        if op.kind == "FULLY_CONNECTED":
            x = _naive_fc(op, x)
        elif op.kind in ("CONV_2D", "DEPTHWISE_CONV_2D"):
            x = _naive_conv(op, x)
        elif op.kind == "AVERAGE_POOL_2D":
            x = _naive_pool(op, x)
        elif op.kind == "RESHAPE":
            x = x.reshape(tuple(op.attrs["new_shape"]))
        elif op.kind == "SOFTMAX":
            x = _naive_softmax(op, x)
        else:
            raise ShapeError(f"unknown operator kind {op.kind!r}")
    return x
