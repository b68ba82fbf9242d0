"""Typed internal representation with inferred shapes.

Converts a validated ModelFile into a Graph of ShapedOps whose shapes
have been inferred and cross-checked against the declared tensor shapes.
Shape inference fails rather than guesses on any inconsistency.

Output extent conventions for windowed ops (height shown, width same):
    SAME:  out = ceil(h / stride)        zero-padded views
    VALID: out = ceil((h - f + 1) / stride)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import FormatError, ShapeError, UnsupportedError
from .model_format import ModelFile, Tensor, validate_model
from .quant import QuantParams


@dataclass
class ShapedOp:
    kind: str
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    attrs: dict
    fused: str
    in_quant: QuantParams
    out_quant: QuantParams
    weights: Optional[Tensor] = None  # weights (FC) or filters (conv/dw)
    bias: Optional[Tensor] = None


@dataclass
class Graph:
    ops: list[ShapedOp]
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    input_quant: QuantParams
    output_quant: QuantParams


def window_extent(dim: int, filt: int, stride: int, padding: str) -> int:
    if padding == "SAME":
        out = math.ceil(dim / stride)
    else:
        out = math.ceil((dim - filt + 1) / stride)
    if out <= 0:
        raise ShapeError(f"window of size {filt} does not fit dimension {dim} with VALID padding")
    return out


def infer_shapes(kind, input_shape, attrs, weight_shape=None) -> tuple[int, ...]:
    """Output shape for one operator, given its validated attributes.

    weight_shape is the file-layout shape of the constant operand:
    [p, n] for FULLY_CONNECTED, [f, fh, fw, c] for CONV_2D,
    [1, fh, fw, k] for DEPTHWISE_CONV_2D.
    """
    if kind == "FULLY_CONNECTED":
        if len(input_shape) != 2:
            raise ShapeError(f"FULLY_CONNECTED input must be 2-D, got {input_shape}")
        if weight_shape is None or len(weight_shape) != 2:
            raise ShapeError(f"FULLY_CONNECTED weights must be 2-D, got {weight_shape}")
        m, n = input_shape
        p, n_w = weight_shape
        if n_w != n:
            raise ShapeError(f"weights expect {n_w} inputs but activation has {n}")
        return (m, p)

    if kind in ("CONV_2D", "DEPTHWISE_CONV_2D", "AVERAGE_POOL_2D"):
        if len(input_shape) != 4 or input_shape[0] != 1:
            raise ShapeError(f"{kind} input must be [1, h, w, c], got {input_shape}")
        _, h, w, c = input_shape
        padding = attrs["padding"]
        sh, sw = attrs["stride_h"], attrs["stride_w"]
        if kind == "AVERAGE_POOL_2D":
            fh, fw = attrs["filter_h"], attrs["filter_w"]
            channels = c
        else:
            if weight_shape is None or len(weight_shape) != 4:
                raise ShapeError(f"{kind} filter must be 4-D, got {weight_shape}")
            if kind == "CONV_2D":
                f, fh, fw, cf = weight_shape
                if cf != c:
                    raise ShapeError(f"filter expects {cf} channels but input has {c}")
                channels = f
            else:
                one, fh, fw, k = weight_shape
                if one != 1:
                    raise ShapeError(f"depthwise filter must be [1, fh, fw, k], got {weight_shape}")
                # Channel multiplier is 1 except for the single-channel case,
                # where a k-wide filter acts as k independent filters.
                if c == 1:
                    channels = k
                elif k == c:
                    channels = c
                else:
                    raise ShapeError(f"depthwise filter has {k} channels but input has {c}")
        oh = window_extent(h, fh, sh, padding)
        ow = window_extent(w, fw, sw, padding)
        return (1, oh, ow, channels)

    if kind == "RESHAPE":
        new_shape = tuple(attrs["new_shape"])
        n_in = math.prod(input_shape)
        n_out = math.prod(new_shape)
        if n_in != n_out:
            raise ShapeError(f"RESHAPE cannot map {n_in} elements onto shape {new_shape}")
        return new_shape

    if kind == "SOFTMAX":
        return tuple(input_shape)

    raise UnsupportedError(f"unsupported operator kind {kind!r}")


def build_graph(m: ModelFile) -> Graph:
    """Build the shaped IR from a model that passed validate_model."""
    errors = [d for d in validate_model(m) if d.severity == "error"]
    if errors:
        raise FormatError("model is invalid: " + "; ".join(str(d) for d in errors))

    ops: list[ShapedOp] = []
    current = m.tensors[m.model_input]
    current_shape = current.shape
    for k, node in enumerate(m.operators):
        weights = m.tensors[node.inputs[1]] if len(node.inputs) == 3 else None
        bias = m.tensors[node.inputs[2]] if len(node.inputs) == 3 else None
        out_tensor = m.tensors[node.output]
        try:
            inferred = infer_shapes(
                node.op, current_shape, node.options, weights.shape if weights else None
            )
        except ShapeError as exc:
            raise ShapeError(f"operator {k} ({node.op}): {exc}") from exc
        if inferred != out_tensor.shape:
            raise ShapeError(
                f"operator {k} ({node.op}): inferred output shape {inferred} "
                f"!= declared {out_tensor.shape}"
            )
        if bias is not None:
            want = inferred[-1] if node.op != "FULLY_CONNECTED" else inferred[1]
            if bias.num_elements() != want:
                raise ShapeError(
                    f"operator {k} ({node.op}): bias has {bias.num_elements()} elements, expected {want}"
                )
        act = m.tensors[node.inputs[0]]
        ops.append(
            ShapedOp(
                kind=node.op,
                input_shape=current_shape,
                output_shape=inferred,
                attrs=dict(node.options),
                fused=node.fused(),
                in_quant=act.quant,
                out_quant=out_tensor.quant,
                weights=weights,
                bias=bias,
            )
        )
        current_shape = inferred

    return Graph(
        ops=ops,
        input_shape=m.tensors[m.model_input].shape,
        output_shape=current_shape,
        input_quant=m.tensors[m.model_input].quant,
        output_quant=m.tensors[m.model_output].quant,
    )
