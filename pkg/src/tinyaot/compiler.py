"""Compiler stage: constant folding, plan execution, and code emission.

fold_constants turns a shaped Graph into a CompiledPlan whose steps
carry every input-independent term of the quantized operator equations,
computed once in double precision. execute_plan runs a plan directly
(the testing twin of the emitted code); emit_source renders the plan as
a standalone Python module exposing predict() with all constants
embedded as literals and one kernel-library call per step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import ShapeError, UnsupportedError
from .graph import Graph, ShapedOp
from .kernels import FoldedConv, FoldedFC, FoldedPool
from .quant import I32_MAX, I32_MIN, QuantParams

Folded = Union[FoldedFC, FoldedConv, FoldedPool, None]


@dataclass
class PlanStep:
    kind: str
    folded: Folded
    attrs: dict
    fused: str
    in_quant: QuantParams
    out_quant: QuantParams
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    page_size: Optional[int] = None  # FULLY_CONNECTED paging directive


@dataclass
class CompiledPlan:
    steps: list[PlanStep]
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    input_quant: QuantParams
    output_quant: QuantParams


def _check_i32(value: int, what: str) -> int:
    if not I32_MIN <= value <= I32_MAX:
        raise OverflowError(f"folded constant {what} = {value} exceeds the 32-bit accumulator range")
    return int(value)


def _bias_vector(op: ShapedOp) -> np.ndarray:
    """First folded term: z_y + (s_b / s_y) * (b_q - z_b), one per output."""
    b = op.bias
    zy = op.out_quant.zero_point
    sb_over_sy = b.quant.scale / op.out_quant.scale
    return zy + sb_over_sy * (b.data.astype(np.float64) - b.quant.zero_point)


def fold_fc(op: ShapedOp) -> FoldedFC:
    p, n = op.weights.shape
    # File layout is output-major [p, n]; the kernel works on [n, p].
    w = np.ascontiguousarray(op.weights.data.reshape(p, n).T.astype(np.int8))
    col_sums = w.astype(np.int64).sum(axis=0)
    for j, s in enumerate(col_sums):
        _check_i32(int(s), f"weight_col_sums[{j}]")
    zx = op.in_quant.zero_point
    zw = op.weights.quant.zero_point
    return FoldedFC(
        weights=w,
        bias_term=_bias_vector(op),
        scale_ratio=(op.in_quant.scale * op.weights.quant.scale) / op.out_quant.scale,
        weight_col_sums=col_sums.astype(np.int32),
        zx=zx,
        zw=zw,
        nzxzw=_check_i32(n * zx * zw, "n*zx*zw"),
    )


def fold_conv(op: ShapedOp) -> FoldedConv:
    filters = op.weights.data.reshape(op.weights.shape).astype(np.int8)
    zx = op.in_quant.zero_point
    zf = op.weights.quant.zero_point
    if op.kind == "CONV_2D":
        f, fh, fw, c = filters.shape
        sums = filters.astype(np.int64).reshape(f, -1).sum(axis=1)
        window = _check_i32(fh * fw * c * zx * zf, "m*n*c*zx*zf")
    else:
        _, fh, fw, k = filters.shape
        sums = filters.astype(np.int64)[0].sum(axis=(0, 1))
        window = _check_i32(fh * fw * zx * zf, "m*n*zx*zw")
    for j, s in enumerate(sums):
        _check_i32(int(s), f"filter_sums[{j}]")
    return FoldedConv(
        filters=filters,
        bias_term=_bias_vector(op),
        scale_ratio=(op.in_quant.scale * op.weights.quant.scale) / op.out_quant.scale,
        filter_sums=sums.astype(np.int32),
        zx=zx,
        zf=zf,
        window_const=window,
    )


def fold_constants(g: Graph) -> CompiledPlan:
    """Fold every input-independent term of each operator. Pure: the same
    graph always yields the same plan."""
    steps = []
    for op in g.ops:
        if op.kind == "FULLY_CONNECTED":
            folded: Folded = fold_fc(op)
        elif op.kind in ("CONV_2D", "DEPTHWISE_CONV_2D"):
            folded = fold_conv(op)
        elif op.kind == "AVERAGE_POOL_2D":
            folded = FoldedPool(
                scale_ratio=op.in_quant.scale / op.out_quant.scale,
                inv_window=1.0 / (op.attrs["filter_h"] * op.attrs["filter_w"]),
            )
        elif op.kind in ("RESHAPE", "SOFTMAX"):
            folded = None
        else:
            raise UnsupportedError(f"cannot fold operator kind {op.kind!r}")
        steps.append(
            PlanStep(
                kind=op.kind,
                folded=folded,
                attrs=dict(op.attrs),
                fused=op.fused,
                in_quant=op.in_quant,
                out_quant=op.out_quant,
                in_shape=op.input_shape,
                out_shape=op.output_shape,
            )
        )
    return CompiledPlan(
        steps=steps,
        input_shape=g.input_shape,
        output_shape=g.output_shape,
        input_quant=g.input_quant,
        output_quant=g.output_quant,
    )


def run_step(step: PlanStep, x: np.ndarray) -> np.ndarray:
    if step.kind == "FULLY_CONNECTED":
        if step.page_size is not None:
            return kernels.fully_connected_paged(
                x, step.folded, step.fused, step.out_quant, step.page_size
            )
        return kernels.fully_connected(x, step.folded, step.fused, step.out_quant)
    if step.kind == "CONV_2D":
        return kernels.conv2d(x, step.folded, step.attrs, step.fused, step.out_quant)
    if step.kind == "DEPTHWISE_CONV_2D":
        return kernels.depthwise_conv2d(x, step.folded, step.attrs, step.fused, step.out_quant)
    if step.kind == "AVERAGE_POOL_2D":
        return kernels.average_pool2d(x, step.attrs, step.fused, step.out_quant, step.in_quant)
    if step.kind == "RESHAPE":
        return kernels.reshape(x, step.attrs["new_shape"])
    if step.kind == "SOFTMAX":
        return kernels.softmax(x, step.in_quant, step.out_quant)
    raise UnsupportedError(f"unknown step kind {step.kind!r}")


def execute_plan(p: CompiledPlan, x) -> np.ndarray:
    """Run the plan's steps in order, handing each output to the next step.

    Each step consumes its input buffer and produces a fresh output; no
    buffer outlives the step that produced its successor.
    """
    x = np.asarray(x, dtype=np.int8)
    if x.shape != p.input_shape:
        raise ShapeError(f"input shape {x.shape} != plan input {p.input_shape}")
    for step in p.steps:
        x = run_step(step, x)
    return x


# --- plan serialization -----------------------------------------------------


def _quant_json(q: QuantParams):
    return {"scale": q.scale, "zero_point": q.zero_point}


def _folded_json(folded: Folded):
    if folded is None:
        return None
    if isinstance(folded, FoldedFC):
        return {
            "type": "fc",
            "weights": folded.weights.ravel().tolist(),
            "weights_shape": list(folded.weights.shape),
            "bias_term": folded.bias_term.tolist(),
            "scale_ratio": folded.scale_ratio,
            "weight_col_sums": folded.weight_col_sums.tolist(),
            "zx": folded.zx,
            "zw": folded.zw,
            "nzxzw": folded.nzxzw,
        }
    if isinstance(folded, FoldedConv):
        return {
            "type": "conv",
            "filters": folded.filters.ravel().tolist(),
            "filters_shape": list(folded.filters.shape),
            "bias_term": folded.bias_term.tolist(),
            "scale_ratio": folded.scale_ratio,
            "filter_sums": folded.filter_sums.tolist(),
            "zx": folded.zx,
            "zf": folded.zf,
            "window_const": folded.window_const,
        }
    return {"type": "pool", "scale_ratio": folded.scale_ratio, "inv_window": folded.inv_window}


def plan_to_json(p: CompiledPlan) -> dict:
    return {
        "input_shape": list(p.input_shape),
        "output_shape": list(p.output_shape),
        "input_quant": _quant_json(p.input_quant),
        "output_quant": _quant_json(p.output_quant),
        "steps": [
            {
                "kind": s.kind,
                "attrs": s.attrs,
                "fused": s.fused,
                "in_quant": _quant_json(s.in_quant),
                "out_quant": _quant_json(s.out_quant),
                "in_shape": list(s.in_shape),
                "out_shape": list(s.out_shape),
                "page_size": s.page_size,
                "folded": _folded_json(s.folded),
            }
            for s in p.steps
        ],
    }


def plan_digest(p: CompiledPlan) -> str:
    text = json.dumps(plan_to_json(p), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# --- code emission ----------------------------------------------------------


@dataclass(frozen=True)
class EmitOptions:
    """Emission knobs. kernel_module is the import path of the kernel
    library the generated unit calls into."""

    kernel_module: str = "tinyaot"


def _float_lit(x: float) -> str:
    return repr(float(x))


def _float_list(values) -> str:
    return "[" + ", ".join(_float_lit(v) for v in values) + "]"


def _int_list(values) -> str:
    return "[" + ", ".join(str(int(v)) for v in values) + "]"


def _quant_lit(q: QuantParams) -> str:
    return f"QuantParams(scale={_float_lit(q.scale)}, zero_point={q.zero_point})"


def _emit_folded(name: str, step: PlanStep, lines: list):
    folded = step.folded
    if isinstance(folded, FoldedFC):
        n, p = folded.weights.shape
        lines.append(
            f"{name} = FoldedFC(\n"
            f"    weights=np.array({_int_list(folded.weights.ravel())}, dtype=np.int8).reshape({n}, {p}),\n"
            f"    bias_term=np.array({_float_list(folded.bias_term)}),\n"
            f"    scale_ratio={_float_lit(folded.scale_ratio)},\n"
            f"    weight_col_sums=np.array({_int_list(folded.weight_col_sums)}, dtype=np.int32),\n"
            f"    zx={folded.zx}, zw={folded.zw}, nzxzw={folded.nzxzw},\n"
            f")"
        )
    elif isinstance(folded, FoldedConv):
        shape = ", ".join(str(d) for d in folded.filters.shape)
        lines.append(
            f"{name} = FoldedConv(\n"
            f"    filters=np.array({_int_list(folded.filters.ravel())}, dtype=np.int8).reshape({shape}),\n"
            f"    bias_term=np.array({_float_list(folded.bias_term)}),\n"
            f"    scale_ratio={_float_lit(folded.scale_ratio)},\n"
            f"    filter_sums=np.array({_int_list(folded.filter_sums)}, dtype=np.int32),\n"
            f"    zx={folded.zx}, zf={folded.zf}, window_const={folded.window_const},\n"
            f")"
        )


def emit_source(p: CompiledPlan, opts: EmitOptions = EmitOptions()) -> str:
    """Render the plan as a standalone inference module.

    The module defines predict(values) over a flat int8 array of
    INPUT_SIZE elements and returns a flat int8 array of OUTPUT_SIZE
    elements. Constants are embedded as exact literals that round-trip
    to the folded doubles, so predict() agrees bit for bit with
    execute_plan on the same plan. Emission is deterministic: the same
    plan always yields identical bytes.
    """
    km = opts.kernel_module
    header = [
        "# Generated quantized inference routine; all constants are folded. Do not edit.",
        f"# Plan digest: {plan_digest(p)}",
        "",
        "import numpy as np",
        "",
        f"from {km}.kernels import (",
        "    FoldedConv,",
        "    FoldedFC,",
        "    average_pool2d,",
        "    conv2d,",
        "    depthwise_conv2d,",
        "    fully_connected,",
        "    fully_connected_paged,",
        "    reshape,",
        "    softmax,",
        ")",
        f"from {km}.quant import QuantParams",
        "",
        f"INPUT_SHAPE = {tuple(p.input_shape)}",
        f"INPUT_SIZE = {int(np.prod(p.input_shape))}",
        f"OUTPUT_SHAPE = {tuple(p.output_shape)}",
        f"OUTPUT_SIZE = {int(np.prod(p.output_shape))}",
        f"INPUT_QUANT = {_quant_lit(p.input_quant)}",
        f"OUTPUT_QUANT = {_quant_lit(p.output_quant)}",
        "",
    ]

    lines = list(header)
    calls = []
    for idx, step in enumerate(p.steps):
        const = f"_STEP{idx}"
        if step.kind == "FULLY_CONNECTED":
            _emit_folded(const, step, lines)
            lines.append("")
            if step.page_size is not None:
                calls.append(
                    f"    x = fully_connected_paged(x, {const}, fused={step.fused!r}, "
                    f"out_quant={_quant_lit(step.out_quant)}, page_size={step.page_size})"
                )
            else:
                calls.append(
                    f"    x = fully_connected(x, {const}, fused={step.fused!r}, "
                    f"out_quant={_quant_lit(step.out_quant)})"
                )
        elif step.kind in ("CONV_2D", "DEPTHWISE_CONV_2D"):
            _emit_folded(const, step, lines)
            lines.append("")
            fn = "conv2d" if step.kind == "CONV_2D" else "depthwise_conv2d"
            attrs = {
                "padding": step.attrs["padding"],
                "stride_h": step.attrs["stride_h"],
                "stride_w": step.attrs["stride_w"],
            }
            calls.append(
                f"    x = {fn}(x, {const}, attrs={attrs!r}, fused={step.fused!r}, "
                f"out_quant={_quant_lit(step.out_quant)})"
            )
        elif step.kind == "AVERAGE_POOL_2D":
            attrs = {
                "padding": step.attrs["padding"],
                "stride_h": step.attrs["stride_h"],
                "stride_w": step.attrs["stride_w"],
                "filter_h": step.attrs["filter_h"],
                "filter_w": step.attrs["filter_w"],
            }
            calls.append(
                f"    x = average_pool2d(x, attrs={attrs!r}, fused={step.fused!r}, "
                f"out_quant={_quant_lit(step.out_quant)}, in_quant={_quant_lit(step.in_quant)})"
            )
        elif step.kind == "RESHAPE":
            calls.append(f"    x = reshape(x, {tuple(step.attrs['new_shape'])})")
        elif step.kind == "SOFTMAX":
            calls.append(
                f"    x = softmax(x, in_quant={_quant_lit(step.in_quant)}, "
                f"out_quant={_quant_lit(step.out_quant)})"
            )
        else:
            raise UnsupportedError(f"emitter cannot express step kind {step.kind!r}")

    lines.append("")
    lines.append("def predict(values):")
    lines.append('    """Run one inference over a flat int8 array of INPUT_SIZE elements."""')
    lines.append("    x = np.asarray(values, dtype=np.int8)")
    lines.append("    if x.size != INPUT_SIZE:")
    lines.append('        raise ValueError(f"expected {INPUT_SIZE} input elements, got {x.size}")')
    lines.append("    x = x.reshape(INPUT_SHAPE)")
    lines.extend(calls)
    lines.append("    return x.reshape(OUTPUT_SIZE)")
    lines.append("")
    return "\n".join(lines)


def set_paging(p: CompiledPlan, directives: dict[int, int]) -> CompiledPlan:
    """New plan with page_size set on the given FULLY_CONNECTED steps."""
    steps = []
    for idx, step in enumerate(p.steps):
        if idx in directives:
            if step.kind != "FULLY_CONNECTED":
                raise UnsupportedError(f"step {idx} ({step.kind}) cannot be paged")
            steps.append(replace(step, page_size=directives[idx]))
        else:
            steps.append(step)
    return replace(p, steps=steps)
