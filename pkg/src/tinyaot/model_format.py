"""Canonical on-disk model container ("MFJ") and its validation.

MFJ is a plain JSON format mirroring the tensor/operator structure of a
quantized model:

    {"version": 1,
     "tensors": [{"name", "shape", "dtype", "scale", "zero_point", "data"?}, ...],
     "operators": [{"op", "inputs", "output", "options"}, ...],
     "model_input": int,
     "model_output": int}

Tensors carry per-tensor quantization (scalar scale + zero point).
"data" is a flat row-major integer array, present iff the tensor is a
constant (weights, filters, biases). Element types are "i8" for
activations/weights and "i32" for biases.

Operators form a single linear chain: each operator has exactly one
non-constant input (the activation) and one output, and operator k's
activation is either the model input or operator k-1's output.

Layout conventions fixed by this schema:
  * 4-D tensors are batch-height-width-channel, row-major.
  * FULLY_CONNECTED weights are stored output-major, shape [p, n] for a
    layer with n inputs and p outputs (rows are output neurons), which
    keeps converted weight payloads byte-identical to their source
    containers. The compiler transposes into its [n, p] working form.
  * CONV_2D filters are [f, fh, fw, c]; DEPTHWISE_CONV_2D filters are
    [1, fh, fw, k].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FormatError, RangeError
from .quant import I8_MAX, I8_MIN, I32_MAX, I32_MIN, QuantParams

OP_KINDS = (
    "FULLY_CONNECTED",
    "CONV_2D",
    "DEPTHWISE_CONV_2D",
    "AVERAGE_POOL_2D",
    "RESHAPE",
    "SOFTMAX",
)
ACTIVATIONS = ("NONE", "RELU", "RELU6")
PADDINGS = ("SAME", "VALID")

DTYPE_RANGES = {"i8": (I8_MIN, I8_MAX), "i32": (I32_MIN, I32_MAX)}

# Option keys allowed / required per operator kind. "fused_activation" is
# accepted on every op but must be NONE where the op cannot fuse.
_WINDOW_OPTS = {"padding", "stride_h", "stride_w"}
ALLOWED_OPTIONS = {
    "FULLY_CONNECTED": {"fused_activation"},
    "CONV_2D": _WINDOW_OPTS | {"fused_activation"},
    "DEPTHWISE_CONV_2D": _WINDOW_OPTS | {"fused_activation"},
    "AVERAGE_POOL_2D": _WINDOW_OPTS | {"filter_h", "filter_w", "fused_activation"},
    "RESHAPE": {"new_shape", "fused_activation"},
    "SOFTMAX": {"fused_activation"},
}
REQUIRED_OPTIONS = {
    "FULLY_CONNECTED": set(),
    "CONV_2D": _WINDOW_OPTS,
    "DEPTHWISE_CONV_2D": _WINDOW_OPTS,
    "AVERAGE_POOL_2D": _WINDOW_OPTS | {"filter_h", "filter_w"},
    "RESHAPE": {"new_shape"},
    "SOFTMAX": set(),
}
# Ops whose kernels cannot apply a fused activation.
NO_FUSE = {"RESHAPE", "SOFTMAX"}
# Ops taking (activation, weights, bias); the rest take the activation only.
THREE_INPUT_OPS = {"FULLY_CONNECTED", "CONV_2D", "DEPTHWISE_CONV_2D"}


@dataclass
class Tensor:
    name: str
    shape: tuple[int, ...]
    dtype: str
    quant: QuantParams
    data: Optional[np.ndarray] = None  # flat int64 payload, row-major

    @property
    def is_constant(self) -> bool:
        return self.data is not None

    def num_elements(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


@dataclass
class OpNode:
    op: str
    inputs: list[int]
    output: int
    options: dict = field(default_factory=dict)

    def fused(self) -> str:
        return self.options.get("fused_activation", "NONE")


@dataclass
class ModelFile:
    version: int
    tensors: list[Tensor]
    operators: list[OpNode]
    model_input: int
    model_output: int


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    kind: str  # "model" | "tensor" | "op"
    index: Optional[int]
    message: str

    def __str__(self):
        where = self.kind if self.index is None else f"{self.kind}[{self.index}]"
        return f"{self.severity}: {where}: {self.message}"


def _expect(cond, message, path):
    if not cond:
        raise FormatError(message, path=path)


def _parse_int(value, path):
    # bool is an int subclass; reject it explicitly
    _expect(isinstance(value, int) and not isinstance(value, bool), "expected an integer", path)
    return value


def _parse_tensor(obj, path) -> Tensor:
    _expect(isinstance(obj, dict), "expected a tensor object", path)
    known = {"name", "shape", "dtype", "scale", "zero_point", "data"}
    for key in obj:
        _expect(key in known, f"unknown key {key!r}", path)
    for key in ("name", "shape", "dtype", "scale", "zero_point"):
        _expect(key in obj, f"missing key {key!r}", path)

    name = obj["name"]
    _expect(isinstance(name, str), "name must be a string", f"{path}.name")

    shape = obj["shape"]
    _expect(isinstance(shape, list) and len(shape) >= 1, "shape must be a non-empty list", f"{path}.shape")
    dims = tuple(_parse_int(d, f"{path}.shape") for d in shape)
    _expect(all(d > 0 for d in dims), "shape dims must be positive", f"{path}.shape")

    dtype = obj["dtype"]
    _expect(dtype in DTYPE_RANGES, f"dtype must be one of {sorted(DTYPE_RANGES)}", f"{path}.dtype")

    scale = obj["scale"]
    _expect(isinstance(scale, (int, float)) and not isinstance(scale, bool), "scale must be a number", f"{path}.scale")
    scale = float(scale)
    _expect(math.isfinite(scale) and scale > 0, "scale must be positive and finite", f"{path}.scale")

    zero_point = _parse_int(obj["zero_point"], f"{path}.zero_point")
    lo, hi = DTYPE_RANGES[dtype]
    _expect(lo <= zero_point <= hi, f"zero_point {zero_point} outside {dtype} range", f"{path}.zero_point")

    data = None
    if "data" in obj:
        raw = obj["data"]
        _expect(isinstance(raw, list), "data must be a flat integer array", f"{path}.data")
        n = 1
        for d in dims:
            n *= d
        if len(raw) != n:
            raise FormatError(
                f"tensor {name!r}: data length {len(raw)} != product(shape) {n}", path=f"{path}.data"
            )
        values = [_parse_int(v, f"{path}.data") for v in raw]
        for v in values:
            if not (lo <= v <= hi):
                raise RangeError(f"{path}.data: tensor {name!r}: value {v} outside {dtype} range [{lo}, {hi}]")
        data = np.array(values, dtype=np.int64)

    return Tensor(name=name, shape=dims, dtype=dtype, quant=QuantParams(scale, zero_point), data=data)


def _parse_operator(obj, path) -> OpNode:
    _expect(isinstance(obj, dict), "expected an operator object", path)
    known = {"op", "inputs", "output", "options"}
    for key in obj:
        _expect(key in known, f"unknown key {key!r}", path)
    for key in ("op", "inputs", "output"):
        _expect(key in obj, f"missing key {key!r}", path)

    op = obj["op"]
    _expect(isinstance(op, str), "op must be a string", f"{path}.op")
    _expect(op in OP_KINDS, f"unknown op {op!r}", f"{path}.op")

    inputs = obj["inputs"]
    _expect(isinstance(inputs, list) and inputs, "inputs must be a non-empty list", f"{path}.inputs")
    inputs = [_parse_int(i, f"{path}.inputs") for i in inputs]
    output = _parse_int(obj["output"], f"{path}.output")

    options = obj.get("options", {})
    _expect(isinstance(options, dict), "options must be an object", f"{path}.options")
    parsed = {}
    for key, value in options.items():
        opath = f"{path}.options.{key}"
        _expect(key in ALLOWED_OPTIONS[op], f"option {key!r} not allowed on {op}", opath)
        if key == "fused_activation":
            _expect(value in ACTIVATIONS, f"fused_activation must be one of {ACTIVATIONS}", opath)
            parsed[key] = value
        elif key == "padding":
            _expect(value in PADDINGS, f"padding must be one of {PADDINGS}", opath)
            parsed[key] = value
        elif key == "new_shape":
            _expect(isinstance(value, list) and value, "new_shape must be a non-empty list", opath)
            dims = [_parse_int(d, opath) for d in value]
            _expect(all(d > 0 for d in dims), "new_shape dims must be positive", opath)
            parsed[key] = dims
        else:  # stride_h / stride_w / filter_h / filter_w
            v = _parse_int(value, opath)
            _expect(v >= 1, f"{key} must be >= 1", opath)
            parsed[key] = v
    return OpNode(op=op, inputs=inputs, output=output, options=parsed)


def load_model(path) -> ModelFile:
    """Load and validate an MFJ file.

    Raises OSError for unreadable files, FormatError for schema
    violations (with the offending JSON path), and RangeError for data
    outside the element type's range. The returned model satisfies every
    structural invariant checked by validate_model.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}", path="$") from exc

    _expect(isinstance(obj, dict), "top level must be an object", "$")
    known = {"version", "tensors", "operators", "model_input", "model_output"}
    for key in obj:
        _expect(key in known, f"unknown key {key!r}", "$")
    for key in known:
        _expect(key in obj, f"missing key {key!r}", "$")

    version = _parse_int(obj["version"], "$.version")
    _expect(version == 1, f"unsupported version {version}", "$.version")

    _expect(isinstance(obj["tensors"], list), "tensors must be a list", "$.tensors")
    tensors = [_parse_tensor(t, f"$.tensors[{i}]") for i, t in enumerate(obj["tensors"])]
    _expect(isinstance(obj["operators"], list), "operators must be a list", "$.operators")
    operators = [_parse_operator(o, f"$.operators[{i}]") for i, o in enumerate(obj["operators"])]

    model = ModelFile(
        version=version,
        tensors=tensors,
        operators=operators,
        model_input=_parse_int(obj["model_input"], "$.model_input"),
        model_output=_parse_int(obj["model_output"], "$.model_output"),
    )
    errors = [d for d in validate_model(model) if d.severity == "error"]
    if errors:
        raise FormatError("; ".join(str(d) for d in errors), path="$")
    return model


def dumps_model(m: ModelFile) -> str:
    """Serialize to canonical MFJ text: sorted keys, 2-space indent,
    shortest round-tripping float representation, trailing newline."""
    tensors = []
    for t in m.tensors:
        obj = {
            "name": t.name,
            "shape": list(t.shape),
            "dtype": t.dtype,
            "scale": t.quant.scale,
            "zero_point": t.quant.zero_point,
        }
        if t.data is not None:
            obj["data"] = [int(v) for v in t.data]
        tensors.append(obj)
    operators = [
        {"op": op.op, "inputs": list(op.inputs), "output": op.output, "options": op.options}
        for op in m.operators
    ]
    doc = {
        "version": m.version,
        "tensors": tensors,
        "operators": operators,
        "model_input": m.model_input,
        "model_output": m.model_output,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_model(m: ModelFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(m))


def _activation_input(m: ModelFile, op: OpNode) -> Optional[int]:
    """Index of the op's unique non-constant input, or None if malformed."""
    non_const = [i for i in op.inputs if 0 <= i < len(m.tensors) and not m.tensors[i].is_constant]
    return non_const[0] if len(non_const) == 1 else None


def validate_model(m: ModelFile) -> list[Diagnostic]:
    """Check every structural invariant. Returns diagnostics, empty iff valid."""
    diags: list[Diagnostic] = []

    def err(kind, index, message):
        diags.append(Diagnostic("error", kind, index, message))

    nt = len(m.tensors)
    if m.version != 1:
        err("model", None, f"unsupported version {m.version}")
    if not m.operators:
        err("model", None, "model has no operators")
    if not (0 <= m.model_input < nt):
        err("model", None, f"model_input {m.model_input} out of range")
    if not (0 <= m.model_output < nt):
        err("model", None, f"model_output {m.model_output} out of range")

    for i, t in enumerate(m.tensors):
        lo, hi = DTYPE_RANGES[t.dtype]
        if not (lo <= t.quant.zero_point <= hi):
            err("tensor", i, f"zero_point {t.quant.zero_point} outside {t.dtype} range")
        if t.data is not None:
            if len(t.data) != t.num_elements():
                err("tensor", i, f"data length {len(t.data)} != product(shape) {t.num_elements()}")
            elif len(t.data) and (t.data.min() < lo or t.data.max() > hi):
                err("tensor", i, f"data outside {t.dtype} range")

    if 0 <= m.model_input < nt:
        t = m.tensors[m.model_input]
        if t.dtype != "i8":
            err("model", None, "model input must be i8")
        if t.is_constant:
            err("model", None, "model input must not be a constant tensor")

    bias_positions = set()  # tensor indices used in a bias slot
    for k, op in enumerate(m.operators):
        indices_ok = all(0 <= i < nt for i in op.inputs) and 0 <= op.output < nt
        if not indices_ok:
            err("op", k, "input/output tensor index out of range")
            continue

        want = 3 if op.op in THREE_INPUT_OPS else 1
        if len(op.inputs) != want:
            err("op", k, f"{op.op} takes {want} inputs, got {len(op.inputs)}")

        for key in REQUIRED_OPTIONS[op.op]:
            if key not in op.options:
                err("op", k, f"{op.op} missing required option {key!r}")
        for key in op.options:
            if key not in ALLOWED_OPTIONS[op.op]:
                err("op", k, f"option {key!r} not allowed on {op.op}")
        if op.op in NO_FUSE and op.fused() != "NONE":
            err("op", k, f"{op.op} is standalone and cannot carry a fused activation")

        out = m.tensors[op.output]
        if out.is_constant:
            err("op", k, "output tensor must not be constant")
        if out.dtype != "i8":
            err("op", k, "output tensor must be i8")

        non_const = [i for i in op.inputs if not m.tensors[i].is_constant]
        if len(non_const) != 1:
            err("op", k, f"expected exactly one non-constant input, got {len(non_const)}")
        else:
            act = m.tensors[non_const[0]]
            if act.dtype != "i8":
                err("op", k, "activation input must be i8")

        if op.op in THREE_INPUT_OPS and len(op.inputs) == 3:
            w, b = m.tensors[op.inputs[1]], m.tensors[op.inputs[2]]
            if not w.is_constant:
                err("op", k, "weights/filter input must be a constant tensor")
            if w.dtype != "i8":
                err("op", k, "weights/filter must be i8")
            if not b.is_constant:
                err("op", k, "bias input must be a constant tensor")
            if b.dtype not in ("i32", "i8"):
                err("op", k, "bias must be i32 or i8")
            bias_positions.add(op.inputs[2])

        if op.op == "RESHAPE":
            src = m.tensors[op.inputs[0]]
            if src.quant != out.quant:
                err("op", k, "RESHAPE must preserve quantization parameters")

    for i, t in enumerate(m.tensors):
        if t.dtype == "i32" and i not in bias_positions:
            err("tensor", i, "i32 is permitted only for bias tensors")

    # Chain linearity: op k's activation is the model input (k = 0) or
    # op k-1's output; the last output is the model output.
    prev_out = m.model_input
    for k, op in enumerate(m.operators):
        act = _activation_input(m, op)
        if act is None:
            continue  # already reported above
        if act != prev_out:
            err("op", k, f"activation input {act} breaks the chain (expected {prev_out})")
        prev_out = op.output
    if m.operators and m.operators[-1].output != m.model_output:
        err("model", None, "last operator's output is not model_output")

    return diags
