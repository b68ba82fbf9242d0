#!/usr/bin/env python3
"""Build TFLite flatbuffer fixtures for the converter tests.

Writes four files plus a JSON manifest each into tests/fixtures/:

  speech.tflite      4 ops (DepthwiseConv2D, Reshape, FullyConnected,
                     Softmax), the wake-word recognizer topology
  person.tflite      30 ops (Conv2D, 13x(DepthwiseConv2D, Conv2D),
                     AveragePool2D, Conv2D, Softmax), the person-detector
                     topology at 96x96x1
  unsupported.tflite contains a MAX_POOL_2D op, for rejection tests
  perchannel.tflite  conv filter with per-channel scales, for rejection

All tensors are int8 with per-tensor quantization (weights symmetric,
zero point 0) and int32 biases with scale = s_in * s_w, zero point 0.
Weights are seeded random, so fixtures are reproducible. The manifest
records every constant payload (base64 of the raw bytes) and the
quantization parameters the converter is expected to reproduce.

Pass --check to also load and invoke each model through
tf.lite.Interpreter (slow import; requires tensorflow).
"""

import argparse
import base64
import json
import sys
from pathlib import Path

import flatbuffers
import numpy as np

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# enum values from the TFLite schema
TENSOR_INT8 = 9
TENSOR_INT32 = 2
ACT = {"NONE": 0, "RELU": 1, "RELU6": 3}
PAD = {"SAME": 0, "VALID": 1}
BUILTIN = {
    "AVERAGE_POOL_2D": 1,
    "CONV_2D": 3,
    "DEPTHWISE_CONV_2D": 4,
    "FULLY_CONNECTED": 9,
    "MAX_POOL_2D": 17,
    "RESHAPE": 22,
    "SOFTMAX": 25,
}
OPTIONS_TYPE = {
    "CONV_2D": 1,
    "DEPTHWISE_CONV_2D": 2,
    "AVERAGE_POOL_2D": 5,
    "MAX_POOL_2D": 5,
    "FULLY_CONNECTED": 8,
    "SOFTMAX": 9,
    "RESHAPE": 17,
}


def _end_vector(builder, count):
    try:
        return builder.EndVector()
    except TypeError:  # older flatbuffers releases take the count
        return builder.EndVector(count)


def int32_vector(builder, values):
    builder.StartVector(4, len(values), 4)
    for v in reversed(values):
        builder.PrependInt32(int(v))
    return _end_vector(builder, len(values))


def int64_vector(builder, values):
    builder.StartVector(8, len(values), 8)
    for v in reversed(values):
        builder.PrependInt64(int(v))
    return _end_vector(builder, len(values))


def float32_vector(builder, values):
    builder.StartVector(4, len(values), 4)
    for v in reversed(values):
        builder.PrependFloat32(float(v))
    return _end_vector(builder, len(values))


def offset_vector(builder, offsets):
    builder.StartVector(4, len(offsets), 4)
    for off in reversed(offsets):
        builder.PrependUOffsetTRelative(off)
    return _end_vector(builder, len(offsets))


class TensorSpec:
    def __init__(self, name, shape, dtype, scales, zero_points, data=None):
        self.name = name
        self.shape = list(shape)
        self.dtype = dtype
        self.scales = list(scales)
        self.zero_points = list(zero_points)
        self.data = data  # raw bytes or None


class OpSpec:
    def __init__(self, kind, inputs, outputs, options=None, version=1):
        self.kind = kind
        self.inputs = inputs
        self.outputs = outputs
        self.options = options or {}
        self.version = version


def build_options(builder, op: OpSpec):
    kind, opt = op.kind, op.options
    if kind in ("CONV_2D",):
        builder.StartObject(6)
        builder.PrependInt8Slot(0, PAD[opt["padding"]], 0)
        builder.PrependInt32Slot(1, opt["stride_w"], 0)
        builder.PrependInt32Slot(2, opt["stride_h"], 0)
        builder.PrependInt8Slot(3, ACT[opt["fused"]], 0)
        return builder.EndObject()
    if kind == "DEPTHWISE_CONV_2D":
        builder.StartObject(7)
        builder.PrependInt8Slot(0, PAD[opt["padding"]], 0)
        builder.PrependInt32Slot(1, opt["stride_w"], 0)
        builder.PrependInt32Slot(2, opt["stride_h"], 0)
        builder.PrependInt32Slot(3, opt["depth_multiplier"], 0)
        builder.PrependInt8Slot(4, ACT[opt["fused"]], 0)
        return builder.EndObject()
    if kind in ("AVERAGE_POOL_2D", "MAX_POOL_2D"):
        builder.StartObject(6)
        builder.PrependInt8Slot(0, PAD[opt["padding"]], 0)
        builder.PrependInt32Slot(1, opt["stride_w"], 0)
        builder.PrependInt32Slot(2, opt["stride_h"], 0)
        builder.PrependInt32Slot(3, opt["filter_w"], 0)
        builder.PrependInt32Slot(4, opt["filter_h"], 0)
        builder.PrependInt8Slot(5, ACT[opt["fused"]], 0)
        return builder.EndObject()
    if kind == "FULLY_CONNECTED":
        builder.StartObject(5)
        builder.PrependInt8Slot(0, ACT[opt["fused"]], 0)
        return builder.EndObject()
    if kind == "RESHAPE":
        shape_off = int32_vector(builder, opt["new_shape"])
        builder.StartObject(1)
        builder.PrependUOffsetTRelativeSlot(0, shape_off, 0)
        return builder.EndObject()
    if kind == "SOFTMAX":
        builder.StartObject(1)
        builder.PrependFloat32Slot(0, opt.get("beta", 1.0), 0.0)
        return builder.EndObject()
    raise ValueError(kind)


def write_tflite(path, tensors, ops, graph_input, graph_output, description):
    builder = flatbuffers.Builder(1024)

    # buffers: index 0 is the conventional empty sentinel
    buffer_offsets = []
    builder.StartObject(1)
    buffer_offsets.append(builder.EndObject())
    tensor_buffer_index = []
    for t in tensors:
        if t.data is None:
            tensor_buffer_index.append(0)
            continue
        data_off = builder.CreateByteVector(t.data)
        builder.StartObject(1)
        builder.PrependUOffsetTRelativeSlot(0, data_off, 0)
        buffer_offsets.append(builder.EndObject())
        tensor_buffer_index.append(len(buffer_offsets) - 1)

    tensor_offsets = []
    for t, buf in zip(tensors, tensor_buffer_index):
        scale_off = float32_vector(builder, t.scales)
        zp_off = int64_vector(builder, t.zero_points)
        builder.StartObject(7)
        builder.PrependUOffsetTRelativeSlot(2, scale_off, 0)
        builder.PrependUOffsetTRelativeSlot(3, zp_off, 0)
        quant_off = builder.EndObject()
        name_off = builder.CreateString(t.name)
        shape_off = int32_vector(builder, t.shape)
        builder.StartObject(10)
        builder.PrependUOffsetTRelativeSlot(0, shape_off, 0)
        builder.PrependInt8Slot(1, t.dtype, 0)
        builder.PrependUint32Slot(2, buf, 0)
        builder.PrependUOffsetTRelativeSlot(3, name_off, 0)
        builder.PrependUOffsetTRelativeSlot(4, quant_off, 0)
        tensor_offsets.append(builder.EndObject())

    kinds_in_use = []
    for op in ops:
        if op.kind not in kinds_in_use:
            kinds_in_use.append(op.kind)
    opcode_offsets = []
    for kind in kinds_in_use:
        code = BUILTIN[kind]
        builder.StartObject(4)
        builder.PrependInt8Slot(0, code, 0)
        builder.PrependInt32Slot(2, 1, 1)
        builder.PrependInt32Slot(3, code, 0)
        opcode_offsets.append(builder.EndObject())

    op_offsets = []
    for op in ops:
        options_off = build_options(builder, op)
        inputs_off = int32_vector(builder, op.inputs)
        outputs_off = int32_vector(builder, op.outputs)
        builder.StartObject(9)
        builder.PrependUint32Slot(0, kinds_in_use.index(op.kind), 0)
        builder.PrependUOffsetTRelativeSlot(1, inputs_off, 0)
        builder.PrependUOffsetTRelativeSlot(2, outputs_off, 0)
        builder.PrependUint8Slot(3, OPTIONS_TYPE[op.kind], 0)
        builder.PrependUOffsetTRelativeSlot(4, options_off, 0)
        op_offsets.append(builder.EndObject())

    tensors_off = offset_vector(builder, tensor_offsets)
    inputs_off = int32_vector(builder, [graph_input])
    outputs_off = int32_vector(builder, [graph_output])
    operators_off = offset_vector(builder, op_offsets)
    name_off = builder.CreateString("main")
    builder.StartObject(5)
    builder.PrependUOffsetTRelativeSlot(0, tensors_off, 0)
    builder.PrependUOffsetTRelativeSlot(1, inputs_off, 0)
    builder.PrependUOffsetTRelativeSlot(2, outputs_off, 0)
    builder.PrependUOffsetTRelativeSlot(3, operators_off, 0)
    builder.PrependUOffsetTRelativeSlot(4, name_off, 0)
    subgraph_off = builder.EndObject()

    subgraphs_off = offset_vector(builder, [subgraph_off])
    opcodes_off = offset_vector(builder, opcode_offsets)
    buffers_off = offset_vector(builder, buffer_offsets)
    desc_off = builder.CreateString(description)
    builder.StartObject(8)
    builder.PrependUint32Slot(0, 3, 0)  # schema version 3
    builder.PrependUOffsetTRelativeSlot(1, opcodes_off, 0)
    builder.PrependUOffsetTRelativeSlot(2, subgraphs_off, 0)
    builder.PrependUOffsetTRelativeSlot(3, desc_off, 0)
    builder.PrependUOffsetTRelativeSlot(4, buffers_off, 0)
    model_off = builder.EndObject()

    builder.Finish(model_off, file_identifier=b"TFL3")
    data = bytes(builder.Output())
    path.write_bytes(data)
    return data


def f32(x):
    return float(np.float32(x))


class GraphBuilder:
    """Collects tensor/op specs and the expected-conversion manifest."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.tensors = []
        self.ops = []

    def add_activation(self, name, shape, scale, zero):
        self.tensors.append(TensorSpec(name, shape, TENSOR_INT8, [scale], [zero]))
        return len(self.tensors) - 1

    def add_weights(self, name, shape, scale):
        values = self.rng.integers(-127, 128, size=int(np.prod(shape)), dtype=np.int64)
        data = values.astype(np.int8).tobytes()
        self.tensors.append(TensorSpec(name, shape, TENSOR_INT8, [scale], [0], data))
        return len(self.tensors) - 1

    def add_bias(self, name, length, scale, spread=2000):
        values = self.rng.integers(-spread, spread + 1, size=length, dtype=np.int64)
        data = values.astype("<i4").tobytes()
        self.tensors.append(TensorSpec(name, [length], TENSOR_INT32, [scale], [0], data))
        return len(self.tensors) - 1

    def manifest(self, path, input_index, output_index):
        doc = {
            "file": path.name,
            "operators": len(self.ops),
            "op_kinds": [op.kind for op in self.ops],
            "input_shape": self.tensors[input_index].shape,
            "output_shape": self.tensors[output_index].shape,
            "tensors": {
                t.name: {
                    "dtype": "i8" if t.dtype == TENSOR_INT8 else "i32",
                    "shape": t.shape,
                    "scale": t.scales[0],
                    "zero_point": t.zero_points[0],
                    **({"data_b64": base64.b64encode(t.data).decode()} if t.data else {}),
                }
                for t in self.tensors
            },
        }
        path.with_suffix(".manifest.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def make_speech(path):
    g = GraphBuilder(seed=101)
    s_in, s_filt = f32(0.5), f32(0.01)
    s_dw, s_fcw = f32(6 / 255), f32(0.008)
    inp = g.add_activation("input", [1, 49, 40, 1], s_in, 2)
    filt = g.add_weights("dw/filter", [1, 10, 8, 8], s_filt)
    dwb = g.add_bias("dw/bias", 8, f32(s_in * s_filt))
    dw_out = g.add_activation("dw/out", [1, 25, 20, 8], s_dw, -128)
    shape_t = len(g.tensors)
    g.tensors.append(
        TensorSpec("reshape/shape", [2], TENSOR_INT32, [1.0], [0],
                   np.array([1, 4000], dtype="<i4").tobytes())
    )
    flat = g.add_activation("flatten", [1, 4000], s_dw, -128)
    fcw = g.add_weights("fc/weights", [4, 4000], s_fcw)
    fcb = g.add_bias("fc/bias", 4, f32(s_dw * s_fcw))
    fc_out = g.add_activation("fc/out", [1, 4], f32(0.3), 5)
    probs = g.add_activation("probabilities", [1, 4], f32(1 / 256), -128)
    g.ops = [
        OpSpec("DEPTHWISE_CONV_2D", [inp, filt, dwb], [dw_out],
               {"padding": "SAME", "stride_w": 2, "stride_h": 2,
                "depth_multiplier": 8, "fused": "RELU"}, version=3),
        OpSpec("RESHAPE", [dw_out, shape_t], [flat], {"new_shape": [1, 4000]}),
        OpSpec("FULLY_CONNECTED", [flat, fcw, fcb], [fc_out], {"fused": "NONE"}, version=4),
        OpSpec("SOFTMAX", [fc_out], [probs], {"beta": 1.0}, version=2),
    ]
    write_tflite(path, g.tensors, g.ops, inp, probs, "wake-word recognizer fixture")
    g.manifest(path, inp, probs)


def make_person(path):
    g = GraphBuilder(seed=202)
    relu6_scale = f32(6 / 255)

    current = g.add_activation("input", [1, 96, 96, 1], f32(1 / 128), 0)
    h = w = 96
    c = 1

    def conv(tag, out_c, stride, fused, kh=3, kw=3):
        nonlocal current, h, w, c
        s_w = f32(0.02)
        filt = g.add_weights(f"{tag}/filter", [out_c, kh, kw, c], s_w)
        bias = g.add_bias(f"{tag}/bias", out_c, f32(g.tensors[current].scales[0] * s_w), spread=500)
        h = -(-h // stride)
        w = -(-w // stride)
        out_scale = relu6_scale if fused == "RELU6" else f32(0.2)
        out_zero = -128 if fused == "RELU6" else 3
        out = g.add_activation(f"{tag}/out", [1, h, w, out_c], out_scale, out_zero)
        g.ops.append(
            OpSpec("CONV_2D", [current, filt, bias], [out],
                   {"padding": "SAME", "stride_w": stride, "stride_h": stride,
                    "fused": fused}, version=3)
        )
        current, c = out, out_c

    def dwconv(tag, stride):
        nonlocal current, h, w
        s_w = f32(0.03)
        filt = g.add_weights(f"{tag}/filter", [1, 3, 3, c], s_w)
        bias = g.add_bias(f"{tag}/bias", c, f32(g.tensors[current].scales[0] * s_w), spread=500)
        h = -(-h // stride)
        w = -(-w // stride)
        out = g.add_activation(f"{tag}/out", [1, h, w, c], relu6_scale, -128)
        g.ops.append(
            OpSpec("DEPTHWISE_CONV_2D", [current, filt, bias], [out],
                   {"padding": "SAME", "stride_w": stride, "stride_h": stride,
                    "depth_multiplier": 1, "fused": "RELU6"}, version=3)
        )
        current = out

    conv("conv0", 8, 2, "RELU6")
    widths = [16, 32, 32, 64, 64, 128, 128, 128, 128, 128, 128, 256, 256]
    strides = [1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1]
    for i, (width, stride) in enumerate(zip(widths, strides), start=1):
        dwconv(f"dw{i}", stride)
        conv(f"pw{i}", width, 1, "RELU6", kh=1, kw=1)

    pooled = g.add_activation("pool/out", [1, 1, 1, c], g.tensors[current].scales[0], -128)
    g.ops.append(
        OpSpec("AVERAGE_POOL_2D", [current], [pooled],
               {"padding": "VALID", "stride_w": 3, "stride_h": 3,
                "filter_w": 3, "filter_h": 3, "fused": "NONE"}, version=2)
    )
    current, h, w = pooled, 1, 1
    conv("logits", 2, 1, "NONE", kh=1, kw=1)
    probs = g.add_activation("probabilities", [1, 1, 1, 2], f32(1 / 256), -128)
    g.ops.append(OpSpec("SOFTMAX", [current], [probs], {"beta": 1.0}, version=2))

    input_index = 0
    write_tflite(path, g.tensors, g.ops, input_index, probs, "person detector fixture")
    g.manifest(path, input_index, probs)
    assert len(g.ops) == 30, len(g.ops)


def make_unsupported(path):
    g = GraphBuilder(seed=3)
    inp = g.add_activation("input", [1, 4, 4, 1], f32(0.1), 0)
    out = g.add_activation("output", [1, 2, 2, 1], f32(0.1), 0)
    g.ops = [
        OpSpec("MAX_POOL_2D", [inp], [out],
               {"padding": "VALID", "stride_w": 2, "stride_h": 2,
                "filter_w": 2, "filter_h": 2, "fused": "NONE"})
    ]
    write_tflite(path, g.tensors, g.ops, inp, out, "unsupported op fixture")


def make_perchannel(path):
    g = GraphBuilder(seed=4)
    inp = g.add_activation("input", [1, 4, 4, 1], f32(0.1), 0)
    filt_values = g.rng.integers(-127, 128, size=2 * 3 * 3 * 1, dtype=np.int64)
    g.tensors.append(
        TensorSpec("conv/filter", [2, 3, 3, 1], TENSOR_INT8,
                   [f32(0.01), f32(0.02)], [0, 0], filt_values.astype(np.int8).tobytes())
    )
    filt = len(g.tensors) - 1
    bias = g.add_bias("conv/bias", 2, f32(0.001))
    out = g.add_activation("output", [1, 4, 4, 2], f32(0.1), 0)
    g.ops = [
        OpSpec("CONV_2D", [inp, filt, bias], [out],
               {"padding": "SAME", "stride_w": 1, "stride_h": 1, "fused": "NONE"})
    ]
    write_tflite(path, g.tensors, g.ops, inp, out, "per-channel fixture")


def check_with_tensorflow(paths):
    import tensorflow as tf  # deferred: slow import

    for path in paths:
        interpreter = tf.lite.Interpreter(model_path=str(path))
        interpreter.allocate_tensors()
        detail = interpreter.get_input_details()[0]
        rng = np.random.default_rng(0)
        x = rng.integers(-128, 128, size=detail["shape"], dtype=np.int8)
        interpreter.set_tensor(detail["index"], x)
        interpreter.invoke()
        out = interpreter.get_tensor(interpreter.get_output_details()[0]["index"])
        print(f"{path.name}: interpreter ok, output shape {out.shape}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true",
                        help="also run each fixture through tf.lite.Interpreter")
    args = parser.parse_args(argv)

    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_speech(FIXTURES / "speech.tflite")
    make_person(FIXTURES / "person.tflite")
    make_unsupported(FIXTURES / "unsupported.tflite")
    make_perchannel(FIXTURES / "perchannel.tflite")
    for f in sorted(FIXTURES.iterdir()):
        print(f"{f.name}: {f.stat().st_size} bytes")
    if args.check:
        check_with_tensorflow(
            [FIXTURES / "speech.tflite", FIXTURES / "person.tflite"]
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
