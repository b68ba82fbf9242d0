"""Shared model builders and random-chain generators for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tinyaot.model_format import ModelFile, OpNode, Tensor
from tinyaot.quant import QuantParams


def i8_tensor(name, shape, quant, data=None):
    return Tensor(name, tuple(shape), "i8", quant, None if data is None else np.asarray(data, dtype=np.int64).ravel())


def i32_tensor(name, shape, quant, data):
    return Tensor(name, tuple(shape), "i32", quant, np.asarray(data, dtype=np.int64).ravel())


def reshape_model(in_shape=(1, 4), out_shape=(2, 2), quant=QuantParams(0.5, 0)):
    """Smallest legal chain: one RESHAPE between two tensors."""
    return ModelFile(
        version=1,
        tensors=[
            i8_tensor("in", in_shape, quant),
            i8_tensor("out", out_shape, quant),
        ],
        operators=[OpNode("RESHAPE", [0], 1, {"new_shape": list(out_shape)})],
        model_input=0,
        model_output=1,
    )


def fc_chain_model(widths, fused, seed=0, in_quant=QuantParams(0.024, -1)):
    """Dense chain, e.g. widths=[1, 16, 16, 1] with fused=['RELU','RELU','NONE']."""
    assert len(fused) == len(widths) - 1
    rng = np.random.default_rng(seed)
    tensors = [i8_tensor("in", (1, widths[0]), in_quant)]
    operators = []
    prev = 0
    quant = in_quant
    for layer, (n, p) in enumerate(zip(widths, widths[1:])):
        w_quant = QuantParams(float(rng.uniform(0.005, 0.05)), int(rng.integers(-4, 5)))
        b_quant = QuantParams(quant.scale * w_quant.scale, 0)
        out_quant = QuantParams(float(rng.uniform(0.01, 0.08)), int(rng.integers(-8, 9)))
        w = rng.integers(-127, 128, size=p * n)
        b = rng.integers(-2000, 2001, size=p)
        base = len(tensors)
        tensors += [
            i8_tensor(f"fc{layer}/w", (p, n), w_quant, w),
            i32_tensor(f"fc{layer}/b", (p,), b_quant, b),
            i8_tensor(f"fc{layer}/out", (1, p), out_quant),
        ]
        operators.append(
            OpNode("FULLY_CONNECTED", [prev, base, base + 1], base + 2, {"fused_activation": fused[layer]})
        )
        prev = base + 2
        quant = out_quant
    return ModelFile(1, tensors, operators, 0, prev)


def sine_model(seed=0):
    """1 -> 16 -> 16 -> 1 dense chain, first two layers with fused ReLU."""
    return fc_chain_model([1, 16, 16, 1], ["RELU", "RELU", "NONE"], seed=seed)


def single_fc_model(n, p, seed=0, fused="NONE"):
    return fc_chain_model([n, p], [fused], seed=seed, in_quant=QuantParams(0.05, 3))


def tinyconv_model(seed=0):
    """Speech-recognizer shape: depthwise front end, flatten, dense, softmax."""
    rng = np.random.default_rng(seed)
    in_quant = QuantParams(0.05, 2)
    f_quant = QuantParams(0.01, 0)
    dw_out = QuantParams(0.04, -3)
    fc_out = QuantParams(0.1, 1)
    sm_out = QuantParams(1 / 256, -128)
    filt = rng.integers(-127, 128, size=1 * 10 * 8 * 8)
    dw_bias = rng.integers(-1000, 1001, size=8)
    w = rng.integers(-127, 128, size=4 * 4000)
    b = rng.integers(-1000, 1001, size=4)
    tensors = [
        i8_tensor("in", (1, 49, 40, 1), in_quant),
        i8_tensor("dw/filter", (1, 10, 8, 8), f_quant, filt),
        i32_tensor("dw/bias", (8,), QuantParams(in_quant.scale * f_quant.scale, 0), dw_bias),
        i8_tensor("dw/out", (1, 25, 20, 8), dw_out),
        i8_tensor("flat", (1, 4000), dw_out),
        i8_tensor("fc/w", (4, 4000), QuantParams(0.008, 0), w),
        i32_tensor("fc/b", (4,), QuantParams(dw_out.scale * 0.008, 0), b),
        i8_tensor("fc/out", (1, 4), fc_out),
        i8_tensor("probs", (1, 4), sm_out),
    ]
    operators = [
        OpNode(
            "DEPTHWISE_CONV_2D",
            [0, 1, 2],
            3,
            {"padding": "SAME", "stride_h": 2, "stride_w": 2, "fused_activation": "RELU"},
        ),
        OpNode("RESHAPE", [3], 4, {"new_shape": [1, 4000]}),
        OpNode("FULLY_CONNECTED", [4, 5, 6], 7, {"fused_activation": "NONE"}),
        OpNode("SOFTMAX", [7], 8, {}),
    ]
    return ModelFile(1, tensors, operators, 0, 8)


def small_conv_model(seed=0):
    """Conv / pool / flatten / dense / softmax over a 6x6x2 input."""
    rng = np.random.default_rng(seed)
    in_q = QuantParams(0.08, -4)
    conv_f_q = QuantParams(0.015, 1)
    conv_out_q = QuantParams(0.06, 5)
    pool_out_q = QuantParams(0.05, 0)
    fc_out_q = QuantParams(0.09, -2)
    sm_q = QuantParams(1 / 256, -128)
    filt = rng.integers(-127, 128, size=3 * 3 * 3 * 2)
    cbias = rng.integers(-500, 501, size=3)
    w = rng.integers(-127, 128, size=3 * 27)
    b = rng.integers(-500, 501, size=3)
    tensors = [
        i8_tensor("in", (1, 6, 6, 2), in_q),
        i8_tensor("conv/f", (3, 3, 3, 2), conv_f_q, filt),
        i32_tensor("conv/b", (3,), QuantParams(in_q.scale * conv_f_q.scale, 0), cbias),
        i8_tensor("conv/out", (1, 6, 6, 3), conv_out_q),
        i8_tensor("pool/out", (1, 3, 3, 3), pool_out_q),
        i8_tensor("flat", (1, 27), pool_out_q),
        i8_tensor("fc/w", (3, 27), QuantParams(0.02, -1), w),
        i32_tensor("fc/b", (3,), QuantParams(pool_out_q.scale * 0.02, 0), b),
        i8_tensor("fc/out", (1, 3), fc_out_q),
        i8_tensor("probs", (1, 3), sm_q),
    ]
    operators = [
        OpNode(
            "CONV_2D",
            [0, 1, 2],
            3,
            {"padding": "SAME", "stride_h": 1, "stride_w": 1, "fused_activation": "RELU6"},
        ),
        OpNode(
            "AVERAGE_POOL_2D",
            [3],
            4,
            {"padding": "VALID", "stride_h": 2, "stride_w": 2, "filter_h": 2, "filter_w": 2,
             "fused_activation": "NONE"},
        ),
        OpNode("RESHAPE", [4], 5, {"new_shape": [1, 27]}),
        OpNode("FULLY_CONNECTED", [5, 6, 7], 8, {"fused_activation": "NONE"}),
        OpNode("SOFTMAX", [8], 9, {}),
    ]
    return ModelFile(1, tensors, operators, 0, 9)


# --- random chain generation --------------------------------------------------


def random_act_quant(rng):
    return QuantParams(float(rng.uniform(0.01, 0.3)), int(rng.integers(-20, 21)))


def softmax_out_quant(rng):
    # Softmax outputs live in [0, 1]; the grid must reach 1.0 without
    # clamping, i.e. scale >= 1 / (127 - zero_point).
    z = int(rng.integers(-128, -119))
    s = float(rng.uniform(1.0 / (127 - z), 1.0 / 200))
    return QuantParams(s, z)


def _append_three_input(rng, tensors, kind, prev, in_shape, name):
    w_quant = QuantParams(float(rng.uniform(0.005, 0.1)), int(rng.integers(-5, 6)))
    out_quant = random_act_quant(rng)
    attrs = {"fused_activation": str(rng.choice(["NONE", "RELU", "RELU6"]))}
    if kind == "FULLY_CONNECTED":
        n = in_shape[1]
        p = int(rng.integers(1, 9))
        w_shape, b_len = (p, n), p
        out_shape = (in_shape[0], p)
    else:
        _, h, w_dim, c = in_shape
        fh = int(rng.integers(1, 4))
        fw = int(rng.integers(1, 4))
        padding = str(rng.choice(["SAME", "VALID"]))
        if padding == "VALID":
            fh, fw = min(fh, h), min(fw, w_dim)
        sh = int(rng.integers(1, 3))
        sw = int(rng.integers(1, 3))
        attrs.update({"padding": padding, "stride_h": sh, "stride_w": sw})
        if kind == "CONV_2D":
            nf = int(rng.integers(1, 4))
            w_shape, b_len = (nf, fh, fw, c), nf
        else:
            k = int(rng.integers(1, 5)) if c == 1 else c
            w_shape, b_len = (1, fh, fw, k), k
        oh = math.ceil(h / sh) if padding == "SAME" else math.ceil((h - fh + 1) / sh)
        ow = math.ceil(w_dim / sw) if padding == "SAME" else math.ceil((w_dim - fw + 1) / sw)
        out_shape = (1, oh, ow, w_shape[-1] if kind != "CONV_2D" else w_shape[0])
    base = len(tensors)
    data = rng.integers(-127, 128, size=int(np.prod(w_shape)))
    bias = rng.integers(-2000, 2001, size=b_len)
    b_quant = QuantParams(float(rng.uniform(0.0005, 0.01)), int(rng.integers(-50, 51)))
    tensors += [
        i8_tensor(f"{name}/w", w_shape, w_quant, data),
        i32_tensor(f"{name}/b", (b_len,), b_quant, bias),
        i8_tensor(f"{name}/out", out_shape, out_quant),
    ]
    node = OpNode(kind, [prev, base, base + 1], base + 2, attrs)
    return node, base + 2, out_shape


def random_chain_model(rng, n_ops=None):
    """A random valid linear chain of 2-6 operators with sane quantization."""
    if n_ops is None:
        n_ops = int(rng.integers(2, 7))
    if rng.random() < 0.5:
        shape = (1, int(rng.integers(2, 9)))
    else:
        shape = (1, int(rng.integers(3, 7)), int(rng.integers(3, 7)), int(rng.integers(1, 4)))
    tensors = [i8_tensor("in", shape, random_act_quant(rng))]
    operators = []
    prev = 0
    for k in range(n_ops):
        if len(shape) == 2:
            kind = str(rng.choice(["FULLY_CONNECTED", "FULLY_CONNECTED", "SOFTMAX", "RESHAPE"]))
        else:
            kind = str(
                rng.choice(["CONV_2D", "DEPTHWISE_CONV_2D", "AVERAGE_POOL_2D", "RESHAPE", "RESHAPE"])
            )
        name = f"op{k}"
        if kind in ("FULLY_CONNECTED", "CONV_2D", "DEPTHWISE_CONV_2D"):
            node, prev, shape = _append_three_input(rng, tensors, kind, prev, shape, name)
            operators.append(node)
        elif kind == "AVERAGE_POOL_2D":
            _, h, w_dim, c = shape
            fh = int(rng.integers(1, min(3, h) + 1))
            fw = int(rng.integers(1, min(3, w_dim) + 1))
            sh, sw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            padding = str(rng.choice(["SAME", "VALID"]))
            oh = math.ceil(h / sh) if padding == "SAME" else math.ceil((h - fh + 1) / sh)
            ow = math.ceil(w_dim / sw) if padding == "SAME" else math.ceil((w_dim - fw + 1) / sw)
            out_shape = (1, oh, ow, c)
            out_quant = random_act_quant(rng)
            tensors.append(i8_tensor(f"{name}/out", out_shape, out_quant))
            operators.append(
                OpNode(
                    kind,
                    [prev],
                    len(tensors) - 1,
                    {"padding": padding, "stride_h": sh, "stride_w": sw,
                     "filter_h": fh, "filter_w": fw,
                     "fused_activation": str(rng.choice(["NONE", "RELU"]))},
                )
            )
            prev = len(tensors) - 1
            shape = out_shape
        elif kind == "RESHAPE":
            n = int(np.prod(shape))
            if len(shape) == 4 or rng.random() < 0.7:
                out_shape = (1, n)
            else:
                out_shape = (n, 1) if n > 1 else (1, 1)
            tensors.append(i8_tensor(f"{name}/out", out_shape, tensors[prev].quant))
            operators.append(OpNode(kind, [prev], len(tensors) - 1, {"new_shape": list(out_shape)}))
            prev = len(tensors) - 1
            shape = out_shape
        else:  # SOFTMAX
            out_quant = softmax_out_quant(rng)
            tensors.append(i8_tensor(f"{name}/out", shape, out_quant))
            operators.append(OpNode(kind, [prev], len(tensors) - 1, {}))
            prev = len(tensors) - 1
    return ModelFile(1, tensors, operators, 0, prev)


def random_input_for(model, rng):
    shape = model.tensors[model.model_input].shape
    return rng.integers(-128, 128, size=shape).astype(np.int8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    # One pass/fail line per acceptance criterion (visible with -s / -v).
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.rsplit("::", 1)[-1]
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n[{verdict}] {name}", flush=True)
