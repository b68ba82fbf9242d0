import json

import numpy as np
import pytest

from tinyaot.errors import FormatError, RangeError
from tinyaot.model_format import (
    ModelFile,
    OpNode,
    dumps_model,
    load_model,
    save_model,
    validate_model,
)
from tinyaot.quant import QuantParams

from conftest import i8_tensor, random_chain_model, reshape_model, sine_model


def write_model(tmp_path, model, name="model.json"):
    path = tmp_path / name
    save_model(model, path)
    return path


def write_json(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestLoad:
    def test_minimal_reshape_model(self, tmp_path):
        path = write_model(tmp_path, reshape_model())
        m = load_model(path)
        assert len(m.tensors) == 2
        assert len(m.operators) == 1
        assert m.operators[0].op == "RESHAPE"

    def test_sine_shaped_model(self, tmp_path):
        path = write_model(tmp_path, sine_model())
        m = load_model(path)
        assert len(m.operators) == 3
        assert all(op.op == "FULLY_CONNECTED" for op in m.operators)
        assert [op.fused() for op in m.operators] == ["RELU", "RELU", "NONE"]

    def test_weight_length_mismatch_names_tensor(self, tmp_path):
        doc = json.loads(dumps_model(sine_model()))
        doc["tensors"][1]["data"] = doc["tensors"][1]["data"][:-1]
        path = write_json(tmp_path, doc)
        with pytest.raises(FormatError, match="fc0/w"):
            load_model(path)

    def test_datum_outside_i8_range(self, tmp_path):
        doc = json.loads(dumps_model(reshape_model()))
        doc["tensors"][0]["data"] = [0, 1, 2, 200]
        # make data legal structurally on the input tensor: move to a fresh constant
        doc["tensors"].append(
            {"name": "w", "shape": [4], "dtype": "i8", "scale": 0.1, "zero_point": 0,
             "data": [0, 1, 2, 200]}
        )
        del doc["tensors"][0]["data"]
        path = write_json(tmp_path, doc)
        with pytest.raises(RangeError):
            load_model(path)

    def test_unknown_op_rejected(self, tmp_path):
        doc = json.loads(dumps_model(reshape_model()))
        doc["operators"][0]["op"] = "MAX_POOL_2D"
        with pytest.raises(FormatError, match="unknown op"):
            load_model(write_json(tmp_path, doc))

    def test_malformed_attribute_rejected(self, tmp_path):
        doc = json.loads(dumps_model(reshape_model()))
        doc["operators"][0]["options"]["new_shape"] = [0, 4]
        with pytest.raises(FormatError, match="new_shape"):
            load_model(write_json(tmp_path, doc))

    def test_bad_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(FormatError, match="not valid JSON"):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.json")

    def test_zero_point_outside_dtype_range(self, tmp_path):
        doc = json.loads(dumps_model(reshape_model()))
        doc["tensors"][0]["zero_point"] = 300
        with pytest.raises(FormatError, match="zero_point"):
            load_model(write_json(tmp_path, doc))

    def test_format_error_carries_json_path(self, tmp_path):
        doc = json.loads(dumps_model(reshape_model()))
        doc["tensors"][1]["dtype"] = "f32"
        with pytest.raises(FormatError, match=r"\$\.tensors\[1\]\.dtype"):
            load_model(write_json(tmp_path, doc))


class TestRoundTrip:
    @pytest.mark.parametrize("builder", [reshape_model, sine_model])
    def test_save_load_is_byte_identical(self, tmp_path, builder):
        path = write_model(tmp_path, builder())
        original = path.read_bytes()
        reloaded = load_model(path)
        assert dumps_model(reloaded).encode("utf-8") == original

    def test_float_scales_round_trip(self, tmp_path):
        m = reshape_model(quant=QuantParams(0.1 + 0.2, -3))  # deliberately non-representable sum
        path = write_model(tmp_path, m)
        assert load_model(path).tensors[0].quant.scale == 0.1 + 0.2


class TestValidate:
    def test_valid_model_has_no_diagnostics(self):
        assert validate_model(sine_model()) == []

    def test_conv_missing_stride(self):
        m = ModelFile(
            version=1,
            tensors=[
                i8_tensor("in", (1, 4, 4, 1), QuantParams(0.1, 0)),
                i8_tensor("f", (1, 3, 3, 1), QuantParams(0.1, 0), np.zeros(9)),
                i8_tensor("b", (1,), QuantParams(0.1, 0), np.zeros(1)),
                i8_tensor("out", (1, 4, 4, 1), QuantParams(0.1, 0)),
            ],
            operators=[OpNode("CONV_2D", [0, 1, 2], 3, {"padding": "SAME", "stride_w": 1})],
            model_input=0,
            model_output=3,
        )
        errors = [d for d in validate_model(m) if d.severity == "error"]
        assert len(errors) == 1
        assert "stride_h" in errors[0].message

    def test_softmax_cannot_fuse(self):
        m = reshape_model()
        m.operators[0] = OpNode("SOFTMAX", [0], 1, {"fused_activation": "RELU"})
        m.tensors[1] = i8_tensor("out", (1, 4), QuantParams(0.5, 0))
        errors = [d for d in validate_model(m) if d.severity == "error"]
        assert len(errors) == 1
        assert "standalone" in errors[0].message

    def test_fused_rule_table(self):
        # NONE is tolerated everywhere; RELU only where the kernel can fuse.
        fusible = {"FULLY_CONNECTED", "CONV_2D", "DEPTHWISE_CONV_2D", "AVERAGE_POOL_2D"}
        for kind in ("RESHAPE", "SOFTMAX"):
            assert kind not in fusible

        m = reshape_model()
        m.operators[0].options["fused_activation"] = "NONE"
        assert validate_model(m) == []
        m.operators[0].options["fused_activation"] = "RELU"
        assert any("standalone" in d.message for d in validate_model(m))

    def test_broken_chain_detected(self):
        m = sine_model()
        m.operators[2].inputs[0] = m.operators[0].output  # skips layer 1
        assert any("chain" in d.message for d in validate_model(m))

    def test_i32_only_for_bias(self):
        m = reshape_model()
        m.tensors[0] = m.tensors[0].__class__(
            "in", (1, 4), "i32", QuantParams(0.5, 0), None
        )
        assert any("i32" in d.message or "i8" in d.message for d in validate_model(m))

    def test_reshape_must_preserve_quant(self):
        m = reshape_model()
        m.tensors[1].quant = QuantParams(0.25, 0)
        assert any("quantization" in d.message for d in validate_model(m))


def brute_force_chain_check(m) -> bool:
    """Reachability oracle: each op is an activation edge; a valid chain
    walks from model_input to model_output using every op exactly once."""
    edges = []
    for op in m.operators:
        non_const = [i for i in op.inputs if not m.tensors[i].is_constant]
        if len(non_const) != 1:
            return False
        edges.append((non_const[0], op.output))
    current = m.model_input
    remaining = list(edges)
    while remaining:
        matches = [e for e in remaining if e[0] == current]
        if len(matches) != 1:
            return False
        remaining.remove(matches[0])
        current = matches[0][1]
    return current == m.model_output


class TestChainLinearity:
    def test_matches_reachability_oracle_on_random_graphs(self):
        rng = np.random.default_rng(42)
        agree = 0
        for trial in range(60):
            m = random_chain_model(rng)
            if trial % 3 == 1 and len(m.operators) >= 2:
                # break the chain by rewiring one activation input
                k = int(rng.integers(1, len(m.operators)))
                m.operators[k].inputs[0] = m.model_input
            elif trial % 3 == 2:
                m.model_output = m.operators[0].output
            chain_errors = [
                d for d in validate_model(m) if "chain" in d.message or "model_output" in d.message
            ]
            assert (not chain_errors) == brute_force_chain_check(m)
            agree += 1
        assert agree == 60
