import * as fs from "fs";
import * as path from "path";

import { describe, expect, it } from "vitest";

import { QuantizationError, UnsupportedOpError, convertModel } from "../src/convert";
import { serializeMfj } from "../src/mfj";
import { Model } from "../src/tflite";

const FIXTURES = path.resolve(__dirname, "..", "..", "tests", "fixtures");

function readFixture(name: string): Uint8Array {
  return new Uint8Array(fs.readFileSync(path.join(FIXTURES, name)));
}

interface ManifestTensor {
  dtype: string;
  shape: number[];
  scale: number;
  zero_point: number;
  data_b64?: string;
}

interface Manifest {
  operators: number;
  op_kinds: string[];
  input_shape: number[];
  tensors: Record<string, ManifestTensor>;
}

function readManifest(name: string): Manifest {
  return JSON.parse(fs.readFileSync(path.join(FIXTURES, name), "utf-8"));
}

function payloadBytes(data: number[], dtype: string): Buffer {
  if (dtype === "i8") {
    return Buffer.from(Int8Array.from(data).buffer);
  }
  const buf = Buffer.alloc(4 * data.length);
  data.forEach((v, i) => buf.writeInt32LE(v, 4 * i));
  return buf;
}

describe("flatbuffer reader", () => {
  it("parses the model header", () => {
    const model = Model.fromBytes(readFixture("speech.tflite"));
    expect(model.version()).toBe(3);
    expect(model.description()).toContain("wake-word");
    expect(model.subgraphs()).toHaveLength(1);
  });

  it("rejects non-TFLite bytes", () => {
    expect(() => Model.fromBytes(new Uint8Array(64))).toThrow(/not a TFLite file/);
  });

  it("exposes tensors with per-tensor quantization", () => {
    const graph = Model.fromBytes(readFixture("speech.tflite")).subgraphs()[0];
    const input = graph.tensors()[graph.inputs()[0]];
    expect(input.shape()).toEqual([1, 49, 40, 1]);
    expect(input.quantization()!.scales()).toHaveLength(1);
    expect(input.quantization()!.zeroPoints()).toEqual([2]);
  });
});

describe("speech model conversion", () => {
  const { mfj, report } = convertModel(readFixture("speech.tflite"));
  const manifest = readManifest("speech.manifest.json");

  it("keeps the four-operator chain", () => {
    expect(report.operators).toBe(4);
    expect(mfj.operators.map((op) => op.op)).toEqual(manifest.op_kinds);
  });

  it("drops the auxiliary reshape shape tensor", () => {
    expect(report.droppedTensors).toBe(1);
    expect(mfj.tensors.map((t) => t.name)).not.toContain("reshape/shape");
  });

  it("copies weight payloads byte for byte", () => {
    for (const tensor of mfj.tensors) {
      const expected = manifest.tensors[tensor.name];
      expect(expected).toBeDefined();
      if (expected.data_b64 !== undefined) {
        const got = payloadBytes(tensor.data!, tensor.dtype);
        expect(got.equals(Buffer.from(expected.data_b64, "base64"))).toBe(true);
      } else {
        expect(tensor.data).toBeUndefined();
      }
    }
  });

  it("carries quantization parameters through", () => {
    for (const tensor of mfj.tensors) {
      const expected = manifest.tensors[tensor.name];
      expect(tensor.scale).toBeCloseTo(expected.scale, 12);
      expect(tensor.zero_point).toBe(expected.zero_point);
      expect(tensor.dtype).toBe(expected.dtype);
    }
  });

  it("maps depthwise options", () => {
    const dw = mfj.operators[0];
    expect(dw.op).toBe("DEPTHWISE_CONV_2D");
    expect(dw.options).toEqual({
      padding: "SAME",
      stride_h: 2,
      stride_w: 2,
      fused_activation: "RELU",
    });
  });

  it("resolves the reshape target from the output tensor", () => {
    const reshape = mfj.operators[1];
    expect(reshape.options.new_shape).toEqual([1, 4000]);
    expect(reshape.inputs).toHaveLength(1);
  });

  it("wires the model boundary", () => {
    expect(mfj.tensors[mfj.model_input].name).toBe("input");
    expect(mfj.tensors[mfj.model_output].name).toBe("probabilities");
  });

  it("serializes canonically", () => {
    const text = serializeMfj(mfj);
    expect(text.endsWith("\n")).toBe(true);
    const doc = JSON.parse(text);
    expect(Object.keys(doc)).toEqual(
      ["model_input", "model_output", "operators", "tensors", "version"].sort()
    );
  });
});

describe("person model conversion", () => {
  const { mfj, report } = convertModel(readFixture("person.tflite"));
  const manifest = readManifest("person.manifest.json");

  it("keeps the thirty-operator chain", () => {
    expect(report.operators).toBe(30);
    expect(mfj.operators.map((op) => op.op)).toEqual(manifest.op_kinds);
    expect(report.opCounts).toEqual({
      CONV_2D: 15,
      DEPTHWISE_CONV_2D: 13,
      AVERAGE_POOL_2D: 1,
      SOFTMAX: 1,
    });
  });

  it("copies every constant payload byte for byte", () => {
    let constants = 0;
    for (const tensor of mfj.tensors) {
      const expected = manifest.tensors[tensor.name];
      if (expected.data_b64 !== undefined) {
        constants += 1;
        const got = payloadBytes(tensor.data!, tensor.dtype);
        expect(got.equals(Buffer.from(expected.data_b64, "base64"))).toBe(true);
      }
    }
    expect(constants).toBe(2 * 30 - 2 * 2);  // weights+bias per op except pool/softmax
  });

  it("maps pooling options", () => {
    const pool = mfj.operators.find((op) => op.op === "AVERAGE_POOL_2D")!;
    expect(pool.options).toEqual({
      padding: "VALID",
      stride_h: 3,
      stride_w: 3,
      filter_h: 3,
      filter_w: 3,
      fused_activation: "NONE",
    });
  });
});

describe("rejections", () => {
  it("names unsupported operators", () => {
    expect(() => convertModel(readFixture("unsupported.tflite"))).toThrow(UnsupportedOpError);
    try {
      convertModel(readFixture("unsupported.tflite"));
    } catch (err) {
      expect((err as UnsupportedOpError).ops).toEqual(["MAX_POOL_2D"]);
    }
  });

  it("rejects per-channel quantization explicitly", () => {
    expect(() => convertModel(readFixture("perchannel.tflite"))).toThrow(QuantizationError);
    expect(() => convertModel(readFixture("perchannel.tflite"))).toThrow(/per-channel/);
  });
});
