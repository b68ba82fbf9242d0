/**
 * TFLite to MFJ conversion, restricted to the operator set the inference
 * engine supports: FULLY_CONNECTED, CONV_2D, DEPTHWISE_CONV_2D,
 * AVERAGE_POOL_2D, RESHAPE and SOFTMAX with NONE/RELU/RELU6 fused
 * activations.
 *
 * Weight payloads are carried over byte for byte (FULLY_CONNECTED weights
 * stay output-major [p, n], conv filters stay [f, fh, fw, c], depthwise
 * filters [1, fh, fw, k]). Biases keep their stored quantization, which in
 * valid TFLite files follows the container convention s_b = s_x * s_w,
 * z_b = 0. Per-channel quantized tensors are rejected, not averaged.
 */

import {
  ACTIVATION_NAMES,
  BUILTIN_NAMES,
  BuiltinOperator,
  Model,
  PADDING_NAMES,
  TensorType,
  TfOperator,
  TfTensor,
} from "./tflite";
import { MfjModel, MfjOperator, MfjTensor } from "./mfj";

export class ConversionError extends Error {}

export class UnsupportedOpError extends ConversionError {
  constructor(readonly ops: string[]) {
    super(`model contains unsupported operators: ${ops.join(", ")}`);
  }
}

export class QuantizationError extends ConversionError {}

export interface ConversionReport {
  tensors: number;
  operators: number;
  opCounts: Record<string, number>;
  droppedTensors: number;
}

const SUPPORTED: Record<number, string> = {
  [BuiltinOperator.FULLY_CONNECTED]: "FULLY_CONNECTED",
  [BuiltinOperator.CONV_2D]: "CONV_2D",
  [BuiltinOperator.DEPTHWISE_CONV_2D]: "DEPTHWISE_CONV_2D",
  [BuiltinOperator.AVERAGE_POOL_2D]: "AVERAGE_POOL_2D",
  [BuiltinOperator.RESHAPE]: "RESHAPE",
  [BuiltinOperator.SOFTMAX]: "SOFTMAX",
};

function builtinName(code: number): string {
  return BUILTIN_NAMES[code] ?? `BUILTIN_${code}`;
}

function activationName(code: number, opName: string): string {
  const name = ACTIVATION_NAMES[code];
  if (name === undefined) {
    throw new ConversionError(`${opName}: unsupported fused activation code ${code}`);
  }
  return name;
}

function paddingName(code: number, opName: string): string {
  const name = PADDING_NAMES[code];
  if (name === undefined) {
    throw new ConversionError(`${opName}: unknown padding code ${code}`);
  }
  return name;
}

function decodePayload(tensor: TfTensor, bytes: Uint8Array, name: string): number[] {
  const count = tensor.shape().reduce((a, b) => a * b, 1);
  if (tensor.type() === TensorType.INT8) {
    if (bytes.length !== count) {
      throw new ConversionError(`${name}: payload is ${bytes.length} bytes, expected ${count}`);
    }
    return Array.from(new Int8Array(bytes.buffer, bytes.byteOffset, count));
  }
  if (tensor.type() === TensorType.INT32) {
    if (bytes.length !== 4 * count) {
      throw new ConversionError(`${name}: payload is ${bytes.length} bytes, expected ${4 * count}`);
    }
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.length);
    const out = new Array<number>(count);
    for (let i = 0; i < count; i++) {
      out[i] = view.getInt32(4 * i, true);
    }
    return out;
  }
  throw new ConversionError(`${name}: unsupported element type ${tensor.type()}`);
}

export function convertModel(bytes: Uint8Array): { mfj: MfjModel; report: ConversionReport } {
  const model = Model.fromBytes(bytes);
  const subgraphs = model.subgraphs();
  if (subgraphs.length !== 1) {
    throw new ConversionError(`expected exactly one subgraph, found ${subgraphs.length}`);
  }
  const graph = subgraphs[0];
  const tensors = graph.tensors();
  const buffers = model.buffers();
  const codes = model.operatorCodes().map((c) => c.builtinCode());

  const unsupported = new Set<string>();
  for (const op of graph.operators()) {
    const code = codes[op.opcodeIndex()];
    if (SUPPORTED[code] === undefined) {
      unsupported.add(builtinName(code));
    }
  }
  if (unsupported.size > 0) {
    throw new UnsupportedOpError([...unsupported].sort());
  }

  const usedNames = new Set<string>();
  const indexMap = new Map<number, number>();
  const outTensors: MfjTensor[] = [];
  const outOperators: MfjOperator[] = [];
  const opCounts: Record<string, number> = {};

  const isConstant = (t: TfTensor) => t.buffer() !== 0 && buffers[t.buffer()].data().length > 0;

  function mapTensor(index: number): number {
    const existing = indexMap.get(index);
    if (existing !== undefined) {
      return existing;
    }
    const tensor = tensors[index];
    let name = tensor.name() || `tensor_${index}`;
    while (usedNames.has(name)) {
      name = `${name}_`;
    }
    usedNames.add(name);

    const dtype = tensor.type();
    if (dtype !== TensorType.INT8 && dtype !== TensorType.INT32) {
      throw new QuantizationError(
        `${name}: element type ${dtype} is not int8-quantized (only i8/i32 are supported)`
      );
    }
    const quant = tensor.quantization();
    const scales = quant === null ? [] : quant.scales();
    const zeroPoints = quant === null ? [] : quant.zeroPoints();
    if (scales.length === 0) {
      throw new QuantizationError(`${name}: tensor carries no quantization parameters`);
    }
    if (scales.length > 1 || zeroPoints.length > 1) {
      throw new QuantizationError(
        `${name}: per-channel quantization (${scales.length} scales) is out of scope`
      );
    }

    const mfjTensor: MfjTensor = {
      name,
      shape: tensor.shape(),
      dtype: dtype === TensorType.INT8 ? "i8" : "i32",
      scale: scales[0],
      zero_point: zeroPoints.length > 0 ? zeroPoints[0] : 0,
    };
    if (isConstant(tensor)) {
      mfjTensor.data = decodePayload(tensor, buffers[tensor.buffer()].data(), name);
    }
    outTensors.push(mfjTensor);
    indexMap.set(index, outTensors.length - 1);
    return outTensors.length - 1;
  }

  let dropped = 0;
  for (const op of graph.operators()) {
    const kind = SUPPORTED[codes[op.opcodeIndex()]];
    opCounts[kind] = (opCounts[kind] ?? 0) + 1;
    const converted = convertOperator(kind, op, tensors, mapTensor);
    dropped += op.inputs().length - converted.inputs.length;
    outOperators.push(converted);
  }

  const graphInputs = graph.inputs();
  const graphOutputs = graph.outputs();
  if (graphInputs.length !== 1 || graphOutputs.length !== 1) {
    throw new ConversionError(
      `expected one model input and one output, found ${graphInputs.length}/${graphOutputs.length}`
    );
  }

  const mfj: MfjModel = {
    version: 1,
    tensors: outTensors,
    operators: outOperators,
    model_input: mapTensor(graphInputs[0]),
    model_output: mapTensor(graphOutputs[0]),
  };
  return {
    mfj,
    report: {
      tensors: outTensors.length,
      operators: outOperators.length,
      opCounts,
      droppedTensors: dropped,
    },
  };
}

function convertOperator(
  kind: string,
  op: TfOperator,
  tensors: TfTensor[],
  mapTensor: (index: number) => number
): MfjOperator {
  const inputs = op.inputs();
  const outputs = op.outputs();
  if (outputs.length !== 1) {
    throw new ConversionError(`${kind}: expected one output, found ${outputs.length}`);
  }

  if (kind === "FULLY_CONNECTED") {
    const options = op.fullyConnectedOptions();
    if (options !== null && options.weightsFormat() !== 0) {
      throw new ConversionError("FULLY_CONNECTED: only the default weights format is supported");
    }
    if (inputs.length !== 3 || inputs[2] < 0) {
      throw new ConversionError("FULLY_CONNECTED: expected activation, weights and bias inputs");
    }
    return {
      op: kind,
      inputs: inputs.map(mapTensor),
      output: mapTensor(outputs[0]),
      options: {
        fused_activation: activationName(options === null ? 0 : options.fusedActivation(), kind),
      },
    };
  }

  if (kind === "CONV_2D" || kind === "DEPTHWISE_CONV_2D") {
    if (inputs.length !== 3 || inputs[2] < 0) {
      throw new ConversionError(`${kind}: expected activation, filter and bias inputs`);
    }
    let padding: number;
    let strideW: number;
    let strideH: number;
    let fused: number;
    if (kind === "CONV_2D") {
      const options = op.conv2dOptions();
      if (options === null) {
        throw new ConversionError("CONV_2D: missing options table");
      }
      if (options.dilationW() !== 1 || options.dilationH() !== 1) {
        throw new ConversionError("CONV_2D: dilation is not supported");
      }
      [padding, strideW, strideH, fused] = [
        options.padding(),
        options.strideW(),
        options.strideH(),
        options.fusedActivation(),
      ];
    } else {
      const options = op.depthwiseOptions();
      if (options === null) {
        throw new ConversionError("DEPTHWISE_CONV_2D: missing options table");
      }
      if (options.dilationW() !== 1 || options.dilationH() !== 1) {
        throw new ConversionError("DEPTHWISE_CONV_2D: dilation is not supported");
      }
      const inputChannels = tensors[inputs[0]].shape()[3];
      if (options.depthMultiplier() > 1 && inputChannels !== 1) {
        throw new ConversionError(
          "DEPTHWISE_CONV_2D: depth multiplier above 1 requires a single input channel"
        );
      }
      [padding, strideW, strideH, fused] = [
        options.padding(),
        options.strideW(),
        options.strideH(),
        options.fusedActivation(),
      ];
    }
    return {
      op: kind,
      inputs: inputs.map(mapTensor),
      output: mapTensor(outputs[0]),
      options: {
        padding: paddingName(padding, kind),
        stride_h: strideH,
        stride_w: strideW,
        fused_activation: activationName(fused, kind),
      },
    };
  }

  if (kind === "AVERAGE_POOL_2D") {
    const options = op.pool2dOptions();
    if (options === null) {
      throw new ConversionError("AVERAGE_POOL_2D: missing options table");
    }
    return {
      op: kind,
      inputs: [mapTensor(inputs[0])],
      output: mapTensor(outputs[0]),
      options: {
        padding: paddingName(options.padding(), kind),
        stride_h: options.strideH(),
        stride_w: options.strideW(),
        filter_h: options.filterH(),
        filter_w: options.filterW(),
        fused_activation: activationName(options.fusedActivation(), kind),
      },
    };
  }

  if (kind === "RESHAPE") {
    // The target shape comes from the output tensor, which is always
    // concrete; the options/new-shape tensor may contain -1 wildcards.
    // The auxiliary shape tensor input is dropped.
    const newShape = tensors[outputs[0]].shape();
    return {
      op: kind,
      inputs: [mapTensor(inputs[0])],
      output: mapTensor(outputs[0]),
      options: { new_shape: newShape },
    };
  }

  // SOFTMAX
  const options = op.softmaxOptions();
  const beta = options === null ? 1.0 : options.beta();
  if (beta !== 1.0) {
    throw new ConversionError(`SOFTMAX: beta ${beta} is not supported (only 1.0)`);
  }
  return {
    op: kind,
    inputs: [mapTensor(inputs[0])],
    output: mapTensor(outputs[0]),
    options: {},
  };
}
