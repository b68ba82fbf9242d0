/**
 * Typed accessors for the subset of the TFLite flatbuffer schema the
 * converter needs: model / subgraph / tensor / operator tables plus the
 * builtin options of the supported operators. Field ids follow the
 * schema's declaration order.
 */

import { ByteReader, Table } from "./flatbuffer";

export enum BuiltinOperator {
  AVERAGE_POOL_2D = 1,
  CONV_2D = 3,
  DEPTHWISE_CONV_2D = 4,
  FULLY_CONNECTED = 9,
  RESHAPE = 22,
  SOFTMAX = 25,
}

/** Names for error reporting, including common unsupported codes. */
export const BUILTIN_NAMES: Record<number, string> = {
  0: "ADD",
  1: "AVERAGE_POOL_2D",
  2: "CONCATENATION",
  3: "CONV_2D",
  4: "DEPTHWISE_CONV_2D",
  6: "DEQUANTIZE",
  9: "FULLY_CONNECTED",
  14: "LOGISTIC",
  17: "MAX_POOL_2D",
  18: "MUL",
  19: "RELU",
  21: "RELU6",
  22: "RESHAPE",
  25: "SOFTMAX",
  28: "TANH",
  34: "PAD",
  40: "MEAN",
  97: "LEAKY_RELU",
  114: "QUANTIZE",
};

export enum TensorType {
  FLOAT32 = 0,
  INT32 = 2,
  INT8 = 9,
}

export enum BuiltinOptionsType {
  Conv2DOptions = 1,
  DepthwiseConv2DOptions = 2,
  Pool2DOptions = 5,
  FullyConnectedOptions = 8,
  SoftmaxOptions = 9,
  ReshapeOptions = 17,
}

export const ACTIVATION_NAMES: Record<number, string> = {
  0: "NONE",
  1: "RELU",
  3: "RELU6",
};

export const PADDING_NAMES: Record<number, string> = { 0: "SAME", 1: "VALID" };

export class Model extends Table {
  static fromBytes(bytes: Uint8Array): Model {
    const bb = new ByteReader(bytes);
    if (bb.identifier() !== "TFL3") {
      throw new Error(`not a TFLite file (identifier ${JSON.stringify(bb.identifier())})`);
    }
    return new Model(bb, bb.root());
  }

  version(): number {
    return this.uint32(0);
  }

  operatorCodes(): OperatorCode[] {
    return this.tableVector(1, (bb, pos) => new OperatorCode(bb, pos));
  }

  subgraphs(): SubGraph[] {
    return this.tableVector(2, (bb, pos) => new SubGraph(bb, pos));
  }

  description(): string {
    const p = this.bb.field(this.pos, 3);
    return p === null ? "" : this.bb.string(p);
  }

  buffers(): TfBuffer[] {
    return this.tableVector(4, (bb, pos) => new TfBuffer(bb, pos));
  }
}

export class OperatorCode extends Table {
  /** Modern files store codes above 127 in the int32 field; older files
   * use the deprecated byte. The effective code is the larger of the two. */
  builtinCode(): number {
    return Math.max(this.byte(0), this.int32(3));
  }

  version(): number {
    return this.int32(2, 1);
  }
}

export class SubGraph extends Table {
  tensors(): TfTensor[] {
    return this.tableVector(0, (bb, pos) => new TfTensor(bb, pos));
  }

  inputs(): number[] {
    return this.intVector(1);
  }

  outputs(): number[] {
    return this.intVector(2);
  }

  operators(): TfOperator[] {
    return this.tableVector(3, (bb, pos) => new TfOperator(bb, pos));
  }
}

export class TfTensor extends Table {
  shape(): number[] {
    return this.intVector(0);
  }

  type(): number {
    return this.byte(1);
  }

  buffer(): number {
    return this.uint32(2);
  }

  name(): string {
    const p = this.bb.field(this.pos, 3);
    return p === null ? "" : this.bb.string(p);
  }

  quantization(): Quantization | null {
    return this.table(4, (bb, pos) => new Quantization(bb, pos));
  }
}

export class Quantization extends Table {
  scales(): number[] {
    const p = this.bb.field(this.pos, 2);
    return p === null ? [] : this.bb.f32Vector(p);
  }

  zeroPoints(): number[] {
    const p = this.bb.field(this.pos, 3);
    return p === null ? [] : this.bb.i64Vector(p);
  }
}

export class TfBuffer extends Table {
  data(): Uint8Array {
    const p = this.bb.field(this.pos, 0);
    return p === null ? new Uint8Array(0) : this.bb.byteVector(p);
  }
}

export class TfOperator extends Table {
  opcodeIndex(): number {
    return this.uint32(0);
  }

  inputs(): number[] {
    return this.intVector(1);
  }

  outputs(): number[] {
    return this.intVector(2);
  }

  optionsType(): number {
    return this.scalar(3, (p) => this.bb.u8(p), 0);
  }

  private optionsPos(): number | null {
    const p = this.bb.field(this.pos, 4);
    return p === null ? null : this.bb.indirect(p);
  }

  conv2dOptions(): Conv2DOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.Conv2DOptions
      ? null
      : new Conv2DOptions(this.bb, pos);
  }

  depthwiseOptions(): DepthwiseConv2DOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.DepthwiseConv2DOptions
      ? null
      : new DepthwiseConv2DOptions(this.bb, pos);
  }

  pool2dOptions(): Pool2DOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.Pool2DOptions
      ? null
      : new Pool2DOptions(this.bb, pos);
  }

  fullyConnectedOptions(): FullyConnectedOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.FullyConnectedOptions
      ? null
      : new FullyConnectedOptions(this.bb, pos);
  }

  softmaxOptions(): SoftmaxOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.SoftmaxOptions
      ? null
      : new SoftmaxOptions(this.bb, pos);
  }

  reshapeOptions(): ReshapeOptions | null {
    const pos = this.optionsPos();
    return pos === null || this.optionsType() !== BuiltinOptionsType.ReshapeOptions
      ? null
      : new ReshapeOptions(this.bb, pos);
  }
}

export class Conv2DOptions extends Table {
  padding(): number {
    return this.byte(0);
  }

  strideW(): number {
    return this.int32(1);
  }

  strideH(): number {
    return this.int32(2);
  }

  fusedActivation(): number {
    return this.byte(3);
  }

  dilationW(): number {
    return this.int32(4, 1);
  }

  dilationH(): number {
    return this.int32(5, 1);
  }
}

export class DepthwiseConv2DOptions extends Table {
  padding(): number {
    return this.byte(0);
  }

  strideW(): number {
    return this.int32(1);
  }

  strideH(): number {
    return this.int32(2);
  }

  depthMultiplier(): number {
    return this.int32(3);
  }

  fusedActivation(): number {
    return this.byte(4);
  }

  dilationW(): number {
    return this.int32(5, 1);
  }

  dilationH(): number {
    return this.int32(6, 1);
  }
}

export class Pool2DOptions extends Table {
  padding(): number {
    return this.byte(0);
  }

  strideW(): number {
    return this.int32(1);
  }

  strideH(): number {
    return this.int32(2);
  }

  filterW(): number {
    return this.int32(3);
  }

  filterH(): number {
    return this.int32(4);
  }

  fusedActivation(): number {
    return this.byte(5);
  }
}

export class FullyConnectedOptions extends Table {
  fusedActivation(): number {
    return this.byte(0);
  }

  weightsFormat(): number {
    return this.byte(1);
  }
}

export class ReshapeOptions extends Table {
  newShape(): number[] {
    return this.intVector(0);
  }
}

export class SoftmaxOptions extends Table {
  beta(): number {
    return this.float32(0);
  }
}
