/**
 * Minimal flatbuffer reader: little-endian scalars, vtable-resolved table
 * fields, vectors and strings. Just enough surface to walk a TFLite model;
 * no code generation and no runtime dependencies.
 */

export class ByteReader {
  private view: DataView;

  constructor(readonly bytes: Uint8Array) {
    this.view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  }

  u8(pos: number): number {
    return this.view.getUint8(pos);
  }

  i8(pos: number): number {
    return this.view.getInt8(pos);
  }

  u16(pos: number): number {
    return this.view.getUint16(pos, true);
  }

  i32(pos: number): number {
    return this.view.getInt32(pos, true);
  }

  u32(pos: number): number {
    return this.view.getUint32(pos, true);
  }

  f32(pos: number): number {
    return this.view.getFloat32(pos, true);
  }

  i64(pos: number): number {
    const value = this.view.getBigInt64(pos, true);
    if (value > BigInt(Number.MAX_SAFE_INTEGER) || value < -BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new Error(`64-bit value at ${pos} exceeds the safe integer range`);
    }
    return Number(value);
  }

  /** Absolute position of the root table. */
  root(): number {
    return this.u32(0);
  }

  /** The 4-byte file identifier stored after the root offset, if any. */
  identifier(): string {
    return String.fromCharCode(...this.bytes.subarray(4, 8));
  }

  /** Follow a uoffset stored at pos. */
  indirect(pos: number): number {
    return pos + this.u32(pos);
  }

  /**
   * Absolute position of a table field's inline data, or null when the
   * field is absent (reader must substitute the schema default).
   */
  field(table: number, id: number): number | null {
    const vtable = table - this.i32(table);
    const slot = 4 + 2 * id;
    if (slot >= this.u16(vtable)) {
      return null;
    }
    const offset = this.u16(vtable + slot);
    return offset === 0 ? null : table + offset;
  }

  vectorLength(fieldPos: number): number {
    return this.u32(this.indirect(fieldPos));
  }

  /** Absolute position of element i in the vector a field points at. */
  vectorElement(fieldPos: number, index: number, elemSize: number): number {
    return this.indirect(fieldPos) + 4 + index * elemSize;
  }

  string(fieldPos: number): string {
    const pos = this.indirect(fieldPos);
    const length = this.u32(pos);
    return Buffer.from(this.bytes.subarray(pos + 4, pos + 4 + length)).toString("utf-8");
  }

  i32Vector(fieldPos: number): number[] {
    const n = this.vectorLength(fieldPos);
    const out = new Array<number>(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.i32(this.vectorElement(fieldPos, i, 4));
    }
    return out;
  }

  f32Vector(fieldPos: number): number[] {
    const n = this.vectorLength(fieldPos);
    const out = new Array<number>(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.f32(this.vectorElement(fieldPos, i, 4));
    }
    return out;
  }

  i64Vector(fieldPos: number): number[] {
    const n = this.vectorLength(fieldPos);
    const out = new Array<number>(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.i64(this.vectorElement(fieldPos, i, 8));
    }
    return out;
  }

  /** Raw bytes of a [ubyte] vector field. */
  byteVector(fieldPos: number): Uint8Array {
    const pos = this.indirect(fieldPos);
    const length = this.u32(pos);
    return this.bytes.subarray(pos + 4, pos + 4 + length);
  }
}

/** Convenience base for generated-style table accessors. */
export class Table {
  constructor(readonly bb: ByteReader, readonly pos: number) {}

  protected scalar(id: number, read: (p: number) => number, dflt: number): number {
    const p = this.bb.field(this.pos, id);
    return p === null ? dflt : read(p);
  }

  protected byte(id: number, dflt = 0): number {
    return this.scalar(id, (p) => this.bb.i8(p), dflt);
  }

  protected int32(id: number, dflt = 0): number {
    return this.scalar(id, (p) => this.bb.i32(p), dflt);
  }

  protected uint32(id: number, dflt = 0): number {
    return this.scalar(id, (p) => this.bb.u32(p), dflt);
  }

  protected float32(id: number, dflt = 0): number {
    return this.scalar(id, (p) => this.bb.f32(p), dflt);
  }

  protected table<T>(id: number, wrap: (bb: ByteReader, pos: number) => T): T | null {
    const p = this.bb.field(this.pos, id);
    return p === null ? null : wrap(this.bb, this.bb.indirect(p));
  }

  protected tableVector<T>(id: number, wrap: (bb: ByteReader, pos: number) => T): T[] {
    const p = this.bb.field(this.pos, id);
    if (p === null) {
      return [];
    }
    const n = this.bb.vectorLength(p);
    const out = new Array<T>(n);
    for (let i = 0; i < n; i++) {
      out[i] = wrap(this.bb, this.bb.indirect(this.bb.vectorElement(p, i, 4)));
    }
    return out;
  }

  protected intVector(id: number): number[] {
    const p = this.bb.field(this.pos, id);
    return p === null ? [] : this.bb.i32Vector(p);
  }
}
