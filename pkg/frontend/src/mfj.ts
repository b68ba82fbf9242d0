/**
 * MFJ document model and canonical serialization.
 *
 * Schema (exact keys): top level {"version":1,"tensors":[...],
 * "operators":[...],"model_input":int,"model_output":int}; tensor
 * {"name","shape","dtype","scale","zero_point","data"?}; operator
 * {"op","inputs","output","options"}. Canonical text has sorted keys,
 * two-space indentation and a trailing newline.
 */

export interface MfjTensor {
  name: string;
  shape: number[];
  dtype: "i8" | "i32";
  scale: number;
  zero_point: number;
  data?: number[];
}

export interface MfjOperator {
  op: string;
  inputs: number[];
  output: number;
  options: Record<string, unknown>;
}

export interface MfjModel {
  version: 1;
  tensors: MfjTensor[];
  operators: MfjOperator[];
  model_input: number;
  model_output: number;
}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeysDeep);
  }
  if (value !== null && typeof value === "object") {
    const src = value as Record<string, unknown>;
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(src).sort()) {
      out[key] = sortKeysDeep(src[key]);
    }
    return out;
  }
  return value;
}

export function serializeMfj(model: MfjModel): string {
  return JSON.stringify(sortKeysDeep(model), null, 2) + "\n";
}
