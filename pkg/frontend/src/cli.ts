#!/usr/bin/env node
/**
 * Command line entry point.
 *
 *   tflite2mfj convert <in.tflite> <out.json> [--report]
 *
 * Exit codes: 0 ok, 1 usage or IO failure, 2 unsupported operators,
 * 3 quantization out of scope (per-channel / non-int8).
 */

import * as fs from "fs";

import { QuantizationError, UnsupportedOpError, convertModel } from "./convert";
import { serializeMfj } from "./mfj";

function usage(): never {
  process.stderr.write("usage: tflite2mfj convert <in.tflite> <out.json> [--report]\n");
  process.exit(1);
}

export function main(argv: string[]): number {
  const args = argv.filter((a) => a !== "--report");
  const wantReport = args.length !== argv.length;
  if (args.length !== 3 || args[0] !== "convert") {
    usage();
  }
  const [, inputPath, outputPath] = args;
  try {
    const bytes = new Uint8Array(fs.readFileSync(inputPath));
    const { mfj, report } = convertModel(bytes);
    fs.writeFileSync(outputPath, serializeMfj(mfj), "utf-8");
    if (wantReport) {
      process.stdout.write(JSON.stringify(report) + "\n");
    }
    process.stderr.write(
      `converted ${report.operators} operators / ${report.tensors} tensors -> ${outputPath}\n`
    );
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    if (err instanceof UnsupportedOpError) {
      return 2;
    }
    if (err instanceof QuantizationError) {
      return 3;
    }
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
