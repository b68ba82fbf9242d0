import { execFileSync } from "child_process";
import * as fs from "fs";
import * as path from "path";

const FIXTURES = path.resolve(__dirname, "..", "..", "tests", "fixtures");

export default function setup(): void {
  if (!fs.existsSync(path.join(FIXTURES, "speech.tflite"))) {
    const script = path.resolve(__dirname, "..", "..", "tools", "make_tflite_fixtures.py");
    execFileSync("python3", [script], { stdio: "inherit" });
  }
}
