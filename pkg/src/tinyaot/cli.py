"""Command-line front end.

    tinyaot compile <model> -o <dir> [--ram-budget N]
    tinyaot run <model> --input <file> [--paged] [--oracle]
    tinyaot bench <model> [--iters N]

stdout carries machine-parseable JSON for run/bench; diagnostics go to
stderr. Exit codes: 0 ok, 1 unexpected failure, 2 format/IO error,
3 shape/size error, 4 infeasible memory budget.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .compiler import emit_source, execute_plan, fold_constants, plan_to_json, set_paging
from .errors import FormatError, InfeasibleError, RangeError, ShapeError, SizeError
from .graph import build_graph
from .memplan import plan_memory
from .model_format import load_model
from .oracle import float_reference, naive_quantized_reference
from .quant import quantize

EXIT_FORMAT = 2
EXIT_SHAPE = 3
EXIT_INFEASIBLE = 4


def _compile_pipeline(model_path, ram_budget=None):
    model = load_model(model_path)
    graph = build_graph(model)
    plan = fold_constants(graph)
    plan, report = plan_memory(plan, ram_budget)
    return graph, plan, report


def cmd_compile(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, plan, report = _compile_pipeline(args.model, args.ram_budget)
    stem = Path(args.model).stem
    source_path = out_dir / f"{stem}.py"
    source_path.write_text(emit_source(plan), encoding="utf-8")
    (out_dir / f"{stem}.plan.json").write_text(
        json.dumps(plan_to_json(plan), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / f"{stem}.memory.json").write_text(report.dumps(), encoding="utf-8")
    print(f"wrote {source_path}, {stem}.plan.json, {stem}.memory.json", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    _, plan, _ = _compile_pipeline(args.model)
    if args.paged:
        directives = {
            i: 1 for i, s in enumerate(plan.steps) if s.kind == "FULLY_CONNECTED"
        }
        plan = set_paging(plan, directives)

    raw = json.loads(Path(args.input).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise FormatError("input file must hold a flat JSON integer array", path="$")
    expected = int(np.prod(plan.input_shape))
    if len(raw) != expected:
        raise SizeError(f"input has {len(raw)} elements, model expects {expected}")
    x = np.array(raw, dtype=np.int64)
    if x.size and (x.min() < -128 or x.max() > 127):
        raise RangeError("input values must be within int8 range")
    x = x.astype(np.int8).reshape(plan.input_shape)

    output = execute_plan(plan, x)
    result = {"output": output.ravel().tolist()}
    if args.oracle:
        model = load_model(args.model)
        graph = build_graph(model)
        naive = naive_quantized_reference(graph, x)
        real = float_reference(graph, x)
        real_q = quantize(real, graph.output_quant)
        result["naive_reference"] = naive.ravel().tolist()
        result["float_reference_quantized"] = np.asarray(real_q).ravel().tolist()
        result["max_abs_delta_naive"] = int(
            np.abs(output.astype(np.int64) - naive.astype(np.int64)).max()
        )
        result["max_abs_delta_float"] = int(
            np.abs(output.astype(np.int64) - np.asarray(real_q).astype(np.int64)).max()
        )
    print(json.dumps(result))
    return 0


def cmd_bench(args) -> int:
    _, plan, _ = _compile_pipeline(args.model)
    zero = np.full(
        plan.input_shape,
        max(-128, min(127, plan.input_quant.zero_point)),
        dtype=np.int8,
    )
    times = []
    for _ in range(args.iters):
        start = time.perf_counter()
        execute_plan(plan, zero)
        times.append(time.perf_counter() - start)
    times.sort()
    p95 = times[min(len(times) - 1, max(0, -(-95 * len(times) // 100) - 1))]
    print(
        json.dumps(
            {
                "iterations": args.iters,
                "median_s": statistics.median(times),
                "p95_s": p95,
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinyaot",
        description="Ahead-of-time compiler and int8 inference runtime for tiny neural networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="fold constants, plan memory, emit inference source")
    p.add_argument("model", help="MFJ model file")
    p.add_argument("-o", "--out-dir", required=True, help="output directory for artifacts")
    p.add_argument("--ram-budget", type=int, default=None, help="RAM budget in bytes")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run one inference")
    p.add_argument("model", help="MFJ model file")
    p.add_argument("--input", required=True, help="JSON file with a flat int8 array")
    p.add_argument("--paged", action="store_true", help="force paged execution of dense layers")
    p.add_argument("--oracle", action="store_true", help="also print reference outputs and deltas")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time repeated inference on the host")
    p.add_argument("model", help="MFJ model file")
    p.add_argument("--iters", type=int, default=100, help="iteration count (default 100)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "iters", 1) < 1:
        print("error: --iters must be >= 1", file=sys.stderr)
        return EXIT_FORMAT
    try:
        return args.func(args)
    except (FormatError, RangeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ShapeError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
