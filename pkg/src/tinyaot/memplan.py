"""Static memory accounting and paging decisions.

RAM peaks while the most memory-hungry step runs, so the planner models
each step's working set independently and takes the maximum. The
itemization (bytes; i8 elements are 1 byte, accumulators 4, folded
reals 8 in flash):

    FULLY_CONNECTED, unpaged   in(m*n) + out(m*p) + weights(n*p)
                               + accumulators(4*n*p) + bias(p)
    FULLY_CONNECTED, paged(s)  in(m*n, shared) + page weights(s*n)
                               + bias terms(4*s) + accumulators(4*s)
                               + outputs(s)
    CONV_2D                    in + out + view(fh*fw*c) + accumulators(4*f)
    DEPTHWISE_CONV_2D          in + out + view(fh*fw*c) + accumulators(4*k)
    AVERAGE_POOL_2D            in + out + view(fh*fw*c) + accumulators(4*c)
    RESHAPE                    in + out
    SOFTMAX                    in + out + exp scratch(8*n)

Only FULLY_CONNECTED steps can be paged: a page groups a run of output
neurons, each carrying its weight column, bias term, accumulator and
output element, with the input row shared across pages. When a budget
is given and a step exceeds it, the smallest page count that fits is
chosen; an unreachable budget raises InfeasibleError naming the step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .compiler import CompiledPlan, PlanStep, set_paging
from .errors import InfeasibleError
from .kernels import FoldedConv, FoldedFC

ACC_BYTES = 4
REAL_BYTES = 8


@dataclass
class StepMemory:
    op_index: int
    working_set_bytes: int
    paged: bool
    page_size: Optional[int]


@dataclass
class MemoryReport:
    flash_bytes: int
    steps: list[StepMemory]
    peak_ram_bytes: int

    def to_json(self) -> dict:
        return {
            "flash_bytes": self.flash_bytes,
            "peak_ram_bytes": self.peak_ram_bytes,
            "steps": [
                {
                    "op": s.op_index,
                    "working_set_bytes": s.working_set_bytes,
                    "paged": s.paged,
                    "page_size": s.page_size,
                }
                for s in self.steps
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _elems(shape) -> int:
    return int(math.prod(shape))


def working_set_bytes(step: PlanStep, page_size: Optional[int] = None) -> int:
    """Bytes simultaneously live while the step runs (see module doc)."""
    inp = _elems(step.in_shape)
    out = _elems(step.out_shape)
    if step.kind == "FULLY_CONNECTED":
        n, p = step.folded.weights.shape
        if page_size is None:
            return inp + out + n * p + ACC_BYTES * n * p + p
        return inp + page_size * n + ACC_BYTES * page_size + ACC_BYTES * page_size + page_size
    if step.kind in ("CONV_2D", "DEPTHWISE_CONV_2D"):
        _, fh, fw, _ = step.folded.filters.shape
        c = step.in_shape[3]
        k = step.out_shape[3]
        return inp + out + fh * fw * c + ACC_BYTES * k
    if step.kind == "AVERAGE_POOL_2D":
        fh, fw = step.attrs["filter_h"], step.attrs["filter_w"]
        c = step.in_shape[3]
        return inp + out + fh * fw * c + ACC_BYTES * c
    if step.kind == "SOFTMAX":
        return inp + out + REAL_BYTES * step.in_shape[-1]
    return inp + out  # RESHAPE


def flash_bytes(step: PlanStep) -> int:
    """Constant bytes the step contributes to read-only storage."""
    folded = step.folded
    if isinstance(folded, FoldedFC):
        n, p = folded.weights.shape
        return n * p + REAL_BYTES * p + ACC_BYTES * p + REAL_BYTES + 3 * ACC_BYTES
    if isinstance(folded, FoldedConv):
        k = len(folded.filter_sums)
        return folded.filters.size + REAL_BYTES * k + ACC_BYTES * k + REAL_BYTES + 3 * ACC_BYTES
    if step.kind == "AVERAGE_POOL_2D":
        return 2 * REAL_BYTES
    return 0


def _fit_fc_paging(step: PlanStep, budget: int) -> Optional[int]:
    """Smallest page count whose working set fits, returned as page_size."""
    p = step.folded.weights.shape[1]
    for count in range(1, p + 1):
        size = math.ceil(p / count)
        if working_set_bytes(step, page_size=size) <= budget:
            return size
    return None


def plan_memory(
    p: CompiledPlan, ram_budget: Optional[int] = None
) -> tuple[CompiledPlan, MemoryReport]:
    """Attach paging directives where a budget demands them and report.

    Paging never changes outputs (the paged kernel is bit-identical);
    the planner only decides where it runs and with what page size.
    """
    if ram_budget is not None and ram_budget <= 0:
        raise ValueError("ram_budget must be positive")

    directives: dict[int, int] = {}
    for idx, step in enumerate(p.steps):
        ws = working_set_bytes(step)
        if ram_budget is None or ws <= ram_budget:
            continue
        if step.kind != "FULLY_CONNECTED":
            raise InfeasibleError(
                f"step {idx} ({step.kind}) needs {ws} bytes, budget is {ram_budget} "
                "and only FULLY_CONNECTED steps can be paged",
                step_index=idx,
            )
        size = _fit_fc_paging(step, ram_budget)
        if size is None:
            worst = working_set_bytes(step, page_size=1)
            raise InfeasibleError(
                f"step {idx} (FULLY_CONNECTED) needs {worst} bytes even fully paged, "
                f"budget is {ram_budget}",
                step_index=idx,
            )
        directives[idx] = size

    planned = set_paging(p, directives) if directives else p
    steps = [
        StepMemory(
            op_index=idx,
            working_set_bytes=working_set_bytes(step, page_size=step.page_size),
            paged=step.page_size is not None,
            page_size=step.page_size,
        )
        for idx, step in enumerate(planned.steps)
    ]
    report = MemoryReport(
        flash_bytes=sum(flash_bytes(s) for s in planned.steps),
        steps=steps,
        peak_ram_bytes=max((s.working_set_bytes for s in steps), default=0),
    )
    return planned, report
