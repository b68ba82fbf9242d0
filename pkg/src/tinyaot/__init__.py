"""tinyaot: ahead-of-time compiler and int8 inference runtime for tiny
neural networks.

The pipeline: load an MFJ model file, build the shaped graph, fold all
inference-time constants into a CompiledPlan, optionally attach paging
directives from a RAM budget, then either execute the plan directly or
emit a standalone predict() source unit.
"""

from .compiler import (
    CompiledPlan,
    EmitOptions,
    PlanStep,
    emit_source,
    execute_plan,
    fold_constants,
    plan_to_json,
    set_paging,
)
from .errors import (
    FormatError,
    InfeasibleError,
    RangeError,
    ShapeError,
    SizeError,
    UnsupportedError,
)
from .graph import Graph, ShapedOp, build_graph, infer_shapes
from .kernels import (
    FoldedConv,
    FoldedFC,
    FoldedPool,
    average_pool2d,
    conv2d,
    depthwise_conv2d,
    extract_view,
    fully_connected,
    fully_connected_paged,
    relu,
    relu6,
    relu6_fused,
    relu_fused,
    reshape,
    softmax,
)
from .memplan import MemoryReport, plan_memory, working_set_bytes
from .model_format import (
    ModelFile,
    OpNode,
    Tensor,
    dumps_model,
    load_model,
    save_model,
    validate_model,
)
from .oracle import float_reference, naive_quantized_reference
from .quant import QuantParams, Requant, dequantize, quantize, requantize, round_half_away

__version__ = "0.1.0"
