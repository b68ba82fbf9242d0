"""Quantization arithmetic shared by every kernel.

The affine mapping is r = S * (q - Z) with per-tensor scale S and zero
point Z. Requantization rescales a 32-bit accumulator into the output
tensor's quantized domain through a folded scale ratio.

Rounding is half away from zero everywhere. The rule is applied
identically by the kernels, the code emitter, and the naive reference,
which is what makes bit-exact parity between those paths achievable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

I8_MIN = -128
I8_MAX = 127
I32_MIN = -(2**31)
I32_MAX = 2**31 - 1


@dataclass(frozen=True)
class QuantParams:
    """Scale and zero point attached to a tensor."""

    scale: float
    zero_point: int

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")


@dataclass(frozen=True)
class Requant:
    """Folded scale ratio (e.g. s_x*s_w/s_y) plus the output zero point."""

    multiplier: float
    output_zero: int

    def __post_init__(self):
        if not (math.isfinite(self.multiplier) and self.multiplier > 0):
            raise ValueError(f"multiplier must be positive and finite, got {self.multiplier}")


def round_half_away(x):
    """Round half away from zero. Works on scalars and numpy arrays."""
    if isinstance(x, np.ndarray):
        return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5)).astype(np.int64)
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def clamp(x, lo, hi):
    if isinstance(x, np.ndarray):
        return np.clip(x, lo, hi)
    return max(lo, min(hi, x))


def dequantize(q, p: QuantParams) -> float:
    """Map a quantized value back to the real line: S * (q - Z)."""
    if isinstance(q, np.ndarray):
        return p.scale * (q.astype(np.float64) - p.zero_point)
    return p.scale * (q - p.zero_point)


def quantize(r, p: QuantParams, lo: int = I8_MIN, hi: int = I8_MAX):
    """Map a real value onto the quantized grid, saturating at [lo, hi]."""
    if isinstance(r, np.ndarray):
        return clamp(round_half_away(r / p.scale) + p.zero_point, lo, hi)
    return clamp(round_half_away(r / p.scale) + p.zero_point, lo, hi)


def requantize(acc, r: Requant, lo: int = I8_MIN, hi: int = I8_MAX):
    """Rescale a wide accumulator into the output domain and saturate."""
    if isinstance(acc, np.ndarray):
        y = r.multiplier * acc.astype(np.float64)
    else:
        y = r.multiplier * acc
    return clamp(round_half_away(y) + r.output_zero, lo, hi)
