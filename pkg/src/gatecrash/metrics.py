"""Attack-quality metrics: FLOPs recovery, pixel error, signal-to-noise.

Internal tensors live in [0,1]; pixel error is reported in squared
255-scale units so the usual 8-bit PSNR figures come out (MAX = 255).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SampleMetrics", "mse_255", "psnr", "arp", "mean_arp"]

MAX_PIXEL = 255.0


@dataclass
class SampleMetrics:
    clean_flops: float
    attacked_flops: float
    full_flops: float
    mse_255: float
    psnr_db: float


def mse_255(x0, x1) -> float:
    """Mean squared pixel error with pixels scaled to [0, 255]."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {x1.shape}")
    diff = MAX_PIXEL * x1 - MAX_PIXEL * x0
    return float(np.mean(diff * diff))


def psnr(mse: float) -> float:
    """Peak signal-to-noise ratio in dB for a 255-scale MSE; inf when mse=0."""
    if mse < 0:
        raise ValueError("mse must be >= 0")
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(MAX_PIXEL * MAX_PIXEL / mse)


def arp(clean_flops: float, attacked_flops: float, full_flops: float) -> float:
    """Percentage of the dynamic FLOPs savings recovered by the attack.

    Clipped to [0, 100].  Undefined when the clean run already used the
    full cost (no savings to recover); callers exclude such samples.
    """
    if clean_flops > full_flops:
        raise ValueError("clean FLOPs exceed full FLOPs")
    if attacked_flops > full_flops:
        raise ValueError("attacked FLOPs exceed full FLOPs (accounting bug)")
    savings = full_flops - clean_flops
    if savings <= 0:
        raise ValueError("no savings to recover (clean == full)")
    recovery = 100.0 * (attacked_flops - clean_flops) / savings
    return min(100.0, max(0.0, recovery))


def mean_arp(triples) -> float:
    """Dataset-level recovery: mean per-sample arp, skipping zero-savings samples.

    Returns nan when every sample is excluded.
    """
    values = [
        arp(c, a, f) for c, a, f in triples if f > c
    ]
    if not values:
        return math.nan
    return float(np.mean(values))
