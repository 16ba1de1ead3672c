"""Deterministic and probabilistic rounding-error bounds with a low-precision emulator."""

from .bounds import (
    BoundResult,
    BoundSpec,
    LogErrorStats,
    Method,
    coverage_oracle,
    critical_sizes,
    gamma_dbea,
    gamma_mibea_original,
    gamma_mmibea,
    gamma_vibea,
    lambda_dagger,
    log_error_stats_uniform,
    solve_member_confidence,
    union_confidence,
)
from .precision import (
    BF16,
    FP16,
    FP32,
    FP64,
    ErrorModel,
    FloatFormat,
    Op,
    RoundingMode,
    emulated_op,
    parse_format,
    realized_delta,
    round_to_format,
    sample_errors,
)

__version__ = "0.1.0"
