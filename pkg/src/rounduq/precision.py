"""Binary floating-point formats and bit-exact round-to-nearest emulation.

Values live in float64, which serves as the exact reference precision. A
format with ``p`` significand bits is emulated by rounding the float64
significand to ``p`` bits (ties to even) and then checking the exponent range.
Results of +, -, *, / on representable operands are computed once in float64
and rounded once more; that double rounding is harmless when 53 >= 2p + 2,
hence the ``p <= 25`` limit (``p = 53`` is accepted as the identity format).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (
    DivisionByZero,
    NonFinite,
    NotRepresentable,
    OverflowOrUnderflow,
    ValidationError,
    ZeroReference,
)

MAX_EMULATED_PRECISION = 25
REFERENCE_PRECISION = 53

_SIGN = np.uint64(0x8000000000000000)
_MAG = np.uint64(0x7FFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class FloatFormat:
    """A binary format with ``precision`` significand bits (implicit bit included).

    ``subnormals=False`` follows the no-underflow model: any nonzero result
    below ``2**e_min`` raises. ``subnormals=True`` rounds such results to the
    fixed quantum ``2**(e_min - precision + 1)`` instead (gradual underflow).
    """

    precision: int
    e_min: int
    e_max: int
    subnormals: bool = False
    name: str | None = field(default=None, compare=False)
    base: int = 2

    def __post_init__(self):
        if self.base != 2:
            raise ValidationError("only base 2 is supported")
        if self.precision < 2:
            raise ValidationError("precision must be at least 2")
        if self.precision > MAX_EMULATED_PRECISION and self.precision != REFERENCE_PRECISION:
            raise ValidationError(
                f"precision {self.precision} unsupported: emulation needs p <= "
                f"{MAX_EMULATED_PRECISION} (or p = 53 for the reference format)"
            )
        if not self.e_min < self.e_max:
            raise ValidationError("e_min must be below e_max")
        if self.e_min < -1022 or self.e_max > 1023:
            raise ValidationError("exponent range exceeds the reference format")

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** -self.precision

    @property
    def max_value(self) -> float:
        return (2.0 - 2.0 ** (1 - self.precision)) * 2.0 ** self.e_max

    @property
    def min_normal(self) -> float:
        return 2.0 ** self.e_min

    @property
    def quantum_min(self) -> float:
        """Spacing of the subnormal grid."""
        return 2.0 ** (self.e_min - self.precision + 1)

    @property
    def is_reference(self) -> bool:
        return self.precision == REFERENCE_PRECISION

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return f"p{self.precision}e{self.e_min}:{self.e_max}"

    def with_subnormals(self, enabled: bool = True) -> "FloatFormat":
        return FloatFormat(self.precision, self.e_min, self.e_max, enabled, self.name)


FP16 = FloatFormat(11, -14, 15, name="fp16")
BF16 = FloatFormat(8, -126, 127, name="bf16")
FP32 = FloatFormat(24, -126, 127, name="fp32")
FP64 = FloatFormat(53, -1022, 1023, subnormals=True, name="fp64")

PRESETS = {f.name: f for f in (FP16, BF16, FP32, FP64)}

_CUSTOM = re.compile(r"^p(\d+)e(-?\d+):(-?\d+)$")


def parse_format(spec: str) -> FloatFormat:
    """Look up a preset name or parse ``p<P>e<Emin>:<Emax>``."""
    key = spec.strip().lower()
    if key in PRESETS:
        return PRESETS[key]
    m = _CUSTOM.match(key)
    if not m:
        raise ValidationError(f"unknown format {spec!r}")
    p, lo, hi = (int(g) for g in m.groups())
    return FloatFormat(p, lo, hi)


@dataclass(frozen=True)
class RoundingMode:
    """``fl(z) = z(1 + delta)**rho``; only nearest-even ties are modeled."""

    rho: int = 1
    tie_rule: str = "nearest-even"

    def __post_init__(self):
        if self.rho not in (1, -1):
            raise ValidationError("rho must be +1 or -1")
        if self.tie_rule != "nearest-even":
            raise ValidationError("only nearest-even ties are supported")


@dataclass(frozen=True)
class ErrorModel:
    """i.i.d. relative rounding errors drawn from U[-halfwidth, halfwidth]."""

    halfwidth: float
    kind: str = "uniform"

    def __post_init__(self):
        if self.kind != "uniform":
            raise ValidationError("only the uniform error model is implemented")
        if not 0.0 < self.halfwidth < 1.0:
            raise ValidationError("halfwidth must lie in (0, 1)")

    @classmethod
    def for_format(cls, fmt: FloatFormat) -> "ErrorModel":
        return cls(fmt.unit_roundoff)


class Op(str, enum.Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"


def _round_significand(x: np.ndarray, p: int) -> np.ndarray:
    # Round-half-even at bit (53 - p) of the float64 magnitude. A carry out of
    # the significand bumps the exponent field, which is the correct result.
    drop = np.uint64(53 - p)
    bits = x.view(np.uint64)
    sign = bits & _SIGN
    mag = bits & _MAG
    lsb = (mag >> drop) & np.uint64(1)
    half_minus_one = (np.uint64(1) << (drop - np.uint64(1))) - np.uint64(1)
    mag = (mag + half_minus_one + lsb) & ~((np.uint64(1) << drop) - np.uint64(1))
    return (mag | sign).view(np.float64)


def round_array(x, fmt: FloatFormat) -> np.ndarray:
    """Vectorized ``round_to_format``; returns a new float64 array."""
    x = np.array(x, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(x)):
        raise NonFinite("cannot round NaN or infinity")
    if fmt.is_reference:
        return x
    r = _round_significand(x, fmt.precision)
    tiny = np.abs(x) < fmt.min_normal
    if fmt.subnormals:
        if np.any(tiny):
            q = fmt.quantum_min
            r = np.where(tiny, np.rint(x / q) * q, r)
    a = np.abs(r)
    if np.any(a > fmt.max_value):
        raise OverflowOrUnderflow(f"magnitude exceeds {fmt.label} range")
    if not fmt.subnormals and np.any((a < fmt.min_normal) & (x != 0.0)):
        raise OverflowOrUnderflow(f"magnitude below {fmt.label} normal range")
    return r


def round_to_format(z: float, fmt: FloatFormat) -> float:
    """Nearest member of ``fmt`` (ties to even) for a finite float64 ``z``."""
    return float(round_array(np.float64(z), fmt))


def is_representable(x, fmt: FloatFormat) -> bool:
    x = np.asarray(x, dtype=np.float64)
    try:
        return bool(np.array_equal(round_array(x, fmt), x))
    except (OverflowOrUnderflow, NonFinite):
        return False


def emulated_op(a: float, b: float, op: Op | str, fmt: FloatFormat) -> float:
    """``fl(a op b)`` for operands already representable in ``fmt``."""
    op = Op(op)
    if round_to_format(a, fmt) != a or round_to_format(b, fmt) != b:
        raise NotRepresentable(f"operands must be members of {fmt.label}")
    if op is Op.ADD:
        z = a + b
    elif op is Op.SUB:
        z = a - b
    elif op is Op.MUL:
        z = a * b
    else:
        if b == 0.0:
            raise DivisionByZero("division by zero")
        z = a / b
    return round_to_format(z, fmt)


def realized_delta(exact: float, computed: float) -> float:
    """The ``delta`` with ``computed = exact * (1 + delta)``."""
    if exact == 0.0:
        if computed == 0.0:
            return 0.0
        raise ZeroReference("relative error against an exact zero")
    return computed / exact - 1.0


def sample_errors(model: ErrorModel, count: int, seed: int) -> np.ndarray:
    if count < 0:
        raise ValidationError("count must be non-negative")
    u = model.halfwidth
    return rng.substream(seed, rng.ERRORS).uniform(-u, u, count)
