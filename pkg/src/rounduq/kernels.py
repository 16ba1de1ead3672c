"""Linear-algebra kernels under emulated precision, with attached error bounds.

All recurrences run strictly in the textbook order (left-to-right sums,
Doolittle elimination for tridiagonal systems). The private ``_*_batch``
helpers accept a leading batch axis so experiments can push many trials
through one Python-level loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import bounds, rng
from .bounds import Method
from .errors import (
    BoundInvalid,
    EmptyInput,
    NotRepresentable,
    ShapeMismatch,
    SingularReference,
    ZeroPivot,
)
from .precision import FP64, FloatFormat, round_array

DEFAULT_TARGET = 0.99


@dataclass(frozen=True)
class BoundEntry:
    """One method's constant and the bound it implies for a kernel run.

    ``confidence`` is the union-bound probability for the whole kernel; it is
    1 for the deterministic method. ``valid`` is False when DBEA breaks down.
    """

    valid: bool
    gamma: float | None
    bwd_bound: float | None
    fwd_bound: float | None
    member_zeta: float
    confidence: float


@dataclass
class KernelRun:
    kernel: str
    fmt: FloatFormat
    measured_bwd: float
    measured_fwd: float | None
    bounds: dict[str, BoundEntry]
    op_counts: dict[str, int]
    excluded: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "fmt": self.fmt.label,
            "measured_bwd": self.measured_bwd,
            "measured_fwd": self.measured_fwd,
            "excluded": self.excluded,
            "op_counts": dict(self.op_counts),
            "bounds": {k: vars(v) for k, v in self.bounds.items()},
            "extras": dict(self.extras),
        }


@dataclass(frozen=True)
class TriDiagonal:
    """Tridiagonal matrix: ``sub[i-1]`` is alpha_i (row i), ``sup[i]`` is nu_i."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        for name in ("sub", "diag", "sup"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.diag.shape[-1]
        if n < 1:
            raise EmptyInput("tridiagonal matrix needs at least one row")
        if self.sub.shape[-1] != n - 1 or self.sup.shape[-1] != n - 1:
            raise ShapeMismatch("off-diagonals must have length n - 1")

    @property
    def n(self) -> int:
        return self.diag.shape[-1]

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return _tri_matvec(self.sub, self.diag, self.sup, x)

    def rounded(self, fmt: FloatFormat) -> "TriDiagonal":
        return TriDiagonal(round_array(self.sub, fmt), round_array(self.diag, fmt),
                           round_array(self.sup, fmt))


@dataclass(frozen=True)
class LUFactors:
    """``L`` unit lower bidiagonal with ``sub_l``; ``U`` upper bidiagonal."""

    sub_l: np.ndarray
    diag_u: np.ndarray
    super_nu: np.ndarray

    def abs_product(self) -> TriDiagonal:
        """The tridiagonal matrix ``|L||U|``."""
        return _abs_lu(self.sub_l, self.diag_u, self.super_nu)


def _tri_matvec(sub, diag, sup, x):
    y = diag * x
    y[..., 1:] += sub * x[..., :-1]
    y[..., :-1] += sup * x[..., 1:]
    return y


def _abs_lu(l, u, nu) -> TriDiagonal:
    l, u, nu = np.abs(l), np.abs(u), np.abs(nu)
    d = u.copy()
    d[..., 1:] += l * nu
    return TriDiagonal(l * u[..., :-1], d, nu)


def _require_representable(fmt: FloatFormat, *arrays):
    for a in arrays:
        if not np.array_equal(round_array(a, fmt), a):
            raise NotRepresentable(f"inputs must be pre-rounded to {fmt.label}")


# Recurrences --------------------------------------------------------------


def _dot_batch(a, b, fmt: FloatFormat):
    """Recursive sum of ``a_i b_i`` over the last axis (broadcasting)."""
    s = round_array(a[..., 0] * b[..., 0], fmt)
    for i in range(1, a.shape[-1]):
        s = round_array(s + round_array(a[..., i] * b[..., i], fmt), fmt)
    return s


def dot_modeled(a, b, eta, xi):
    """Dot-product recursion with roundings replaced by given relative errors.

    Product ``i`` is scaled by ``1 + eta_i`` and partial sum ``i`` by
    ``1 + xi_i``; ``xi_0`` is unused since the first addition is exact.
    """
    n = a.shape[-1]
    s = a[..., 0] * b[..., 0] * (1.0 + eta[..., 0])
    for i in range(1, n):
        s = (s + a[..., i] * b[..., i] * (1.0 + eta[..., i])) * (1.0 + xi[..., i])
    return s


def _factor_batch(sub, diag, sup, fmt: FloatFormat):
    n = diag.shape[-1]
    l = np.empty_like(sub)
    u = np.empty_like(diag)
    u[..., 0] = diag[..., 0]
    for i in range(1, n):
        if np.any(u[..., i - 1] == 0.0):
            raise ZeroPivot(i - 1)
        l[..., i - 1] = round_array(sub[..., i - 1] / u[..., i - 1], fmt)
        u[..., i] = round_array(diag[..., i] - round_array(l[..., i - 1] * sup[..., i - 1], fmt), fmt)
    if np.any(u[..., n - 1] == 0.0):
        raise ZeroPivot(n - 1)
    return l, u


def _forward_batch(l, b, fmt: FloatFormat):
    y = np.empty_like(b)
    y[..., 0] = b[..., 0]
    for i in range(1, b.shape[-1]):
        y[..., i] = round_array(b[..., i] - round_array(l[..., i - 1] * y[..., i - 1], fmt), fmt)
    return y


def _backward_batch(u, sup, y, fmt: FloatFormat):
    n = y.shape[-1]
    if np.any(u == 0.0):
        raise ZeroPivot(int(np.argwhere(u == 0.0)[0][-1]))
    x = np.empty_like(y)
    x[..., n - 1] = round_array(y[..., n - 1] / u[..., n - 1], fmt)
    for i in range(n - 2, -1, -1):
        r = round_array(y[..., i] - round_array(sup[..., i] * x[..., i + 1], fmt), fmt)
        x[..., i] = round_array(r / u[..., i], fmt)
    return x


def thomas_batch(sub, diag, sup, b, fmt: FloatFormat):
    """Emulated Thomas solve for a batch of systems; returns ``(x, l, u)``."""
    l, u = _factor_batch(sub, diag, sup, fmt)
    y = _forward_batch(l, b, fmt)
    return _backward_batch(u, sup, y, fmt), l, u


# Bounds --------------------------------------------------------------------


def attach_bounds(u: float, n_gamma: int, k_union: int, q_target: float,
                  fwd_factor: float | None = None, c_bound: str = "paper") -> dict[str, BoundEntry]:
    """Constants for ``n_gamma`` rounding factors, confidence spread over ``k_union`` events."""
    zeta = bounds.solve_member_confidence(q_target, k_union)
    stats = bounds.log_error_stats_uniform(u, c_bound)
    out = {}
    for m in (Method.DBEA, Method.MMIBEA, Method.VIBEA):
        try:
            g = bounds.gamma_for(m, zeta, u, n_gamma, stats).gamma
        except BoundInvalid:
            out[m.value] = BoundEntry(False, None, None, None, zeta, 0.0)
            continue
        conf = 1.0 if m is Method.DBEA else bounds.union_confidence(zeta, k_union)
        fwd = g * fwd_factor if fwd_factor is not None else None
        out[m.value] = BoundEntry(True, g, g, fwd, zeta, conf)
    return out


def thomas_bounds(u: float, n: int, q_target: float, c_factor: float | None = None,
                  c_bound: str = "paper") -> dict[str, BoundEntry]:
    """Solve constants ``gamma_LS`` built from the one- and two-factor constants.

    The deterministic method uses ``g1 + g2 + g1 g2`` (``DBEA``) and the
    ``2 g1 + g2 + g1 g2`` form is reported alongside as ``DBEA_final``.
    """
    k = 7 * n - 6
    zeta = bounds.solve_member_confidence(q_target, k)
    stats = bounds.log_error_stats_uniform(u, c_bound)
    out = {}
    variants = [(Method.DBEA.value, Method.DBEA, "dbea_sentence"),
                ("DBEA_final", Method.DBEA, "final"),
                (Method.MMIBEA.value, Method.MMIBEA, "final"),
                (Method.VIBEA.value, Method.VIBEA, "final")]
    for key, m, variant in variants:
        g1 = bounds.gamma_for(m, zeta, u, 1, stats).gamma
        g2 = bounds.gamma_for(m, zeta, u, 2, stats).gamma
        g = bounds.compose_ls(g1, g2, variant)
        conf = 1.0 if m is Method.DBEA else bounds.union_confidence(zeta, k)
        fwd = g * c_factor if c_factor is not None else None
        out[key] = BoundEntry(True, g, g, fwd, zeta, conf)
    return out


# Public kernels ------------------------------------------------------------


def dot_emulated(a, b, fmt: FloatFormat, q_target: float = DEFAULT_TARGET,
                 c_bound: str = "paper") -> tuple[float, KernelRun]:
    """Recursive dot product in ``fmt`` with its backward-error report."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch("dot needs two vectors of equal length")
    n = a.shape[0]
    if n == 0:
        raise EmptyInput("empty vectors")
    _require_representable(fmt, a, b)
    y_hat = float(_dot_batch(a, b, fmt))
    y = float(_dot_batch(a, b, FP64))
    scale = float(np.abs(a) @ np.abs(b))
    bwd = abs(y_hat - y) / scale if scale > 0 else 0.0
    fwd = abs(y_hat - y) / abs(y) if y != 0 else None
    cond = scale / abs(y) if y != 0 else None
    run = KernelRun("dot", fmt, bwd, fwd, attach_bounds(fmt.unit_roundoff, n, n, q_target, cond, c_bound),
                    {"gamma": n, "union": n}, extras={"y_hat": y_hat, "y": y})
    return y_hat, run


def _componentwise_ratio(num, den):
    mask = den > 0
    excluded = int(np.count_nonzero(~mask))
    if not mask.any():
        return 0.0, excluded
    return float(np.max(num[mask] / den[mask])), excluded


def matvec_emulated(A, x, fmt: FloatFormat, q_target: float = DEFAULT_TARGET,
                    c_bound: str = "paper") -> tuple[np.ndarray, KernelRun]:
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ShapeMismatch("matvec needs A (m x n) and x (n)")
    m, n = A.shape
    if m == 0 or n == 0:
        raise EmptyInput("empty matrix")
    _require_representable(fmt, A, x)
    y_hat = _dot_batch(A, x[None, :], fmt)
    y = _dot_batch(A, x[None, :], FP64)
    scale = np.abs(A) @ np.abs(x)
    err = np.abs(y_hat - y)
    bwd, excluded = _componentwise_ratio(err, scale)
    nz = y != 0
    fwd = float(np.max(err[nz] / np.abs(y[nz]))) if nz.any() else None
    cond = float(np.max(scale[nz] / np.abs(y[nz]))) if nz.any() else None
    run = KernelRun("matvec", fmt, bwd, fwd,
                    attach_bounds(fmt.unit_roundoff, n, m * n, q_target, cond, c_bound),
                    {"gamma": n, "union": m * n}, excluded)
    return y_hat, run


def matmul_emulated(A, B, fmt: FloatFormat, q_target: float = DEFAULT_TARGET,
                    c_bound: str = "paper") -> tuple[np.ndarray, KernelRun]:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeMismatch("matmul needs A (m x n) and B (n x t)")
    m, n = A.shape
    t = B.shape[1]
    if m == 0 or n == 0 or t == 0:
        raise EmptyInput("empty matrix")
    _require_representable(fmt, A, B)
    a = A[:, None, :]
    b = B.T[None, :, :]
    C_hat = _dot_batch(a, b, fmt)
    C = _dot_batch(a, b, FP64)
    scale = np.abs(A) @ np.abs(B)
    err = np.abs(C_hat - C)
    bwd, excluded = _componentwise_ratio(err, scale)
    nz = C != 0
    fwd = float(np.max(err[nz] / np.abs(C[nz]))) if nz.any() else None
    cond = float(np.max(scale[nz] / np.abs(C[nz]))) if nz.any() else None
    run = KernelRun("matmul", fmt, bwd, fwd,
                    attach_bounds(fmt.unit_roundoff, n, m * n * t, q_target, cond, c_bound),
                    {"gamma": n, "union": m * n * t}, excluded)
    return C_hat, run


def thomas_factor(A: TriDiagonal, fmt: FloatFormat) -> LUFactors:
    l, u = _factor_batch(A.sub, A.diag, A.sup, fmt)
    return LUFactors(l, u, A.sup.copy())


def thomas_forward(L: LUFactors, b, fmt: FloatFormat) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != L.diag_u.shape:
        raise ShapeMismatch("right-hand side does not match the factors")
    return _forward_batch(L.sub_l, b, fmt)


def thomas_backward(U: LUFactors, y, fmt: FloatFormat) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != U.diag_u.shape:
        raise ShapeMismatch("right-hand side does not match the factors")
    return _backward_batch(U.diag_u, U.super_nu, y, fmt)


def _banded(A: TriDiagonal) -> np.ndarray:
    n = A.n
    ab = np.zeros((3, n))
    ab[0, 1:] = A.sup
    ab[1] = A.diag
    ab[2, :-1] = A.sub
    return ab


def reference_inverse(A: TriDiagonal) -> np.ndarray:
    """Dense ``A^{-1}`` from ``n`` float64 banded solves against unit vectors."""
    try:
        inv = linalg.solve_banded((1, 1), _banded(A), np.eye(A.n), check_finite=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularReference(str(e)) from e
    if not np.all(np.isfinite(inv)):
        raise SingularReference("reference solve produced non-finite values")
    return inv


def reference_solve(A: TriDiagonal, b) -> np.ndarray:
    try:
        x = linalg.solve_banded((1, 1), _banded(A), np.asarray(b, dtype=np.float64),
                                check_finite=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularReference(str(e)) from e
    if not np.all(np.isfinite(x)):
        raise SingularReference("reference solve produced non-finite values")
    return x


@dataclass
class ThomasDiagnostics:
    """Quantities derived from one emulated solve."""

    lu_abs_x: np.ndarray  # |L||U||x_hat|
    c_abs: float  # || |A^-1| |L||U||x_hat| ||_inf
    c_rel: float  # c_abs / ||x_hat||_inf
    bwd: float
    fwd: float | None
    excluded: int


def thomas_diagnostics(A: TriDiagonal, b, LU: LUFactors, x_hat, x_ref=None,
                       inverse=None) -> ThomasDiagnostics:
    w = LU.abs_product().matvec(np.abs(x_hat))
    r = np.abs(A.matvec(x_hat) - b)
    bwd, excluded = _componentwise_ratio(r, w)
    if inverse is None:
        inverse = reference_inverse(A)
    if x_ref is None:
        x_ref = inverse @ b
    c_abs = float(np.max(np.abs(inverse) @ w))
    xn = float(np.max(np.abs(x_hat)))
    c_rel = c_abs / xn if xn > 0 else 0.0
    fwd = float(np.max(np.abs(x_hat - x_ref))) / xn if xn > 0 else None
    return ThomasDiagnostics(w, c_abs, c_rel, bwd, fwd, excluded)


def thomas_solve(A: TriDiagonal, b, fmt: FloatFormat, q_target: float = DEFAULT_TARGET,
                 c_bound: str = "paper") -> tuple[np.ndarray, KernelRun]:
    """Factor, forward and backward substitution in ``fmt``.

    The forward bound uses ``C_LS = || |A^-1| |L||U||x_hat| || / ||x_hat||``
    with ``A^-1`` from float64 banded solves.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise ShapeMismatch("right-hand side does not match the matrix")
    _require_representable(fmt, A.sub, A.diag, A.sup, b)
    LU = thomas_factor(A, fmt)
    y = thomas_forward(LU, b, fmt)
    x_hat = thomas_backward(LU, y, fmt)
    inv = reference_inverse(A)
    d = thomas_diagnostics(A, b, LU, x_hat, reference_solve(A, b), inv)
    run = KernelRun("thomas", fmt, d.bwd, d.fwd,
                    thomas_bounds(fmt.unit_roundoff, A.n, q_target, d.c_rel, c_bound),
                    {"gamma_1": 1, "gamma_2": 2, "union": 7 * A.n - 6}, d.excluded,
                    extras={"C_LS": d.c_rel, "C_LS_abs": d.c_abs})
    return x_hat, run


# Experiments ---------------------------------------------------------------


@dataclass
class DotExperiment:
    """Per-trial backward errors of a seeded dot-product experiment."""

    n: int
    fmt: FloatFormat
    q_target: float
    measured_bwd: np.ndarray
    modeled_bwd: np.ndarray | None
    bounds: dict[str, BoundEntry]

    def coverage(self, method: str) -> float:
        e = self.bounds[method]
        if not e.valid:
            return float("nan")
        return float(np.mean(self.measured_bwd <= e.bwd_bound))


def uniform_data(fmt: FloatFormat, shape, gen: np.random.Generator) -> np.ndarray:
    """U[-1, 1] samples rounded into ``fmt``."""
    return round_array(gen.uniform(-1.0, 1.0, shape), fmt)


def dot_experiment(n: int, fmt: FloatFormat, trials: int, seed: int,
                   q_target: float = DEFAULT_TARGET, with_model: bool = False,
                   c_bound: str = "paper", chunk: int = 1000) -> DotExperiment:
    """Trial ``i`` draws its vectors from substream ``(seed, DATA, i)`` and,
    if requested, its modeled errors from ``(seed, MODEL, i)``."""
    if n < 1 or trials < 1:
        raise EmptyInput("n and trials must be positive")
    u = fmt.unit_roundoff
    bwd = np.empty(trials)
    model = np.empty(trials) if with_model else None
    for start in range(0, trials, chunk):
        idx = range(start, min(start + chunk, trials))
        ab = np.stack([uniform_data(fmt, (2, n), rng.substream(seed, rng.DATA, i)) for i in idx])
        a, b = ab[:, 0], ab[:, 1]
        scale = np.sum(np.abs(a) * np.abs(b), axis=-1)
        y = _dot_batch(a, b, FP64)
        y_hat = _dot_batch(a, b, fmt)
        bwd[idx.start:idx.stop] = np.abs(y_hat - y) / scale
        if with_model:
            d = np.stack([rng.substream(seed, rng.MODEL, i).uniform(-u, u, (2, n)) for i in idx])
            s = dot_modeled(a, b, d[:, 0], d[:, 1])
            model[idx.start:idx.stop] = np.abs(s - y) / scale
    return DotExperiment(n, fmt, q_target, bwd, model,
                         attach_bounds(u, n, n, q_target, None, c_bound))
