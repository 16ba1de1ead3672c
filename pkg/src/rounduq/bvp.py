"""Stochastic two-point boundary value problem

    ((1 + theta1 x) u')' = -50 theta2**2,   u(0) = u(1) = 0,

discretized with second-order central differences on ``M`` intervals, solved
by the emulated Thomas algorithm, and integrated with a Riemann sum to give
the quantity ``p(theta1, theta2) = int_0^1 u dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from . import bounds, kernels, rng
from .bounds import Method
from .errors import BoundInvalid, DomainError, EmptyInput, ValidationError, ZeroPivot
from .kernels import TriDiagonal
from .precision import FP64, FloatFormat, round_array

THETA1_RANGE = (0.1, 1.1)
THETA2_RANGE = (1.0, 2.0)


@dataclass(frozen=True)
class BvpParams:
    theta1: float
    theta2: float
    M: int

    def __post_init__(self):
        if self.theta1 < 0:
            raise ValidationError("theta1 must be non-negative")
        if self.theta2 <= 0:
            raise ValidationError("theta2 must be positive")
        if self.M < 2:
            raise ValidationError("M must be at least 2")

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def forcing(self) -> float:
        return 50.0 * self.theta2 ** 2


def coefficients(theta1, M: int):
    """Stencil coefficients for every interior node ``i = 1..M-1``.

    Returns ``(alpha, beta, nu)``, each of shape ``(..., M-1)``; ``alpha[0]``
    and ``nu[-1]`` multiply the boundary values and are dropped by ``assemble``.
    """
    i = np.arange(1, M, dtype=np.float64)
    h = np.asarray(theta1, dtype=np.float64)[..., None] / M
    return 1.0 + h * (i - 0.5), -2.0 - 2.0 * h * i, 1.0 + h * (i + 0.5)


def assemble(params: BvpParams) -> tuple[TriDiagonal, np.ndarray]:
    alpha, beta, nu = coefficients(params.theta1, params.M)
    b = np.full(params.M - 1, -params.forcing * params.dx ** 2)
    return TriDiagonal(alpha[1:], beta, nu[:-1]), b


def _assemble_batch(theta1, theta2, M):
    alpha, beta, nu = coefficients(theta1, M)
    b = np.broadcast_to((-50.0 * np.asarray(theta2) ** 2 / M ** 2)[:, None], beta.shape).copy()
    return alpha[:, 1:], beta, nu[:, :-1], b


def exact_solution(x, theta1: float, theta2: float, derivative: int = 0):
    """Closed-form solution or one of its first three derivatives."""
    x = np.asarray(x, dtype=np.float64)
    k = 50.0 * theta2 ** 2
    if theta1 == 0.0:
        forms = [k / 2 * x * (1 - x), k * (0.5 - x), -k + 0 * x, 0 * x]
        return forms[derivative]
    lg = math.log1p(theta1)
    s = 1.0 + theta1 * x
    if derivative == 0:
        return k / theta1 * (np.log1p(theta1 * x) / lg - x)
    if derivative == 1:
        return k / theta1 * (theta1 / (s * lg) - 1.0)
    if derivative == 2:
        return -k * theta1 / (s ** 2 * lg)
    if derivative == 3:
        return 2.0 * k * theta1 ** 2 / (s ** 3 * lg)
    raise ValidationError("derivative order must be 0..3")


def analytic_p(theta1, theta2):
    """``int_0^1 u dx`` in closed form (vectorized)."""
    t1 = np.asarray(theta1, dtype=np.float64)
    if np.any(t1 <= 0):
        raise DomainError("theta1 must be positive")
    lg = np.log1p(t1)
    p = 25.0 * np.asarray(theta2) ** 2 * (-2.0 * t1 + (2.0 + t1) * lg) / (t1 ** 2 * lg)
    return float(p) if np.ndim(p) == 0 else p


def expected_p() -> float:
    """``E[p]`` under the parameter distribution, by quadrature."""
    a, b = THETA1_RANGE
    g, _ = integrate.quad(lambda t: analytic_p(t, 1.0), a, b, epsabs=0, epsrel=1e-12, limit=200)
    lo, hi = THETA2_RANGE
    m2 = (hi ** 3 - lo ** 3) / 3.0
    return g / (b - a) * m2 / (hi - lo)


class RiemannResult(NamedTuple):
    p_hat: float
    rounding_bound: float
    confidence_count: int


def riemann_integrate(u_hat, dx: float, fmt: FloatFormat, *, q_target: float = 0.99,
                      method: Method | str = Method.VIBEA, solve_c_abs: float | None = None,
                      c_bound: str = "paper") -> RiemannResult:
    """Left-to-right ``sum u_i dx`` in ``fmt`` with its rounding bound.

    Alone the bound is ``dx gamma_{M-1} ||u_hat||_1`` over ``M - 1`` events.
    Given ``solve_c_abs`` (the absolute ``C_LS`` of the upstream Thomas solve)
    it becomes ``dx ((M-1) gamma_LS C_LS + gamma_{M-1} ||u_hat||_1)`` over
    ``8M - 14`` events. Returns ``inf`` when the deterministic constant breaks down.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u_hat.ndim != 1 or u_hat.size == 0:
        raise EmptyInput("need a nonempty vector")
    if dx <= 0:
        raise ValidationError("dx must be positive")
    n = u_hat.size
    method = Method(method)
    p_hat = float(kernels._dot_batch(u_hat, np.full(n, dx), fmt))
    count = n if solve_c_abs is None else 8 * (n + 1) - 14
    zeta = bounds.solve_member_confidence(q_target, count)
    u = fmt.unit_roundoff
    stats = bounds.log_error_stats_uniform(u, c_bound)
    try:
        g_sum = bounds.gamma_for(method, zeta, u, n, stats).gamma
        total = g_sum * float(np.sum(np.abs(u_hat)))
        if solve_c_abs is not None:
            g1 = bounds.gamma_for(method, zeta, u, 1, stats).gamma
            g2 = bounds.gamma_for(method, zeta, u, 2, stats).gamma
            variant = "dbea_sentence" if method is Method.DBEA else "final"
            total += n * bounds.compose_ls(g1, g2, variant) * solve_c_abs
    except BoundInvalid:
        return RiemannResult(p_hat, math.inf, count)
    return RiemannResult(p_hat, dx * total, count)


@dataclass
class DiscretizationEnclosure:
    """Interval ``[eps_d_lo, eps_d_hi]`` containing ``R u - u_tilde`` node by node."""

    x: np.ndarray
    t_inf: np.ndarray
    t_sup: np.ndarray
    eps_d_lo: np.ndarray
    eps_d_hi: np.ndarray
    dx: float

    @property
    def width(self) -> float:
        return float(np.max(self.eps_d_hi - self.eps_d_lo))

    @property
    def qoi_interval(self) -> tuple[float, float]:
        """Range of ``dx * sum(eps_d)``, the discretization error carried into p."""
        return self.dx * float(np.sum(self.eps_d_lo)), self.dx * float(np.sum(self.eps_d_hi))

    @property
    def qoi_width(self) -> float:
        lo, hi = self.qoi_interval
        return hi - lo

    def contains(self, eps) -> np.ndarray:
        return (self.eps_d_lo <= eps) & (eps <= self.eps_d_hi)


def _third_derivative_ranges(params: BvpParams, samples: int, pad: float):
    # Per-cell range of u''' by dense sampling, widened by ``pad`` of its width.
    edges = np.linspace(0.0, 1.0, params.M + 1)
    s = np.linspace(0.0, 1.0, samples)
    pts = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * s[None, :]
    vals = exact_solution(pts, params.theta1, params.theta2, 3)
    lo, hi = vals.min(axis=1), vals.max(axis=1)
    w = hi - lo
    return lo - pad * w, hi + pad * w


def discretization_enclosure(params: BvpParams, samples_per_cell: int = 64,
                             pad: float = 0.01) -> DiscretizationEnclosure:
    """Enclose the finite-difference error from Taylor-Lagrange remainders.

    The truncation ``t = A R u - b`` at node ``i`` equals
    ``dx**3/6 (nu_i u'''(c+) - alpha_i u'''(c-))`` for unknown points
    ``c-`` and ``c+`` in the neighbouring cells; the lower-order Taylor terms
    cancel exactly because ``u`` solves the ODE. Bounding ``u'''`` per cell
    bounds ``t``, and ``eps_d = A^{-1} t`` is enclosed by splitting ``A^{-1}``
    into its positive and negative parts.
    """
    M, dx = params.M, params.dx
    lo3, hi3 = _third_derivative_ranges(params, samples_per_cell, pad)
    alpha, _, nu = coefficients(params.theta1, M)
    c = dx ** 3 / 6.0
    # cell i-1 is left of node i, cell i is right of it (0-based cells)
    t_sup = c * (nu * hi3[1:] - alpha * lo3[:-1])
    t_inf = c * (nu * lo3[1:] - alpha * hi3[:-1])
    A, _ = assemble(params)
    inv = kernels.reference_inverse(A)
    pos, neg = np.maximum(inv, 0.0), np.minimum(inv, 0.0)
    lo = pos @ t_inf + neg @ t_sup
    hi = pos @ t_sup + neg @ t_inf
    x = np.arange(1, M) * dx
    return DiscretizationEnclosure(x, t_inf, t_sup, lo, hi, dx)


def reference_discrete_solution(params: BvpParams) -> np.ndarray:
    A, b = assemble(params)
    return kernels.reference_solve(A, b)


def true_discretization_error(params: BvpParams) -> np.ndarray:
    """``R u - u_tilde`` with ``u_tilde`` from a float64 solve."""
    x = np.arange(1, params.M) * params.dx
    return exact_solution(x, params.theta1, params.theta2) - reference_discrete_solution(params)


@dataclass
class BvpRun:
    params: BvpParams
    fmt: FloatFormat
    u_hat: np.ndarray
    p_hat: float
    p_ref: float  # float64 pipeline on the same rounded inputs
    p_tilde: float  # float64 pipeline on exact inputs
    p_exact: float | None
    solve: kernels.KernelRun
    rounding_bounds: dict[str, float]
    confidence_count: int
    enclosure: DiscretizationEnclosure | None = None
    extras: dict = field(default_factory=dict)


def solve(params: BvpParams, fmt: FloatFormat, q_target: float = 0.99,
          with_enclosure: bool = False, c_bound: str = "paper") -> BvpRun:
    """One end-to-end run: assemble, round inputs, Thomas solve, integrate."""
    A, b = assemble(params)
    Ar, br = A.rounded(fmt), round_array(b, fmt)
    u_hat, run = kernels.thomas_solve(Ar, br, fmt, q_target, c_bound)
    dx = params.dx
    c_abs = run.extras["C_LS_abs"]
    rb = {}
    count = 8 * params.M - 14
    for m in (Method.DBEA, Method.MMIBEA, Method.VIBEA):
        r = riemann_integrate(u_hat, dx, fmt, q_target=q_target, method=m,
                              solve_c_abs=c_abs, c_bound=c_bound)
        rb[m.value] = r.rounding_bound
        p_hat = r.p_hat
    u_ref = kernels.reference_solve(Ar, br)
    p_ref = float(kernels._dot_batch(u_ref, np.full(u_ref.size, dx), FP64))
    u_tilde = kernels.reference_solve(A, b)
    p_tilde = float(kernels._dot_batch(u_tilde, np.full(u_tilde.size, dx), FP64))
    p_exact = analytic_p(params.theta1, params.theta2) if params.theta1 > 0 else None
    enc = discretization_enclosure(params) if with_enclosure else None
    return BvpRun(params, fmt, u_hat, p_hat, p_ref, p_tilde, p_exact, run, rb, count, enc)


@dataclass
class MonteCarloResult:
    M: int
    fmt: FloatFormat
    n_samples: int
    q_hat: float
    q_ref: float  # mean of analytic p over the same draws
    q_true: float  # E[p] by quadrature
    abs_err_vs_reference: float
    abs_err_vs_truth: float
    sampling_stderr: float
    n_failed: int
    theta: np.ndarray
    p_hat: np.ndarray


def sample_parameters(n: int, seed: int) -> np.ndarray:
    """``(n, 2)`` draws of ``(theta1, theta2)`` from the ``PARAMS`` substream."""
    g = rng.substream(seed, rng.PARAMS)
    u = g.uniform(0.0, 1.0, (n, 2))
    return u + np.array([THETA1_RANGE[0], THETA2_RANGE[0]])


def solve_batch(theta: np.ndarray, M: int, fmt: FloatFormat) -> tuple[np.ndarray, np.ndarray]:
    """Emulated ``p_hat`` for each parameter row; failures give NaN.

    Returns ``(p_hat, failed_mask)``.
    """
    sub, diag, sup, b = _assemble_batch(theta[:, 0], theta[:, 1], M)
    sub, diag, sup, b = (round_array(a, fmt) for a in (sub, diag, sup, b))
    dxv = np.full(M - 1, 1.0 / M)
    try:
        x, _, _ = kernels.thomas_batch(sub, diag, sup, b, fmt)
        return kernels._dot_batch(x, dxv, fmt), np.zeros(len(theta), bool)
    except ZeroPivot:
        pass
    p = np.full(len(theta), np.nan)
    for j in range(len(theta)):
        try:
            x, _, _ = kernels.thomas_batch(sub[j], diag[j], sup[j], b[j], fmt)
            p[j] = kernels._dot_batch(x, dxv, fmt)
        except ZeroPivot:
            continue
    return p, np.isnan(p)


def monte_carlo_q(M: int, n_samples: int, fmt: FloatFormat, seed: int,
                  chunk: int = 4096) -> MonteCarloResult:
    """Monte-Carlo estimate of ``E[p]`` with every sample solved in ``fmt``.

    Samples whose solve hits a zero pivot are skipped and counted.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be at least 1")
    if M < 2:
        raise ValidationError("M must be at least 2")
    theta = sample_parameters(n_samples, seed)
    p_hat = np.empty(n_samples)
    failed = np.zeros(n_samples, bool)
    for s in range(0, n_samples, chunk):
        p_hat[s:s + chunk], failed[s:s + chunk] = solve_batch(theta[s:s + chunk], M, fmt)
    ok = ~failed
    if not ok.any():
        raise ZeroPivot(-1)
    q_hat = float(np.mean(p_hat[ok]))
    q_ref = float(np.mean(analytic_p(theta[ok, 0], theta[ok, 1])))
    q_true = expected_p()
    se = float(np.std(p_hat[ok], ddof=1) / math.sqrt(ok.sum())) if ok.sum() > 1 else math.inf
    return MonteCarloResult(M, fmt, n_samples, q_hat, q_ref, q_true, abs(q_hat - q_ref),
                            abs(q_hat - q_true), se, int(failed.sum()), theta, p_hat)
