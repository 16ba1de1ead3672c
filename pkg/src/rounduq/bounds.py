"""Constants bounding products of rounding errors.

For ``n`` factors ``(1 + delta_i)**rho_i`` with ``|delta_i| <= u`` the
product is ``1 + theta_n`` and the methods here bound ``|theta_n|``:

* DBEA: worst case, ``gamma_n = nu / (1 - nu)``.
* MIBEA (original) and MMIBEA: Hoeffding-type, ``O(sqrt(n) u)``.
* VIBEA: Bernstein-type, uses the mean and variance of ``log(1 + delta)``.

The probabilistic constants hold with probability at least ``zeta``. Union
bounds over ``k`` such events use ``Q(zeta, k) = 1 - k(1 - zeta)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng
from .errors import BoundInvalid, InfeasibleConfidence, ScanCapExceeded, ValidationError


class Method(str, enum.Enum):
    DBEA = "DBEA"
    MIBEA_ORIGINAL = "MIBEA_original"
    MMIBEA = "MMIBEA"
    VIBEA = "VIBEA"


C_BOUNDS = ("paper", "symmetric")
PROBABILISTIC = (Method.MMIBEA, Method.VIBEA)


@dataclass(frozen=True)
class LogErrorStats:
    """Bound ``c`` on ``|log(1+delta)|``, its mean ``mu`` and variance ``sigma_sq``."""

    c: float
    mu: float
    sigma_sq: float
    kappa: float


@dataclass(frozen=True)
class BoundResult:
    gamma: float
    holds_with_prob_at_least: float
    t_value: float | None = None


@dataclass(frozen=True)
class BoundSpec:
    method: Method
    zeta: float
    u: float
    n: int
    lam: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        _check_zeta(self.zeta)
        _check_u(self.u)
        _check_n(self.n)
        if (self.lam is not None) != (self.method is Method.MIBEA_ORIGINAL):
            raise ValidationError("lambda is required for, and only for, MIBEA_original")

    def evaluate(self, stats: LogErrorStats | None = None) -> BoundResult:
        if self.method is Method.DBEA:
            return gamma_dbea(self.u, self.n)
        if self.method is Method.MIBEA_ORIGINAL:
            return gamma_mibea_original(self.u, self.n, self.lam)
        if self.method is Method.MMIBEA:
            return gamma_mmibea(self.zeta, self.u, self.n)
        return gamma_vibea(self.zeta, self.u, self.n, stats)


def _check_zeta(zeta):
    if not 0.0 <= zeta < 1.0:
        raise ValidationError("zeta must lie in [0, 1)")


def _check_u(u):
    if not 0.0 < u < 1.0:
        raise ValidationError("u must lie in (0, 1)")


def _check_n(n):
    if n < 0:
        raise ValidationError("n must be non-negative")


def _expm1(x: float) -> float:
    # a vacuous bound rather than an exception when the exponent is huge
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


def _log_half_tail(zeta):
    # log((1 - zeta) / 2), negative for every zeta in [0, 1)
    return np.log1p(-zeta) - math.log(2.0)


def gamma_dbea(u: float, n: int) -> BoundResult:
    _check_u(u)
    _check_n(n)
    nu = n * u
    if nu >= 1.0:
        raise BoundInvalid(f"n*u = {nu} >= 1")
    return BoundResult(nu / (1.0 - nu), 1.0)


def mibea_probability(u: float, lam: float, form: str = "printed") -> float:
    """Probability attached to the original MIBEA constant, clamped at 0.

    ``printed`` uses ``1 - 2 exp(-lam (1-u)^2 / 2)``; ``squared`` uses
    ``lam**2`` in the exponent, the form consistent with ``lambda_dagger``.
    """
    if form == "printed":
        e = lam
    elif form == "squared":
        e = lam * lam
    else:
        raise ValidationError("form must be 'printed' or 'squared'")
    return max(0.0, 1.0 - 2.0 * math.exp(-e * (1.0 - u) ** 2 / 2.0))


def gamma_mibea_original(u: float, n: int, lam: float, prob_form: str = "printed") -> BoundResult:
    _check_u(u)
    _check_n(n)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    t = lam * math.sqrt(n) * u
    g = _expm1(t + n * u * u / (1.0 - u))
    return BoundResult(g, mibea_probability(u, lam, prob_form), t)


def _uniform_moments_series(u: float) -> tuple[float, float]:
    # E[log(1+d)] = -sum u^2k / (2k(2k+1)),
    # E[log(1+d)^2] = sum H_{2k-1} u^2k / (k(2k+1)),  d ~ U[-u, u].
    u2 = u * u
    mu = 0.0
    m2 = 0.0
    h = 0.0
    term = 1.0
    for k in range(1, 60):
        h += 1.0 / (2 * k - 1) + (1.0 / (2 * k - 2) if k > 1 else 0.0)
        term *= u2
        dmu = term / (2 * k * (2 * k + 1))
        dm2 = h * term / (k * (2 * k + 1))
        mu -= dmu
        m2 += dm2
        if dm2 < 1e-18 * m2:
            break
    return mu, m2 - mu * mu


def log_error_moments_closed_form(u: float) -> tuple[float, float]:
    """(mu, sigma_sq) evaluated literally from the closed forms.

    Loses most significant digits for small ``u``; kept for comparison.
    """
    kappa = u * u - 1.0
    lm, lp = math.log(1.0 - u), math.log(1.0 + u)
    mu = (-2.0 * u + (-1.0 + u) * lm + (1.0 + u) * lp) / (2.0 * u)
    var = (4.0 * u * u + kappa * (lm * lm - 2.0 * lm * lp + lp * lp)) / (4.0 * u * u)
    return mu, var


SERIES_CUTOFF = 0.0625


EVALUATIONS = ("stable", "closed_form")


def log_error_stats_uniform(u: float, c_bound: str = "paper",
                            evaluation: str = "stable") -> LogErrorStats:
    """Statistics of ``log(1 + delta)`` for ``delta ~ U[-u, u]``.

    With ``evaluation="stable"`` the moments come from their Taylor series
    below ``SERIES_CUTOFF``, avoiding the cancellation the closed forms suffer
    at small ``u`` (at ``u = 2**-24`` the literal closed form is off by ~6%).
    ``"closed_form"`` evaluates the closed forms literally at every ``u``.
    """
    _check_u(u)
    if evaluation not in EVALUATIONS:
        raise ValidationError(f"evaluation must be one of {EVALUATIONS}")
    if c_bound == "paper":
        c = math.log1p(u)
    elif c_bound == "symmetric":
        c = -math.log1p(-u)
    else:
        raise ValidationError(f"c_bound must be one of {C_BOUNDS}")
    if evaluation == "stable" and u < SERIES_CUTOFF:
        mu, var = _uniform_moments_series(u)
    else:
        mu, var = log_error_moments_closed_form(u)
    return LogErrorStats(c, mu, max(var, 0.0), u * u - 1.0)


def _vibea_t(zeta, n, stats: LogErrorStats):
    lg = _log_half_tail(zeta)
    c = stats.c
    return (-c * lg + np.sqrt(c * c * lg * lg - 18.0 * n * lg * stats.sigma_sq)) / 3.0


def gamma_vibea(zeta: float, u: float, n: int, stats: LogErrorStats | None = None) -> BoundResult:
    """VIBEA constant with ``t`` the positive root of the Bernstein quadratic."""
    _check_zeta(zeta)
    _check_u(u)
    _check_n(n)
    if stats is None:
        stats = log_error_stats_uniform(u)
    t = float(_vibea_t(zeta, n, stats))
    return BoundResult(_expm1(t + n * abs(stats.mu)), zeta, t)


def gamma_mmibea(zeta: float, u: float, n: int) -> BoundResult:
    _check_zeta(zeta)
    _check_u(u)
    _check_n(n)
    t = u / (1.0 - u) * math.sqrt(-2.0 * n * _log_half_tail(zeta))
    return BoundResult(_expm1(t + n * u * u / (1.0 - u)), zeta, t)


def vibea_array(zeta: float, u: float, n, stats: LogErrorStats) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    return np.expm1(_vibea_t(zeta, n, stats) + n * abs(stats.mu))


def mmibea_array(zeta: float, u: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    t = u / (1.0 - u) * np.sqrt(-2.0 * n * _log_half_tail(zeta))
    return np.expm1(t + n * u * u / (1.0 - u))


def dbea_array(u: float, n) -> np.ndarray:
    nu = np.asarray(n, dtype=np.float64) * u
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nu < 1.0, nu / (1.0 - nu), np.inf)


def lambda_dagger(zeta: float, u: float) -> float:
    _check_zeta(zeta)
    _check_u(u)
    return math.sqrt(-2.0 * _log_half_tail(zeta)) / (1.0 - u)


def union_confidence(zeta: float, k: int) -> float:
    """``Q(zeta, k)``; negative values are kept, they are vacuous but exact."""
    _check_zeta(zeta)
    if k < 0:
        raise ValidationError("k must be non-negative")
    return 1.0 - k * (1.0 - zeta)


def solve_member_confidence(target: float, k: int) -> float:
    """The per-event ``zeta`` with ``Q(zeta, k) = target``."""
    if not 0.0 <= target < 1.0:
        raise ValidationError("target must lie in [0, 1)")
    if k < 1:
        raise ValidationError("k must be at least 1")
    zeta = 1.0 - (1.0 - target) / k
    if zeta >= 1.0:
        raise InfeasibleConfidence(f"member confidence rounds to 1 for k={k}")
    return zeta


def gamma_for(method: Method | str, zeta: float, u: float, n: int,
              stats: LogErrorStats | None = None) -> BoundResult:
    method = Method(method)
    if method is Method.DBEA:
        return gamma_dbea(u, n)
    if method is Method.MMIBEA:
        return gamma_mmibea(zeta, u, n)
    if method is Method.VIBEA:
        return gamma_vibea(zeta, u, n, stats)
    raise ValidationError("MIBEA_original needs lambda; call gamma_mibea_original")


def compose_ls(g1: float, g2: float, variant: str = "final") -> float:
    """Thomas-solve constant from the one- and two-factor constants.

    ``final``: ``2 g1 + g2 + g1 g2``. ``dbea_sentence``: ``g1 + g2 + g1 g2``.
    """
    if variant == "final":
        return 2.0 * g1 + g2 + g1 * g2
    if variant == "dbea_sentence":
        return g1 + g2 + g1 * g2
    raise ValidationError("variant must be 'final' or 'dbea_sentence'")


SCAN_WINDOW = 1000
SCAN_CAP = 10 ** 7


def _first_stable(cond, start: int, last: int, window: int) -> int:
    # Smallest n >= start such that cond holds on all of [n, min(n + window, last)].
    n = start
    while n <= last:
        ns = np.arange(n, min(n + window, last) + 1)
        bad = ~cond(ns)
        if not bad.any():
            return n
        n = int(ns[bad][-1]) + 1
    raise ScanCapExceeded(f"no stable crossing found up to n = {last}")


def critical_sizes(zeta: float, u: float, c_bound: str = "paper",
                   window: int = SCAN_WINDOW, cap: int = SCAN_CAP,
                   evaluation: str = "stable") -> tuple[int, int]:
    """``(n_c, n_d)``: where VIBEA starts beating MMIBEA, respectively DBEA.

    Each crossing must persist over a window of ``window`` further sizes.
    The DBEA comparison is restricted to ``n u < 1``.
    """
    _check_zeta(zeta)
    _check_u(u)
    stats = log_error_stats_uniform(u, c_bound, evaluation)
    n_c = _first_stable(
        lambda ns: vibea_array(zeta, u, ns, stats) < mmibea_array(zeta, u, ns), 1, cap, window
    )
    n_max = math.ceil(1.0 / u) - 1
    n_d = _first_stable(
        lambda ns: vibea_array(zeta, u, ns, stats) < dbea_array(u, ns), 1, min(n_max, cap), window
    )
    return n_c, n_d


# Coverage oracle. numba cannot call numpy Generators, so draws come from a
# splitmix64-style hash of (trial key, element counter): stateless, hence
# identical under any trial ordering or thread count.

# numba probes TBB first and warns when the installed version is too old.
warnings.filterwarnings("ignore", message="The TBB threading layer")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(parallel=True, fastmath=True, cache=True)
def _product_deviations(key, n, u, trials):
    out = np.empty(trials)
    scale = 2.0 * u / 2.0 ** 31
    for t in nb.prange(trials):
        k = _mix(key + np.uint64(t) * _GOLDEN)
        num = 1.0
        den = 1.0
        for i in range(n):
            z = _mix(k + np.uint64(i) * _GOLDEN)
            d = np.float64(np.int64(z >> np.uint64(33))) * scale - u
            s = np.float64(z & np.uint64(1))
            # rho = +1 multiplies the numerator, rho = -1 the denominator
            num *= 1.0 + s * d
            den *= 1.0 + d - s * d
        out[t] = abs(num / den - 1.0)
    return out


def product_deviations(u: float, n: int, trials: int, seed: int,
                       threads: int | None = None) -> np.ndarray:
    """``|prod (1 + delta_i)**rho_i - 1|`` for ``trials`` independent products.

    ``delta_i ~ U[-u, u]`` on a 2**31-point grid, ``rho_i = +-1`` with equal
    probability; accumulation is in float64.
    """
    _check_u(u)
    _check_n(n)
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    key = np.uint64(rng.key64(seed, rng.ROUNDING))
    if threads is not None:
        nb.set_num_threads(max(1, min(threads, nb.config.NUMBA_NUM_THREADS)))
    return _product_deviations(key, int(n), float(u), int(trials))


def coverage_oracle(result: BoundResult | float, u: float, n: int, trials: int, seed: int) -> float:
    """Fraction of simulated products whose deviation stays within ``gamma``."""
    gamma = result.gamma if isinstance(result, BoundResult) else float(result)
    return float(np.mean(product_deviations(u, n, trials, seed) <= gamma))
