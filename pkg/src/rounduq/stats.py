"""Empirical distribution functions and seeded trial orchestration."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple

import numpy as np

from . import rng
from .errors import EmptySample, TrialFailure, ValidationError


@dataclass(frozen=True)
class Edf:
    """Right-continuous step function ``F(t) = #{x_i <= t} / n``."""

    sorted_samples: np.ndarray

    @property
    def n(self) -> int:
        return int(self.sorted_samples.size)

    def __call__(self, t):
        return edf_query(self, t)


def edf_build(samples) -> Edf:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySample("cannot build an EDF from no samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("EDF samples must be finite")
    x = np.sort(x)
    x.setflags(write=False)
    return Edf(x)


def edf_query(edf: Edf, t):
    counts = np.searchsorted(edf.sorted_samples, t, side="right")
    out = counts / edf.n
    return float(out) if np.ndim(out) == 0 else out


def edf_excess(lower: Edf, upper: Edf) -> float:
    """``max_t F_lower(t) - F_upper(t)`` over the pooled sample points."""
    pts = np.concatenate([lower.sorted_samples, upper.sorted_samples])
    return float(np.max(edf_query(lower, pts) - edf_query(upper, pts)))


def edf_dominates(lower: Edf, upper: Edf, slack: float) -> bool:
    """True iff ``F_lower <= F_upper + slack`` at every pooled sample point.

    ``lower`` is the stochastically larger variable: its EDF sits below.
    """
    return edf_excess(lower, upper) <= slack


def edf_rows(edf: Edf) -> list[tuple[float, float]]:
    """(t, F(t)) at each distinct sample value."""
    t = np.unique(edf.sorted_samples)
    return [(float(a), float(f)) for a, f in zip(t, edf_query(edf, t))]


def acceptance_slack(p: float, trials: int) -> float:
    """Three binomial standard deviations, ``3 sqrt(p(1-p)/T)``."""
    if trials < 1:
        raise ValidationError("trials must be positive")
    return 3.0 * math.sqrt(p * (1.0 - p) / trials)


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int
    base_seed: int
    config: Any = None
    target_confidence: float = 0.99

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValidationError("n_trials must be at least 1")


class TrialOutcome(NamedTuple):
    error: float
    bound: float


@dataclass
class TrialSummary:
    n_trials: int
    coverage: float
    max_error: float
    errors: np.ndarray
    bounds: np.ndarray
    error_edf: Edf
    threshold: float

    @property
    def passes(self) -> bool:
        return self.coverage >= self.threshold


def map_ordered(func: Callable, items, jobs: int = 1) -> list:
    """``[func(x) for x in items]``, optionally in ``jobs`` worker processes.

    Results always come back in input order.
    """
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [func(x) for x in items]


def _one(args):
    experiment, config, seed, index = args
    try:
        out = experiment(config, rng.substream(seed, index))
    except Exception as e:  # noqa: BLE001 - re-raised with the trial index
        raise TrialFailure(index, e) from e
    return TrialOutcome(float(out[0]), float(out[1]))


def run_trials(plan: TrialPlan, experiment: Callable, jobs: int = 1) -> TrialSummary:
    """Run ``experiment(config, generator)`` for every trial and summarize.

    Trial ``i`` receives ``substream(base_seed, i)`` and must return
    ``(error, bound)``. With ``jobs > 1`` trials run in worker processes
    (``experiment`` must then be picklable); results are gathered in index
    order, so the summary does not depend on ``jobs``.
    """
    tasks = [(experiment, plan.config, plan.base_seed, i) for i in range(plan.n_trials)]
    outcomes = map_ordered(_one, tasks, jobs)
    errors = np.array([o.error for o in outcomes])
    bnds = np.array([o.bound for o in outcomes])
    p = plan.target_confidence
    return TrialSummary(
        plan.n_trials,
        float(np.mean(errors <= bnds)),
        float(np.max(errors)),
        errors,
        bnds,
        edf_build(errors),
        p - acceptance_slack(p, plan.n_trials),
    )
