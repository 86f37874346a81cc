"""Scalar evaluation of runs: sum rate, fairness, served fraction."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_SERVED_THRESHOLD = 0.01  # bit/s/Hz


@dataclass
class MetricsReport:
    sum_rate_se: float              # bit/s/Hz
    sum_rate_bps: float             # scaled by the access bandwidth
    jain: float
    served_fraction: float
    per_user_rates: dict[int, float]
    iterations: int
    converged: bool
    monotonicity_violations: int

    def to_dict(self) -> dict:
        return {
            "sum_rate_se": self.sum_rate_se,
            "sum_rate_bps": self.sum_rate_bps,
            "jain": self.jain,
            "served_fraction": self.served_fraction,
            "per_user_rates": {str(k): v for k, v in self.per_user_rates.items()},
            "iterations": self.iterations,
            "converged": self.converged,
            "monotonicity_violations": self.monotonicity_violations,
        }


def jain_index(rates) -> float:
    """Fairness scalar (sum r)^2 / (U sum r^2), in [1/U, 1].

    An all-zero vector is degenerate: returns the lower bound 1/U and warns.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise ValueError("fairness of an empty rate vector is undefined")
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    total_sq = float(np.sum(rates ** 2))
    if total_sq == 0.0:
        warnings.warn("all-zero rate vector: fairness index degenerate",
                      RuntimeWarning, stacklevel=2)
        return 1.0 / rates.size
    return float(np.sum(rates)) ** 2 / (rates.size * total_sq)


def served_fraction(rates, threshold: float = DEFAULT_SERVED_THRESHOLD) -> float:
    """Fraction of users whose rate meets the serving threshold."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise ValueError("served fraction of an empty rate vector is undefined")
    return float(np.count_nonzero(rates >= threshold)) / rates.size


def summarize(run, threshold: float = DEFAULT_SERVED_THRESHOLD) -> MetricsReport:
    """Final-iterate metrics plus convergence stats for a sum-rate or PF run.

    Sum-rate runs report the final instantaneous rates; PF runs report the
    long-run average rates.
    """
    from .pf import PfRun
    from .sumrate import SumRateRun

    if isinstance(run, SumRateRun):
        per_user = dict(run.rates)
        iterations = run.records[-1].iteration
        converged = run.converged
        violations = run.monotonicity_violations
    elif isinstance(run, PfRun):
        per_user = dict(run.avg_rates)
        iterations = len(run.records)
        converged = True  # fixed slot budget, no stop rule
        violations = run.inner_monotonicity_violations
    else:
        raise TypeError(f"cannot summarize {type(run).__name__}")

    vec = np.array([per_user[u] for u in sorted(per_user)])
    total = float(vec.sum())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        jain = jain_index(vec)
    return MetricsReport(
        sum_rate_se=total,
        sum_rate_bps=total * run.scenario.bandwidth,
        jain=jain,
        served_fraction=served_fraction(vec, threshold),
        per_user_rates=per_user,
        iterations=iterations,
        converged=converged,
        monotonicity_violations=violations,
    )
