"""First-hitting-time extraction from a detrended series.

For every anchor index t (all positions with at least one later observation)
the gain time is the first lead Delta >= 1 whose cumulative increment clears
the barrier:

    tau_plus(t)  = min{ Delta >= 1 : x[t+Delta] - x[t] >= +rho }
    tau_minus(t) = min{ Delta >= 1 : x[t+Delta] - x[t] <= -rho }

Anchors whose barrier is never reached before the series ends are censored:
they are dropped from the sample and only counted. Anchors overlap, so
consecutive hitting times are correlated; the downstream models treat them as
exchangeable draws, matching the construction they were designed for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySeriesError, EmptySideError, NonPositiveRhoError

__all__ = ["HittingSample", "LogHittingSample", "hitting_times", "log_sample"]


@dataclass(frozen=True)
class HittingSample:
    """Uncensored first-hitting times (in observation steps) for both sides."""

    tau_plus: np.ndarray
    tau_minus: np.ndarray
    rho: float
    n_anchors: int
    censored_plus: int
    censored_minus: int

    def __post_init__(self):
        object.__setattr__(self, "tau_plus", np.asarray(self.tau_plus, dtype=np.int64))
        object.__setattr__(self, "tau_minus", np.asarray(self.tau_minus, dtype=np.int64))

    @property
    def censoring_rate_plus(self) -> float:
        return self.censored_plus / self.n_anchors if self.n_anchors else 0.0

    @property
    def censoring_rate_minus(self) -> float:
        return self.censored_minus / self.n_anchors if self.n_anchors else 0.0


@dataclass(frozen=True)
class LogHittingSample:
    """Natural logs of the hitting times; the data both models are fit to."""

    x_plus: np.ndarray
    x_minus: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "x_plus", np.asarray(self.x_plus, dtype=np.float64))
        object.__setattr__(self, "x_minus", np.asarray(self.x_minus, dtype=np.float64))

    @property
    def n_plus(self) -> int:
        return int(self.x_plus.size)

    @property
    def n_minus(self) -> int:
        return int(self.x_minus.size)


def hitting_times(values: np.ndarray, rho: float) -> HittingSample:
    """Extract tau_plus / tau_minus samples from a detrended series.

    Parameters
    ----------
    values : np.ndarray
        Detrended series x, one value per observation step.
    rho : float
        Barrier level, strictly positive.
    """
    if not np.isfinite(rho) or rho <= 0.0:
        raise NonPositiveRhoError(f"rho must be a positive number, got {rho}")
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise EmptySeriesError("hitting times need at least two observations")
    n_anchors = n - 1
    # 0 marks "not yet hit"; anchors resolve in increasing Delta, so the
    # first write is the first passage.
    tau_p = np.zeros(n_anchors, dtype=np.int64)
    tau_m = np.zeros(n_anchors, dtype=np.int64)
    for delta in range(1, n):
        diff = x[delta:] - x[:-delta]
        head_p = tau_p[: n - delta]
        head_m = tau_m[: n - delta]
        hit_p = (diff >= rho) & (head_p == 0)
        hit_m = (diff <= -rho) & (head_m == 0)
        if hit_p.any():
            head_p[hit_p] = delta
        if hit_m.any():
            head_m[hit_m] = delta
        if tau_p.all() and tau_m.all():
            break
    return HittingSample(
        tau_plus=tau_p[tau_p > 0],
        tau_minus=tau_m[tau_m > 0],
        rho=float(rho),
        n_anchors=n_anchors,
        censored_plus=int(np.count_nonzero(tau_p == 0)),
        censored_minus=int(np.count_nonzero(tau_m == 0)),
    )


def log_sample(sample: HittingSample) -> LogHittingSample:
    """Map tau to x = ln tau on both sides (x >= 0 because tau >= 1)."""
    if sample.tau_plus.size == 0:
        raise EmptySideError("no uncensored gain times; cannot build a log sample")
    if sample.tau_minus.size == 0:
        raise EmptySideError("no uncensored loss times; cannot build a log sample")
    return LogHittingSample(
        x_plus=np.log(sample.tau_plus.astype(np.float64)),
        x_minus=np.log(sample.tau_minus.astype(np.float64)),
        rho=sample.rho,
    )
