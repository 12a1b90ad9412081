"""Posterior summaries, convergence checks and model comparison.

The headline quantity is the standardized location difference ("effect
size") between the gain and loss sides,

    d = (loc_plus - loc_minus) / s_pooled,
    s_pooled^2 = (scale_plus^2 (N+ - 1) + scale_minus^2 (N- - 1)) / (N+ + N- - 2),

evaluated per posterior draw, so d itself has a posterior. Convergence is
judged with the between/within-chain variance ratio (potential scale
reduction) and a multi-chain autocorrelation effective sample size; model fit
is compared with the widely applicable information criterion computed from
per-draw pointwise log likelihoods.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    DegenerateChainsError,
    DegenerateSampleSizesError,
    MalformedReportError,
    TooFewSamplesError,
)
from .models import ModelKind
from .nuts import Trace

__all__ = [
    "EffectSizeDraws",
    "effect_size_draws",
    "pooled_effect_size",
    "hdi",
    "prob_below",
    "gelman_rubin",
    "ess",
    "WaicResult",
    "waic",
    "FitReport",
    "build_report",
    "REPORT_CSV_HEADER",
]

HDI_MASS = 0.94
_MIN_HDI_SAMPLES = 50
_HIST_BINS = 60


@dataclass(frozen=True)
class EffectSizeDraws:
    """Per-draw effect sizes, keeping the chain layout for diagnostics."""

    d: np.ndarray  # [n_chains, n_draw]
    n_plus: int
    n_minus: int

    @property
    def flat(self) -> np.ndarray:
        return self.d.reshape(-1)


def pooled_effect_size(loc_plus, loc_minus, scale_plus, scale_minus,
                       n_plus: int, n_minus: int):
    """Standardized difference with a pooled scale; vectorized over draws."""
    if n_plus < 2 or n_minus < 2:
        raise DegenerateSampleSizesError(
            f"pooling needs >= 2 observations per side, got {n_plus}, {n_minus}"
        )
    num = (np.asarray(scale_plus) ** 2) * (n_plus - 1) \
        + (np.asarray(scale_minus) ** 2) * (n_minus - 1)
    pooled = np.sqrt(num / (n_plus + n_minus - 2))
    return (np.asarray(loc_plus) - np.asarray(loc_minus)) / pooled


def effect_size_draws(trace: Trace, n_plus: int, n_minus: int) -> EffectSizeDraws:
    """Effect-size posterior from a fitted trace.

    The location/scale roles are (mu, sigma) for the Student-t model and
    (m, s) for the Inverse-Gamma model; the parameter names on the trace
    decide which.
    """
    names = trace.param_names
    if "mu_plus" in names:
        loc_p, loc_m = trace.chains_for("mu_plus"), trace.chains_for("mu_minus")
        sc_p, sc_m = trace.chains_for("sigma_plus"), trace.chains_for("sigma_minus")
    else:
        loc_p, loc_m = trace.chains_for("m_plus"), trace.chains_for("m_minus")
        sc_p, sc_m = trace.chains_for("s_plus"), trace.chains_for("s_minus")
    d = pooled_effect_size(loc_p, loc_m, sc_p, sc_m, n_plus, n_minus)
    return EffectSizeDraws(d=d, n_plus=n_plus, n_minus=n_minus)


def hdi(samples: np.ndarray, mass: float = HDI_MASS) -> tuple[float, float]:
    """Narrowest interval of sorted samples containing ceil(mass * n) of them."""
    if not (0.0 < mass < 1.0):
        raise TooFewSamplesError(f"mass must lie in (0, 1), got {mass}")
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    n = x.size
    if n < _MIN_HDI_SAMPLES:
        raise TooFewSamplesError(f"need >= {_MIN_HDI_SAMPLES} samples, got {n}")
    n_keep = int(math.ceil(mass * n))
    widths = x[n_keep - 1:] - x[: n - n_keep + 1]
    best = int(np.argmin(widths))
    return float(x[best]), float(x[best + n_keep - 1])


def prob_below(samples: np.ndarray, ref: float = 0.0) -> float:
    """Fraction of samples strictly below the reference value."""
    x = np.asarray(samples).reshape(-1)
    if x.size == 0:
        raise TooFewSamplesError("no samples")
    return float(np.mean(x < ref))


def _check_chains(chains: np.ndarray) -> np.ndarray:
    arr = np.asarray(chains, dtype=np.float64)
    if arr.ndim != 2:
        raise DegenerateChainsError(f"expected [n_chains, n_draw], got shape {arr.shape}")
    if arr.shape[1] < 4:
        raise TooFewSamplesError("need at least 4 draws per chain")
    if np.any(np.var(arr, axis=1) == 0.0):
        raise DegenerateChainsError("a chain has zero variance")
    return arr


def gelman_rubin(chains: np.ndarray) -> float:
    """Potential scale reduction factor R_c over chains of equal length.

    B is the between-chain variance of chain means (scaled by n), W the mean
    within-chain sample variance; R_c = sqrt(V / W) with
    V = (n-1)/n W + (m+1)/(m n) B.
    """
    arr = _check_chains(chains)
    m, n = arr.shape
    if m < 2:
        raise DegenerateChainsError("potential scale reduction needs >= 2 chains")
    means = arr.mean(axis=1)
    w = float(np.mean(np.var(arr, axis=1, ddof=1)))
    b = n / (m - 1.0) * float(np.sum((means - means.mean()) ** 2))
    v = (n - 1.0) / n * w + (m + 1.0) / (m * n) * b
    return math.sqrt(v / w)


def _autocov_fft(arr: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance of each row, all lags, via FFT."""
    m, n = arr.shape
    centered = arr - arr.mean(axis=1, keepdims=True)
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size from a multi-chain autocorrelation estimate.

    The combined lag-t autocorrelation is
        rho_t = 1 - (W - mean_m acov_{t,m}) / var_plus,
    summed over Geyer's initial positive sequence of paired sums
    P_t = rho_{2t} + rho_{2t+1}; tau = -1 + 2 sum P_t and
    ESS = m n / tau, capped at m n.
    """
    arr = _check_chains(chains)
    m, n = arr.shape
    w = float(np.mean(np.var(arr, axis=1, ddof=1)))
    if m >= 2:
        var_plus = (n - 1.0) / n * w + float(np.var(arr.mean(axis=1), ddof=1))
    else:
        var_plus = (n - 1.0) / n * w
    acov = _autocov_fft(arr).mean(axis=0)
    rho = 1.0 - (w - acov) / var_plus
    total = 0.0
    t = 0
    while 2 * t + 1 < n:
        pair = rho[2 * t] + rho[2 * t + 1]
        if pair <= 0.0:
            break
        total += pair
        t += 1
    tau = -1.0 + 2.0 * total
    size = float(m * n)
    if tau <= 0.0:
        return size
    return min(size / tau, size)


@dataclass(frozen=True)
class WaicResult:
    waic: float
    se: float
    lppd: float
    p_waic: float
    n_obs: int


def waic(pointwise_loglik: np.ndarray) -> WaicResult:
    """Widely applicable information criterion, -2(lppd - p_waic).

    ``pointwise_loglik`` has one row per retained posterior draw and one
    column per observation. The effective parameter count is the sum of
    per-observation sample variances; the standard error scales the spread
    of per-observation contributions by sqrt(n_obs).
    """
    ll = np.asarray(pointwise_loglik)
    if ll.ndim != 2:
        raise TooFewSamplesError(f"expected [draws, n_obs], got shape {ll.shape}")
    n_draws, n_obs = ll.shape
    if n_draws < 2 or n_obs < 1:
        raise TooFewSamplesError("waic needs >= 2 draws and >= 1 observation")
    log_s = math.log(n_draws)
    lppd_i = np.empty(n_obs)
    p_i = np.empty(n_obs)
    # column blocks keep the float64 temporaries bounded for large n_obs
    block = max(1, int(8e6) // max(n_draws, 1))
    for start in range(0, n_obs, block):
        stop = min(start + block, n_obs)
        cols = ll[:, start:stop].astype(np.float64)
        peak = cols.max(axis=0)
        lppd_i[start:stop] = peak + np.log(np.mean(np.exp(cols - peak), axis=0))
        p_i[start:stop] = np.var(cols, axis=0, ddof=1)
    elpd_i = lppd_i - p_i
    contrib = -2.0 * elpd_i
    total = float(np.sum(contrib))
    se = math.sqrt(n_obs * float(np.var(contrib, ddof=1))) if n_obs > 1 else 0.0
    return WaicResult(
        waic=total,
        se=se,
        lppd=float(np.sum(lppd_i)),
        p_waic=float(np.sum(p_i)),
        n_obs=n_obs,
    )


REPORT_CSV_HEADER = "index,rho,d_mean,d_std,ess,waic,waic_se"

_REPORT_SCHEMA = "gainloss-fit-report/1"


@dataclass(frozen=True)
class FitReport:
    """Everything a fit produces, ready for serialization and plotting."""

    index_id: str
    model: str
    rho: float
    filter_size: int
    n_plus: int
    n_minus: int
    d_mean: float
    d_std: float
    hdi_low: float
    hdi_high: float
    hdi_mass: float
    prob_below_ref: float
    ref: float
    ess_d: float
    rhat: dict[str, float]
    waic: float
    waic_se: float
    divergence_rate: float
    n_chains: int
    n_draw: int
    n_tune: int
    seed: int
    n_dropped_plus: int = 0
    n_dropped_minus: int = 0
    d_hist_edges: tuple[float, ...] = field(default_factory=tuple)
    d_hist_counts: tuple[int, ...] = field(default_factory=tuple)

    @property
    def max_rhat(self) -> float:
        return max(self.rhat.values())

    def csv_row(self) -> str:
        return (
            f"{self.index_id},{self.rho:.10g},{self.d_mean:.10g},"
            f"{self.d_std:.10g},{self.ess_d:.10g},{self.waic:.10g},"
            f"{self.waic_se:.10g}"
        )

    def to_json(self) -> str:
        payload = asdict(self)
        payload["d_hist_edges"] = list(payload["d_hist_edges"])
        payload["d_hist_counts"] = list(payload["d_hist_counts"])
        payload["schema"] = _REPORT_SCHEMA
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedReportError(f"not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise MalformedReportError("report JSON must be an object")
        payload.pop("schema", None)
        try:
            payload["d_hist_edges"] = tuple(payload.get("d_hist_edges", ()))
            payload["d_hist_counts"] = tuple(payload.get("d_hist_counts", ()))
            payload["rhat"] = dict(payload["rhat"])
            return cls(**payload)
        except (KeyError, TypeError) as exc:
            raise MalformedReportError(f"missing or bad report field: {exc}") from exc

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FitReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_report(
    trace: Trace,
    effect: EffectSizeDraws,
    *,
    index_id: str,
    kind: ModelKind,
    rho: float,
    filter_size: int,
    hdi_mass: float = HDI_MASS,
    ref: float = 0.0,
    n_dropped_plus: int = 0,
    n_dropped_minus: int = 0,
) -> FitReport:
    """Summarize one fitted trace into a :class:`FitReport`."""
    flat = effect.flat
    lo, hi = hdi(flat, hdi_mass)
    rhat = {name: gelman_rubin(trace.chains_for(name)) for name in trace.param_names}
    rhat["d"] = gelman_rubin(effect.d)
    if trace.pointwise_loglik is None:
        raise MalformedReportError("trace has no pointwise log likelihoods")
    ll = trace.pointwise_loglik.reshape(-1, trace.pointwise_loglik.shape[2])
    w = waic(ll)
    counts, edges = np.histogram(flat, bins=_HIST_BINS)
    return FitReport(
        index_id=index_id,
        model=str(kind),
        rho=float(rho),
        filter_size=int(filter_size),
        n_plus=effect.n_plus,
        n_minus=effect.n_minus,
        d_mean=float(np.mean(flat)),
        d_std=float(np.std(flat, ddof=1)),
        hdi_low=lo,
        hdi_high=hi,
        hdi_mass=float(hdi_mass),
        prob_below_ref=prob_below(flat, ref),
        ref=float(ref),
        ess_d=ess(effect.d),
        rhat=rhat,
        waic=w.waic,
        waic_se=w.se,
        divergence_rate=trace.divergence_rate,
        n_chains=trace.n_chains,
        n_draw=trace.n_draw,
        n_tune=trace.config.n_tune,
        seed=trace.config.seed,
        n_dropped_plus=n_dropped_plus,
        n_dropped_minus=n_dropped_minus,
        d_hist_edges=tuple(float(e) for e in edges),
        d_hist_counts=tuple(int(c) for c in counts),
    )
