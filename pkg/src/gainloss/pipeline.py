"""End-to-end orchestration: series -> detrend -> hitting times -> fits.

Also hosts the three sensitivity scans (filter size, barrier scale, rolling
window) and a synthetic geometric-Brownian price generator used by the
validation suite and the demos. A failed grid point never aborts a scan; the
failure is recorded on its row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .detrend import DEFAULT_FILTER_SIZE, FilteredSeries, detrend, threshold_from_std
from .diagnostics import FitReport, build_report, effect_size_draws
from .errors import (
    EmptySideError,
    GainLossError,
    MalformedReportError,
    NonPositiveRhoError,
)
from .hitting import HittingSample, LogHittingSample, hitting_times, log_sample
from .models import ModelKind, ModelSpec, Posterior, PriorSpec
from .nuts import SamplerConfig, Trace, run_chains
from .series import PriceSeries, SeriesStats, log_prices, slice_window, summary_stats

__all__ = [
    "DEFAULT_FILTER_GRID",
    "DEFAULT_RHO_SCALES",
    "DEFAULT_WINDOW_YEARS",
    "DEFAULT_WINDOW_FILTER",
    "DEFAULT_WINDOW_RHO",
    "RHAT_FAIL",
    "prepare_sample",
    "fit_log_sample",
    "fit_series",
    "ScanPoint",
    "SCAN_CSV_HEADER",
    "scan_points_csv",
    "scan_filter",
    "scan_rho",
    "scan_window",
    "synthetic_gbm_series",
    "parse_model_choice",
]

# Sensitivity grids used by the published analysis.
DEFAULT_FILTER_GRID = (150, 175, 200, 225, 250, 275, 300, 325)
DEFAULT_RHO_SCALES = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5)
DEFAULT_WINDOW_YEARS = 5
DEFAULT_WINDOW_FILTER = 100
DEFAULT_WINDOW_RHO = 0.028

RHAT_FAIL = 1.2  # any parameter at or above this marks the fit non-converged


def parse_model_choice(choice: str) -> tuple[ModelKind, ...]:
    """Map a CLI-style model choice onto the concrete kinds to fit."""
    table = {
        "student-t": (ModelKind.STUDENT_T,),
        "inv-gamma": (ModelKind.INV_GAMMA,),
        "both": (ModelKind.STUDENT_T, ModelKind.INV_GAMMA),
    }
    try:
        return table[choice]
    except KeyError as exc:
        raise GainLossError(
            f"unknown model {choice!r}; expected student-t, inv-gamma or both"
        ) from exc


def summarize_series(
    series: PriceSeries, filter_size: int = DEFAULT_FILTER_SIZE
) -> tuple[SeriesStats, SeriesStats]:
    """(raw, filtered) summaries: log prices, then the detrended values."""
    raw = summary_stats(log_prices(series))
    filt = summary_stats(detrend(series, filter_size).values)
    return raw, filt


def prepare_sample(
    series: PriceSeries,
    filter_size: int = DEFAULT_FILTER_SIZE,
    rho: Optional[float] = None,
) -> tuple[FilteredSeries, float, HittingSample, LogHittingSample]:
    """Detrend, pick the barrier level, and extract both hitting-time sides."""
    filtered = detrend(series, filter_size)
    if rho is None:
        rho = threshold_from_std(filtered)
    sample = hitting_times(filtered.values, rho)
    return filtered, rho, sample, log_sample(sample)


def fit_log_sample(
    logs: LogHittingSample,
    kind: ModelKind,
    sampler: SamplerConfig,
    *,
    index_id: str = "",
    rho: Optional[float] = None,
    filter_size: int = 0,
    hdi_mass: float = 0.94,
) -> tuple[FitReport, Trace]:
    """Fit one model to a log hitting-time sample and summarize it.

    The Inverse-Gamma likelihood lives on x > 0, so observations at exactly
    x = 0 (single-step hits, tau = 1) are excluded from that fit and counted
    on the report; the Student-t fit always uses the full sample.
    """
    x_plus, x_minus = logs.x_plus, logs.x_minus
    dropped_plus = dropped_minus = 0
    if kind is ModelKind.INV_GAMMA:
        keep_p = x_plus > 0.0
        keep_m = x_minus > 0.0
        dropped_plus = int(np.count_nonzero(~keep_p))
        dropped_minus = int(np.count_nonzero(~keep_m))
        x_plus, x_minus = x_plus[keep_p], x_minus[keep_m]
        if x_plus.size < 2 or x_minus.size < 2:
            raise EmptySideError(
                "too few positive log hitting times for the inverse-gamma fit"
            )
    spec = ModelSpec(kind=kind, prior=PriorSpec.from_data(x_plus, x_minus))
    posterior = Posterior(spec, x_plus, x_minus)
    trace = run_chains(posterior, sampler)
    effect = effect_size_draws(trace, n_plus=x_plus.size, n_minus=x_minus.size)
    report = build_report(
        trace,
        effect,
        index_id=index_id,
        kind=kind,
        rho=float(rho) if rho is not None else float(logs.rho),
        filter_size=filter_size,
        hdi_mass=hdi_mass,
        n_dropped_plus=dropped_plus,
        n_dropped_minus=dropped_minus,
    )
    return report, trace


def fit_series(
    series: PriceSeries,
    kinds: Sequence[ModelKind],
    sampler: SamplerConfig,
    *,
    filter_size: int = DEFAULT_FILTER_SIZE,
    rho: Optional[float] = None,
    hdi_mass: float = 0.94,
    keep_traces: bool = False,
) -> tuple[list[FitReport], list[Trace]]:
    """Full pipeline for one price series; both models share the same sample."""
    _, rho_used, _, logs = prepare_sample(series, filter_size, rho)
    reports, traces = [], []
    for kind in kinds:
        report, trace = fit_log_sample(
            logs, kind, sampler,
            index_id=series.name, rho=rho_used, filter_size=filter_size,
            hdi_mass=hdi_mass,
        )
        reports.append(report)
        if keep_traces:
            traces.append(trace)
    return reports, traces


# ---------------------------------------------------------------------------
# sensitivity scans

SCAN_CSV_HEADER = (
    "scan,label,index,model,filter_size,rho,n_plus,n_minus,d_mean,d_std,"
    "hdi_low,hdi_high,ess,max_rhat,waic,waic_se,divergence_rate,error"
)


@dataclass(frozen=True)
class ScanPoint:
    """One grid point of a sensitivity scan; ``error`` is empty on success."""

    scan: str
    label: str
    index_id: str
    model: str
    filter_size: int
    rho: float
    n_plus: int = 0
    n_minus: int = 0
    d_mean: float = math.nan
    d_std: float = math.nan
    hdi_low: float = math.nan
    hdi_high: float = math.nan
    ess: float = math.nan
    max_rhat: float = math.nan
    waic: float = math.nan
    waic_se: float = math.nan
    divergence_rate: float = math.nan
    error: str = ""

    def csv_row(self) -> str:
        def num(v: float) -> str:
            return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.10g}"
        fields = [
            self.scan, self.label, self.index_id, self.model,
            str(self.filter_size), num(self.rho), str(self.n_plus),
            str(self.n_minus), num(self.d_mean), num(self.d_std),
            num(self.hdi_low), num(self.hdi_high), num(self.ess),
            num(self.max_rhat), num(self.waic), num(self.waic_se),
            num(self.divergence_rate), self.error.replace(",", ";"),
        ]
        return ",".join(fields)

    @classmethod
    def from_report(cls, scan: str, label: str, report: FitReport) -> "ScanPoint":
        return cls(
            scan=scan, label=label, index_id=report.index_id, model=report.model,
            filter_size=report.filter_size, rho=report.rho,
            n_plus=report.n_plus, n_minus=report.n_minus,
            d_mean=report.d_mean, d_std=report.d_std,
            hdi_low=report.hdi_low, hdi_high=report.hdi_high,
            ess=report.ess_d, max_rhat=report.max_rhat,
            waic=report.waic, waic_se=report.waic_se,
            divergence_rate=report.divergence_rate,
        )


def scan_points_csv(points: Sequence[ScanPoint]) -> str:
    return "\n".join([SCAN_CSV_HEADER] + [p.csv_row() for p in points]) + "\n"


def _point_from_fields(fields: dict) -> ScanPoint:
    try:
        return ScanPoint(
            scan=str(fields["scan"]), label=str(fields["label"]),
            index_id=str(fields.get("index", fields.get("index_id", ""))),
            model=str(fields["model"]), filter_size=int(fields["filter_size"]),
            rho=float(fields["rho"]), n_plus=int(fields["n_plus"]),
            n_minus=int(fields["n_minus"]), d_mean=float(fields["d_mean"]),
            d_std=float(fields["d_std"]), hdi_low=float(fields["hdi_low"]),
            hdi_high=float(fields["hdi_high"]), ess=float(fields["ess"]),
            max_rhat=float(fields["max_rhat"]), waic=float(fields["waic"]),
            waic_se=float(fields["waic_se"]),
            divergence_rate=float(fields["divergence_rate"]),
            error=str(fields.get("error", "") or ""),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedReportError(f"bad scan row: {exc}") from exc


def scan_points_from_csv(text: str) -> list[ScanPoint]:
    """Parse rows written by :func:`scan_points_csv`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SCAN_CSV_HEADER:
        raise MalformedReportError("not a scan CSV (header mismatch)")
    header = SCAN_CSV_HEADER.split(",")
    points = []
    for line in lines[1:]:
        cells = line.split(",", len(header) - 1)
        if len(cells) != len(header):
            raise MalformedReportError(f"bad scan row: {line!r}")
        points.append(_point_from_fields(dict(zip(header, cells))))
    return points


def scan_points_from_json(text: str) -> list[ScanPoint]:
    """Parse the JSON twin of the scan CSV (a list of row objects)."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedReportError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise MalformedReportError("scan JSON must be a list of rows")
    return [_point_from_fields(row) for row in payload]


def _fit_point(scan, label, logs, kind, sampler, index_id, rho, filter_size):
    try:
        report, _ = fit_log_sample(
            logs, kind, sampler,
            index_id=index_id, rho=rho, filter_size=filter_size,
        )
        return ScanPoint.from_report(scan, label, report)
    except GainLossError as exc:
        return ScanPoint(
            scan=scan, label=label, index_id=index_id, model=str(kind),
            filter_size=filter_size, rho=rho if rho is not None else math.nan,
            error=f"{type(exc).__name__}: {exc}",
        )


def scan_filter(
    series: PriceSeries,
    kinds: Sequence[ModelKind],
    sampler: SamplerConfig,
    filter_sizes: Sequence[int] = DEFAULT_FILTER_GRID,
    rho: Optional[float] = None,
    reference_filter: int = DEFAULT_FILTER_SIZE,
) -> list[ScanPoint]:
    """Refit across detrending window sizes with the barrier held fixed.

    The barrier defaults to the sample std of the series detrended at the
    reference window, so the grid varies only the filter.
    """
    if rho is None:
        rho = threshold_from_std(detrend(series, reference_filter))
    points = []
    for f in filter_sizes:
        label = str(f)
        try:
            _, rho_used, _, logs = prepare_sample(series, f, rho)
        except GainLossError as exc:
            for kind in kinds:
                points.append(ScanPoint(
                    scan="filter", label=label, index_id=series.name,
                    model=str(kind), filter_size=f, rho=rho,
                    error=f"{type(exc).__name__}: {exc}",
                ))
            continue
        for kind in kinds:
            points.append(_fit_point("filter", label, logs, kind, sampler,
                                     series.name, rho_used, f))
    return points


def scan_rho(
    series: PriceSeries,
    kinds: Sequence[ModelKind],
    sampler: SamplerConfig,
    scales: Sequence[float] = DEFAULT_RHO_SCALES,
    filter_size: int = DEFAULT_FILTER_SIZE,
) -> list[ScanPoint]:
    """Refit across barrier levels, expressed as multiples of the sample std."""
    bad = [s for s in scales if not (s > 0.0)]
    if bad:
        raise NonPositiveRhoError(f"barrier scales must be positive, got {bad}")
    filtered = detrend(series, filter_size)
    base = threshold_from_std(filtered)
    points = []
    for scale in scales:
        label = f"{scale:g}"
        rho = scale * base
        try:
            sample = hitting_times(filtered.values, rho)
            logs = log_sample(sample)
        except GainLossError as exc:
            for kind in kinds:
                points.append(ScanPoint(
                    scan="rho", label=label, index_id=series.name,
                    model=str(kind), filter_size=filter_size, rho=rho,
                    error=f"{type(exc).__name__}: {exc}",
                ))
            continue
        for kind in kinds:
            points.append(_fit_point("rho", label, logs, kind, sampler,
                                     series.name, rho, filter_size))
    return points


def _year(date: np.datetime64) -> int:
    return int(str(np.datetime64(date, "Y")))


def scan_window(
    series: PriceSeries,
    kinds: Sequence[ModelKind],
    sampler: SamplerConfig,
    window_years: int = DEFAULT_WINDOW_YEARS,
    filter_size: int = DEFAULT_WINDOW_FILTER,
    rho: float = DEFAULT_WINDOW_RHO,
) -> list[ScanPoint]:
    """Refit on rolling calendar windows stepped one year at a time.

    A window labeled Y covers the ``window_years`` calendar years up to and
    excluding year Y (so a 13-year span yields labels first+5 .. first+12:
    eight windows for a five-year length).
    """
    first = _year(series.dates[0])
    last = _year(series.dates[-1])
    points = []
    for end_label in range(first + window_years, last + 1):
        label = str(end_label)
        start = np.datetime64(f"{end_label - window_years}-01-01", "D")
        end = np.datetime64(f"{end_label - 1}-12-31", "D")
        try:
            window = slice_window(series, start, end)
            _, rho_used, _, logs = prepare_sample(window, filter_size, rho)
        except GainLossError as exc:
            for kind in kinds:
                points.append(ScanPoint(
                    scan="window", label=label, index_id=series.name,
                    model=str(kind), filter_size=filter_size, rho=rho,
                    error=f"{type(exc).__name__}: {exc}",
                ))
            continue
        for kind in kinds:
            points.append(_fit_point("window", label, logs, kind, sampler,
                                     series.name, rho_used, filter_size))
    return points


# ---------------------------------------------------------------------------
# synthetic data

def synthetic_gbm_series(
    n_days: int,
    sigma: float,
    lam: float = 0.0,
    s0: float = 100.0,
    seed: int = 0,
    start: str = "2008-01-01",
    name: str = "gbm",
) -> PriceSeries:
    """Geometric-Brownian price series on consecutive business days.

    The log price takes one Gaussian step per day: drift ``lam``, scale
    ``sigma`` (per square-root day).
    """
    if n_days < 2:
        raise GainLossError("need at least two days")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed)))
    steps = rng.standard_normal(n_days - 1) * sigma + lam
    log_price = np.concatenate([[0.0], np.cumsum(steps)]) + math.log(s0)
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days),
                             roll="forward")
    return PriceSeries(dates=dates.astype("datetime64[D]"),
                       closes=np.exp(log_price), name=name)
