"""Shared fixtures and stub sampler targets used across the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from gainloss.pipeline import synthetic_gbm_series
from gainloss.series import write_price_csv

# one line per acceptance criterion, echoed into the terminal summary
_criterion_lines: list[str] = []


def record_criterion(line: str) -> None:
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


class GaussianTarget:
    """Independent zero-mean Gaussian with fixed per-coordinate variances."""

    def __init__(self, variances):
        self.var = np.asarray(variances, dtype=np.float64)
        self.dim = self.var.size

    def value_and_grad(self, z):
        grad = -z / self.var
        return 0.5 * float(z @ grad), grad


class CorrelatedGaussianTarget:
    """Zero-mean Gaussian with a dense covariance matrix."""

    def __init__(self, cov):
        self.cov = np.asarray(cov, dtype=np.float64)
        self.prec = np.linalg.inv(self.cov)
        self.dim = self.cov.shape[0]

    def value_and_grad(self, z):
        grad = -self.prec @ z
        return 0.5 * float(z @ grad), grad


class NamedGaussianTarget(GaussianTarget):
    """Unit Gaussian wearing location-scale-shape parameter names.

    Lets report-building tests exercise the draw bookkeeping without paying
    for a real model fit.  Deliberately has no pointwise_loglik attribute.
    """

    param_names = (
        "mu_plus",
        "sigma_plus",
        "nu_plus",
        "mu_minus",
        "sigma_minus",
        "nu_minus",
    )

    def __init__(self):
        super().__init__(np.ones(6))

    def constrain(self, z):
        return np.asarray(z, dtype=np.float64)


class StallingTarget:
    """Pathological stub: every call after the first reports a worse density.

    The first evaluation is finite so chain initialization succeeds, after
    which every proposal looks catastrophically bad and acceptance pins at
    zero.  Exercises the adaptation-failure contract deterministically.
    """

    dim = 2

    def __init__(self):
        self.calls = 0

    def value_and_grad(self, z):
        self.calls += 1
        if self.calls == 1:
            return 0.0, np.zeros(self.dim)
        return -1e9 * self.calls, np.zeros(self.dim)


@pytest.fixture
def price_csv_factory(tmp_path):
    """Factory writing a synthetic GBM price CSV; returns the file path."""

    def make(n_days=400, sigma=0.01, lam=0.0, seed=0, name="synth", start="2015-01-02"):
        series = synthetic_gbm_series(
            n_days, sigma, lam=lam, seed=seed, start=start, name=name
        )
        path = tmp_path / f"{name}.csv"
        write_price_csv(series, path)
        return path

    return make
