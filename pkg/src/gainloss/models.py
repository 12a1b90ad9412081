"""Two hierarchical models for log hitting times.

Both models treat the gain-side and loss-side log hitting times x = ln tau as
exchangeable draws from a parametric family, with one independent parameter
block per side.

Student-t block (three parameters per side):

    x ~ StudentT(mu, sigma, nu)          location mu, scale sigma, dof nu
    mu    ~ Normal(m, s^2)               m, s = empirical mean/std of the side
    sigma ~ Uniform(1, 100)
    nu    ~ 1 + Exponential(rate 1/29)   mean 30, support nu > 1

Inverse-Gamma block (two parameters per side), parameterized by its own mean
m and standard deviation s through

    alpha = 2 + m^2 / s^2,   beta = m * (alpha - 1),

so that mean(IG(alpha, beta)) = m and std = s:

    x ~ InverseGamma(alpha, beta)
    m ~ Normal(m_emp, s_emp^2) restricted to m > 0
    s ~ Uniform(1, 100)

Sampling happens in unconstrained coordinates: identity for locations, a
scaled logit for interval-bounded scales, and a (shifted) log for lower
bounded parameters; the log Jacobian of each map is added to the density.
All gradients are analytic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit, gammaln

from .errors import DomainError, EmptySideError, NonFiniteError

__all__ = [
    "ModelKind",
    "PriorSpec",
    "ModelSpec",
    "StudentParams",
    "InvGammaParams",
    "student_logpdf",
    "invgamma_logpdf",
    "ig_shape_rate",
    "ig_moments",
    "log_prior",
    "Posterior",
]

SIGMA_LOW = 1.0
SIGMA_HIGH = 100.0
NU_RATE = 1.0 / 29.0
NU_SHIFT = 1.0
NU_INIT = 30.0


class ModelKind(str, enum.Enum):
    STUDENT_T = "student-t"
    INV_GAMMA = "inv-gamma"

    def __str__(self) -> str:  # keep CLI/report output free of enum repr
        return self.value


@dataclass(frozen=True)
class PriorSpec:
    """Empirical prior centers/widths plus the fixed hyperparameters."""

    m_plus: float
    s_plus: float
    m_minus: float
    s_minus: float
    sigma_low: float = SIGMA_LOW
    sigma_high: float = SIGMA_HIGH
    nu_rate: float = NU_RATE
    nu_shift: float = NU_SHIFT

    @classmethod
    def from_data(cls, x_plus: np.ndarray, x_minus: np.ndarray) -> "PriorSpec":
        """Center the location priors on the empirical moments of each side."""
        if x_plus.size < 2 or x_minus.size < 2:
            raise EmptySideError("priors need at least two observations per side")
        return cls(
            m_plus=float(np.mean(x_plus)),
            s_plus=float(np.std(x_plus, ddof=1)),
            m_minus=float(np.mean(x_minus)),
            s_minus=float(np.std(x_minus, ddof=1)),
        )


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    prior: PriorSpec


@dataclass(frozen=True)
class StudentParams:
    mu_plus: float
    sigma_plus: float
    nu_plus: float
    mu_minus: float
    sigma_minus: float
    nu_minus: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_plus, self.sigma_plus, self.nu_plus,
                         self.mu_minus, self.sigma_minus, self.nu_minus])

    @classmethod
    def from_array(cls, theta: np.ndarray) -> "StudentParams":
        return cls(*map(float, theta))


@dataclass(frozen=True)
class InvGammaParams:
    m_plus: float
    s_plus: float
    m_minus: float
    s_minus: float

    def as_array(self) -> np.ndarray:
        return np.array([self.m_plus, self.s_plus, self.m_minus, self.s_minus])

    @classmethod
    def from_array(cls, theta: np.ndarray) -> "InvGammaParams":
        return cls(*map(float, theta))


# ---------------------------------------------------------------------------
# densities


def student_logpdf(x, mu: float, sigma: float, nu: float):
    """Log density of the location-scale Student-t (sigma is the scale)."""
    if sigma <= 0.0 or nu <= 0.0:
        raise DomainError(f"sigma and nu must be positive, got {sigma}, {nu}")
    x = np.asarray(x, dtype=np.float64)
    t2 = ((x - mu) / sigma) ** 2
    out = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * math.log(math.pi * nu)
        - math.log(sigma)
        - 0.5 * (nu + 1.0) * np.log1p(t2 / nu)
    )
    return out if out.shape else float(out)


def invgamma_logpdf(x, alpha: float, beta: float):
    """Log density of InverseGamma(shape alpha, rate beta) at x > 0."""
    if alpha <= 0.0 or beta <= 0.0:
        raise DomainError(f"alpha and beta must be positive, got {alpha}, {beta}")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise DomainError("inverse gamma density is defined only for x > 0")
    out = alpha * math.log(beta) - gammaln(alpha) - (alpha + 1.0) * np.log(x) - beta / x
    return out if out.shape else float(out)


def ig_shape_rate(m: float, s: float) -> tuple[float, float]:
    """Map (mean m, std s) to (shape alpha, rate beta); both moments positive."""
    if m <= 0.0 or s <= 0.0:
        raise DomainError(f"mean and std must be positive, got {m}, {s}")
    alpha = 2.0 + (m * m) / (s * s)
    beta = m * (alpha - 1.0)
    return alpha, beta


def ig_moments(alpha: float, beta: float) -> tuple[float, float]:
    """Inverse of :func:`ig_shape_rate`; needs alpha > 2 for a finite std."""
    if alpha <= 2.0 or beta <= 0.0:
        raise DomainError(f"need alpha > 2 and beta > 0, got {alpha}, {beta}")
    m = beta / (alpha - 1.0)
    s = beta / ((alpha - 1.0) * math.sqrt(alpha - 2.0))
    return m, s


def _normal_logpdf(x: float, m: float, s: float) -> float:
    return -0.5 * math.log(2.0 * math.pi * s * s) - (x - m) ** 2 / (2.0 * s * s)


def log_prior(theta: np.ndarray, spec: ModelSpec) -> float:
    """Joint log prior at a constrained parameter vector.

    Returns -inf outside the support (not an error; the samplers reject such
    points). The normal prior on the Inverse-Gamma mean is restricted to
    m > 0; its truncation constant is dropped, which only shifts the log
    posterior by a constant.
    """
    p = spec.prior
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(np.isnan(theta)):
        raise NonFiniteError("parameter vector contains NaN")
    total = 0.0
    if spec.kind is ModelKind.STUDENT_T:
        mu_p, sg_p, nu_p, mu_m, sg_m, nu_m = theta
        for sg in (sg_p, sg_m):
            if not (p.sigma_low < sg < p.sigma_high):
                return -math.inf
            total -= math.log(p.sigma_high - p.sigma_low)
        for nu in (nu_p, nu_m):
            if nu < p.nu_shift:
                return -math.inf
            total += math.log(p.nu_rate) - p.nu_rate * (nu - p.nu_shift)
        total += _normal_logpdf(mu_p, p.m_plus, p.s_plus)
        total += _normal_logpdf(mu_m, p.m_minus, p.s_minus)
    else:
        m_p, s_p, m_m, s_m = theta
        for s in (s_p, s_m):
            if not (p.sigma_low < s < p.sigma_high):
                return -math.inf
            total -= math.log(p.sigma_high - p.sigma_low)
        if m_p <= 0.0 or m_m <= 0.0:
            return -math.inf
        total += _normal_logpdf(m_p, p.m_plus, p.s_plus)
        total += _normal_logpdf(m_m, p.m_minus, p.s_minus)
    return float(total)


# ---------------------------------------------------------------------------
# unconstrained coordinates

_IDENTITY = "identity"
_INTERVAL = "interval"   # scaled logit onto (sigma_low, sigma_high)
_LOWER = "lower"         # shift + exp onto (bound, inf)


def _softplus(z: float) -> float:
    return math.log1p(math.exp(-abs(z))) + max(z, 0.0)


class Posterior:
    """Joint unconstrained log posterior of one model on one data set.

    The object bundles data-dependent sufficient statistics, the coordinate
    transform, and analytic gradients; it is the target handed to the
    sampler. Per-observation log likelihoods (gain side first, then loss
    side) are exposed for information-criterion computations.
    """

    def __init__(self, spec: ModelSpec, x_plus: np.ndarray, x_minus: np.ndarray):
        self.spec = spec
        self.x_plus = np.asarray(x_plus, dtype=np.float64)
        self.x_minus = np.asarray(x_minus, dtype=np.float64)
        if self.x_plus.size == 0 or self.x_minus.size == 0:
            raise EmptySideError("both sides need at least one observation")
        if spec.kind is ModelKind.INV_GAMMA:
            if np.any(self.x_plus <= 0.0) or np.any(self.x_minus <= 0.0):
                raise DomainError(
                    "inverse gamma support is x > 0; drop or rescale "
                    "non-positive observations before fitting"
                )
            # Likelihood and gradient depend on the data only through
            # (n, sum ln x, sum 1/x) per side.
            self._ig_stats = tuple(
                (float(x.size), float(np.sum(np.log(x))), float(np.sum(1.0 / x)))
                for x in (self.x_plus, self.x_minus)
            )
            self.param_names = ("m_plus", "s_plus", "m_minus", "s_minus")
            self._transforms = (_LOWER, _INTERVAL, _LOWER, _INTERVAL)
            self._bounds = (0.0, None, 0.0, None)
        else:
            self.param_names = ("mu_plus", "sigma_plus", "nu_plus",
                                "mu_minus", "sigma_minus", "nu_minus")
            self._transforms = (_IDENTITY, _INTERVAL, _LOWER,
                                _IDENTITY, _INTERVAL, _LOWER)
            self._bounds = (None, None, spec.prior.nu_shift,
                            None, None, spec.prior.nu_shift)
        self.dim = len(self.param_names)

    # -- coordinate maps ----------------------------------------------------

    def constrain(self, z: np.ndarray) -> np.ndarray:
        """Map an unconstrained vector to model parameters."""
        p = self.spec.prior
        z = np.asarray(z, dtype=np.float64)
        theta = np.empty_like(z)
        for k, kind in enumerate(self._transforms):
            if kind == _IDENTITY:
                theta[k] = z[k]
            elif kind == _INTERVAL:
                theta[k] = p.sigma_low + (p.sigma_high - p.sigma_low) * expit(z[k])
            else:
                theta[k] = self._bounds[k] + math.exp(min(z[k], 700.0))
        return theta

    def unconstrain(self, theta: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`constrain`; raises DomainError off the support."""
        p = self.spec.prior
        theta = np.asarray(theta, dtype=np.float64)
        z = np.empty_like(theta)
        for k, kind in enumerate(self._transforms):
            if kind == _IDENTITY:
                z[k] = theta[k]
            elif kind == _INTERVAL:
                frac = (theta[k] - p.sigma_low) / (p.sigma_high - p.sigma_low)
                if not (0.0 < frac < 1.0):
                    raise DomainError(
                        f"{self.param_names[k]}={theta[k]} outside "
                        f"({p.sigma_low}, {p.sigma_high})"
                    )
                z[k] = math.log(frac) - math.log1p(-frac)
            else:
                gap = theta[k] - self._bounds[k]
                if gap <= 0.0:
                    raise DomainError(
                        f"{self.param_names[k]}={theta[k]} must exceed {self._bounds[k]}"
                    )
                z[k] = math.log(gap)
        return z

    def log_jacobian(self, z: np.ndarray) -> float:
        """Log |d theta / d z| of the constraining map."""
        p = self.spec.prior
        total = 0.0
        for k, kind in enumerate(self._transforms):
            if kind == _INTERVAL:
                total += (math.log(p.sigma_high - p.sigma_low)
                          - _softplus(z[k]) - _softplus(-z[k]))
            elif kind == _LOWER:
                total += z[k]
        return total

    # -- densities ----------------------------------------------------------

    def log_posterior(self, z: np.ndarray) -> float:
        return self.value_and_grad(z)[0]

    def value_and_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        """Unconstrained log posterior and its gradient in one pass.

        Off-support or overflowing points return (-inf, zeros); NaN input is
        a caller bug and raises :class:`NonFiniteError`.
        """
        z = np.asarray(z, dtype=np.float64)
        if np.any(np.isnan(z)):
            raise NonFiniteError("unconstrained vector contains NaN")
        p = self.spec.prior
        grad = np.zeros(self.dim)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            theta = self.constrain(z)
            if not np.all(np.isfinite(theta)):
                return -math.inf, grad
            if self.spec.kind is ModelKind.STUDENT_T:
                value, grad_theta = self._student_value_grad(theta)
            else:
                value, grad_theta = self._invgamma_value_grad(theta)
            if not math.isfinite(value):
                return -math.inf, grad
            # chain rule through the transform, plus the Jacobian term
            for k, kind in enumerate(self._transforms):
                if kind == _IDENTITY:
                    grad[k] = grad_theta[k]
                elif kind == _INTERVAL:
                    sig = expit(z[k])
                    grad[k] = (grad_theta[k] * (p.sigma_high - p.sigma_low)
                               * sig * (1.0 - sig)) + (1.0 - 2.0 * sig)
                else:
                    grad[k] = grad_theta[k] * (theta[k] - self._bounds[k]) + 1.0
            value += self.log_jacobian(z)
        if not np.all(np.isfinite(grad)) or not math.isfinite(value):
            return -math.inf, np.zeros(self.dim)
        return float(value), grad

    def _student_value_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.spec.prior
        grad = np.zeros(6)
        value = 0.0
        for side, (x, m0, s0) in enumerate(
            ((self.x_plus, p.m_plus, p.s_plus), (self.x_minus, p.m_minus, p.s_minus))
        ):
            off = 3 * side
            mu, sigma, nu = theta[off], theta[off + 1], theta[off + 2]
            n = x.size
            t = (x - mu) / sigma
            t2 = t * t
            lu = np.log1p(t2 / nu)
            w = (nu + 1.0) / (nu + t2)
            sum_lu = float(np.sum(lu))
            sum_wt = float(np.sum(w * t))
            sum_wt2 = float(np.sum(w * t2))
            value += n * (
                gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0)
                - 0.5 * math.log(math.pi * nu) - math.log(sigma)
            ) - 0.5 * (nu + 1.0) * sum_lu
            d_mu = sum_wt / sigma
            d_sigma = (sum_wt2 - n) / sigma
            d_nu = (
                0.5 * n * (digamma((nu + 1.0) / 2.0) - digamma(nu / 2.0))
                - 0.5 * n / nu - 0.5 * sum_lu + sum_wt2 / (2.0 * nu)
            )
            # priors: mu ~ N(m0, s0^2), sigma ~ U (flat inside), nu shifted exp
            value += _normal_logpdf(mu, m0, s0)
            value -= math.log(p.sigma_high - p.sigma_low)
            value += math.log(p.nu_rate) - p.nu_rate * (nu - p.nu_shift)
            grad[off] = d_mu - (mu - m0) / (s0 * s0)
            grad[off + 1] = d_sigma
            grad[off + 2] = d_nu - p.nu_rate
        return value, grad

    def _invgamma_value_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.spec.prior
        grad = np.zeros(4)
        value = 0.0
        for side, ((n, sum_ln, sum_inv), m0, s0) in enumerate(
            zip(self._ig_stats, (p.m_plus, p.m_minus), (p.s_plus, p.s_minus))
        ):
            off = 2 * side
            m, s = theta[off], theta[off + 1]
            if m <= 0.0:
                return -math.inf, grad
            alpha = 2.0 + (m * m) / (s * s)
            beta = m * (alpha - 1.0)
            value += n * (alpha * math.log(beta) - gammaln(alpha)) \
                - (alpha + 1.0) * sum_ln - beta * sum_inv
            d_alpha = n * (math.log(beta) - digamma(alpha)) - sum_ln
            d_beta = n * alpha / beta - sum_inv
            da_dm = 2.0 * m / (s * s)
            da_ds = -2.0 * m * m / (s ** 3)
            db_dm = 1.0 + 3.0 * m * m / (s * s)
            db_ds = -2.0 * m ** 3 / (s ** 3)
            value += _normal_logpdf(m, m0, s0)
            value -= math.log(p.sigma_high - p.sigma_low)
            grad[off] = d_alpha * da_dm + d_beta * db_dm - (m - m0) / (s0 * s0)
            grad[off + 1] = d_alpha * da_ds + d_beta * db_ds
        return value, grad

    # -- per-observation likelihood ------------------------------------------

    @property
    def n_obs(self) -> int:
        return int(self.x_plus.size + self.x_minus.size)

    def pointwise_loglik(self, theta: np.ndarray) -> np.ndarray:
        """Log likelihood of each observation (gain side first, then loss)."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.spec.kind is ModelKind.STUDENT_T:
            plus = student_logpdf(self.x_plus, theta[0], theta[1], theta[2])
            minus = student_logpdf(self.x_minus, theta[3], theta[4], theta[5])
        else:
            a_p, b_p = ig_shape_rate(theta[0], theta[1])
            a_m, b_m = ig_shape_rate(theta[2], theta[3])
            plus = invgamma_logpdf(self.x_plus, a_p, b_p)
            minus = invgamma_logpdf(self.x_minus, a_m, b_m)
        return np.concatenate([np.atleast_1d(plus), np.atleast_1d(minus)])

    def initial_unconstrained(self) -> np.ndarray:
        """Empirical-moment starting point, mapped to unconstrained space."""
        p = self.spec.prior
        lo, hi = p.sigma_low, p.sigma_high
        clip = lambda v: float(np.clip(v, lo * 1.05, hi * 0.95))
        if self.spec.kind is ModelKind.STUDENT_T:
            theta = np.array([p.m_plus, clip(p.s_plus), NU_INIT,
                              p.m_minus, clip(p.s_minus), NU_INIT])
        else:
            theta = np.array([max(p.m_plus, 1e-3), clip(p.s_plus),
                              max(p.m_minus, 1e-3), clip(p.s_minus)])
        return self.unconstrain(theta)
