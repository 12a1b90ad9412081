"""No-U-Turn sampler with step-size and diagonal mass adaptation.

One transition builds a trajectory by repeated binary doubling. Each doubling
runs 2^depth leapfrog steps in a uniformly random direction; leaves are
weighted by exp(-(H - H0)) and the returned draw is a multinomial pick among
them (biased toward the newest subtree at the top level, plain multinomial
inside a subtree). Doubling stops when either trajectory end would retrace
its path (velocity-based U-turn test), when the energy error exceeds
``DIVERGENCE_THRESHOLD``, or at ``max_tree_depth`` doublings past the first
(so ``max_tree_depth = 0`` degenerates to a single leapfrog Metropolis step).

Warmup interleaves dual averaging of the step size (targeting a mean
acceptance statistic) with expanding-window estimation of a diagonal mass
matrix from the warmup draws; the final step size is the averaged iterate of
the last dual-averaging stretch.

Chains are independent: chain ``c`` of a run seeded with ``seed`` draws from
a counter-based generator keyed by ``(seed, c)``, so results do not depend on
execution order. Per-draw pointwise log likelihoods are recorded whenever the
target exposes them, for information-criterion use downstream.

The target is any object with a ``dim`` attribute and a
``value_and_grad(z) -> (logp, grad)`` method in unconstrained coordinates
(off-support points must return ``-inf``, not raise). Optional methods
``constrain``, ``pointwise_loglik``, ``param_names`` and
``initial_unconstrained`` refine what the trace records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .errors import AdaptationFailedError, DomainError

__all__ = [
    "SamplerConfig",
    "Trace",
    "DIVERGENCE_THRESHOLD",
    "leapfrog",
    "nuts_draw",
    "run_chains",
    "trace_to_csv",
    "trace_summary",
]

DIVERGENCE_THRESHOLD = 1000.0

# dual-averaging constants
_DA_GAMMA = 0.05
_DA_T0 = 10.0
_DA_KAPPA = 0.75

# warmup window layout
_INIT_BUFFER = 75
_TERM_BUFFER = 50   # floor; the actual terminal stretch grows with n_tune
_BASE_WINDOW = 25

_MIN_ACCEPT = 0.1  # below this after warmup the chain is declared failed


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_draw: int = 4000
    n_tune: int = 2000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1 or self.n_draw < 1 or self.n_tune < 0:
            raise DomainError("need n_chains >= 1, n_draw >= 1, n_tune >= 0")
        if not (0.0 < self.target_accept < 1.0):
            raise DomainError("target_accept must lie in (0, 1)")


@dataclass
class Trace:
    """Retained draws of one run; tuning iterations are excluded."""

    draws: np.ndarray                 # [n_chains, n_draw, dim], constrained
    draws_unconstrained: np.ndarray   # [n_chains, n_draw, dim]
    param_names: tuple[str, ...]
    accept_stat: np.ndarray           # [n_chains, n_draw]
    divergent: np.ndarray             # [n_chains, n_draw] bool
    tree_depth: np.ndarray            # [n_chains, n_draw] int16
    step_size: np.ndarray             # [n_chains]
    mass_diag: np.ndarray             # [n_chains, dim]
    config: SamplerConfig
    pointwise_loglik: Optional[np.ndarray] = None  # [n_chains, n_draw, n_obs] f32

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draw(self) -> int:
        return self.draws.shape[1]

    @property
    def divergence_rate(self) -> float:
        return float(np.mean(self.divergent))

    def param_index(self, name: str) -> int:
        try:
            return self.param_names.index(name)
        except ValueError as exc:
            raise KeyError(f"no parameter named {name!r}") from exc

    def chains_for(self, name: str) -> np.ndarray:
        """Constrained draws of one parameter, shape [n_chains, n_draw]."""
        return self.draws[:, :, self.param_index(name)]

    def flat(self, name: str) -> np.ndarray:
        return self.chains_for(name).reshape(-1)


def leapfrog(
    z: np.ndarray,
    p: np.ndarray,
    grad: np.ndarray,
    eps: float,
    inv_mass: np.ndarray,
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """One half-kick / drift / half-kick step; grad is d(logp)/dz at z."""
    with np.errstate(over="ignore", invalid="ignore"):
        p_half = p + 0.5 * eps * grad
        z_new = z + eps * (inv_mass * p_half)
    if not np.all(np.isfinite(z_new)):
        # Exploding trajectory: surface as a divergent leaf, never as NaN math.
        return z, p, -math.inf, np.zeros_like(z)
    value_new, grad_new = value_and_grad(z_new)
    with np.errstate(over="ignore", invalid="ignore"):
        p_new = p_half + 0.5 * eps * grad_new
    return z_new, p_new, value_new, grad_new


def _kinetic(p: np.ndarray, inv_mass: np.ndarray) -> float:
    # Momenta can blow up on unstable trajectories; report inf so the caller
    # treats the leaf as divergent instead of spraying overflow warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        k = 0.5 * float(np.dot(p * p, inv_mass))
    return k if math.isfinite(k) else math.inf


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def _turned(z_left, p_left, z_right, p_right, inv_mass) -> bool:
    """U-turn test on velocities: would either end start moving back inward?"""
    dz = z_right - z_left
    return (
        float(np.dot(dz, inv_mass * p_left)) < 0.0
        or float(np.dot(dz, inv_mass * p_right)) < 0.0
    )


class _TreeState:
    """Mutable bundle for one side of the doubling recursion."""

    __slots__ = ("z_left", "p_left", "g_left", "z_right", "p_right", "g_right",
                 "z_prop", "v_prop", "g_prop", "log_weight", "sum_alpha",
                 "n_alpha", "divergent", "turned")

    def __init__(self, z, p, g, value):
        self.z_left = self.z_right = self.z_prop = z
        self.p_left = self.p_right = p
        self.g_left = self.g_right = self.g_prop = g
        self.v_prop = value
        self.log_weight = 0.0
        self.sum_alpha = 0.0
        self.n_alpha = 0
        self.divergent = False
        self.turned = False


def _build_subtree(state_edge, direction, depth, eps, inv_mass, h0,
                   value_and_grad, rng):
    """Build a subtree of 2**depth leaves from one trajectory edge.

    Returns a _TreeState whose edges are the subtree's outermost states and
    whose proposal is a multinomial pick among its leaves.
    """
    z, p, g = state_edge
    if depth == 0:
        z1, p1, v1, g1 = leapfrog(z, p, g, direction * eps, inv_mass, value_and_grad)
        h1 = -v1 + _kinetic(p1, inv_mass) if math.isfinite(v1) else math.inf
        delta_h = h1 - h0
        if not math.isfinite(delta_h):
            delta_h = math.inf
        leaf = _TreeState(z1, p1, g1, v1)
        leaf.log_weight = -delta_h
        leaf.sum_alpha = math.exp(-delta_h) if delta_h > 0.0 else 1.0
        leaf.n_alpha = 1
        leaf.divergent = delta_h > DIVERGENCE_THRESHOLD
        return leaf

    first = _build_subtree(state_edge, direction, depth - 1, eps, inv_mass,
                           h0, value_and_grad, rng)
    if first.divergent or first.turned:
        return first
    edge = ((first.z_right, first.p_right, first.g_right) if direction > 0
            else (first.z_left, first.p_left, first.g_left))
    second = _build_subtree(edge, direction, depth - 1, eps, inv_mass,
                            h0, value_and_grad, rng)
    first.sum_alpha += second.sum_alpha
    first.n_alpha += second.n_alpha
    if second.divergent or second.turned:
        first.divergent = second.divergent
        first.turned = second.turned
        return first
    total = _logaddexp(first.log_weight, second.log_weight)
    # within-subtree multinomial pick, proportional to subtree weights
    if total > -math.inf and math.log(rng.random()) < second.log_weight - total:
        first.z_prop = second.z_prop
        first.v_prop = second.v_prop
        first.g_prop = second.g_prop
    first.log_weight = total
    if direction > 0:
        first.z_right, first.p_right, first.g_right = (
            second.z_right, second.p_right, second.g_right)
    else:
        first.z_left, first.p_left, first.g_left = (
            second.z_left, second.p_left, second.g_left)
    first.turned = _turned(first.z_left, first.p_left, first.z_right,
                           first.p_right, inv_mass)
    return first


def nuts_draw(z, value, grad, eps, inv_mass, rng, value_and_grad,
              max_tree_depth: int = 10):
    """One NUTS transition from (z, value, grad).

    Returns ``(z, value, grad, info)`` where info carries ``accept_stat``
    (mean Metropolis statistic over evaluated leaves, in (0, 1]),
    ``divergent``, and ``depth`` (number of doublings performed).
    """
    std = np.sqrt(1.0 / inv_mass)
    p0 = rng.standard_normal(z.shape[0]) * std
    h0 = -value + _kinetic(p0, inv_mass)

    z_left = z_right = z
    p_left = p_right = p0
    g_left = g_right = grad
    z_prop, v_prop, g_prop = z, value, grad
    log_weight = 0.0  # the start state enters with weight exp(0)
    sum_alpha = 0.0
    n_alpha = 0
    divergent = False
    depth = 0

    for depth in range(max_tree_depth + 1):
        direction = 1 if rng.random() < 0.5 else -1
        edge = ((z_right, p_right, g_right) if direction > 0
                else (z_left, p_left, g_left))
        sub = _build_subtree(edge, direction, depth, eps, inv_mass, h0,
                             value_and_grad, rng)
        sum_alpha += sub.sum_alpha
        n_alpha += sub.n_alpha
        if sub.divergent or sub.turned:
            divergent = divergent or sub.divergent
            break
        # biased progressive sampling: favor the fresh subtree
        if math.log(rng.random()) < sub.log_weight - log_weight:
            z_prop, v_prop, g_prop = sub.z_prop, sub.v_prop, sub.g_prop
        log_weight = _logaddexp(log_weight, sub.log_weight)
        if direction > 0:
            z_right, p_right, g_right = sub.z_right, sub.p_right, sub.g_right
        else:
            z_left, p_left, g_left = sub.z_left, sub.p_left, sub.g_left
        if _turned(z_left, p_left, z_right, p_right, inv_mass):
            break

    accept_stat = sum_alpha / n_alpha if n_alpha else 0.0
    info = {"accept_stat": accept_stat, "divergent": divergent, "depth": depth}
    return z_prop, v_prop, g_prop, info


class _DualAveraging:
    """Nesterov dual averaging of log(eps) toward a target acceptance."""

    def __init__(self, eps0: float, target: float):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, alpha: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + _DA_T0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - alpha)
        self.log_eps = self.mu - math.sqrt(self.t) / _DA_GAMMA * self.h_bar
        w = self.t ** (-_DA_KAPPA)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def adapted(self) -> float:
        return math.exp(self.log_eps_bar)


def _find_reasonable_eps(z, value, grad, inv_mass, rng, value_and_grad) -> float:
    """Double/halve eps until one leapfrog step has acceptance near 1/2."""
    eps = 1.0
    std = np.sqrt(1.0 / inv_mass)
    p = rng.standard_normal(z.shape[0]) * std
    h0 = -value + _kinetic(p, inv_mass)
    _, p1, v1, _ = leapfrog(z, p, grad, eps, inv_mass, value_and_grad)
    h1 = -v1 + _kinetic(p1, inv_mass) if math.isfinite(v1) else math.inf
    log_ratio = h0 - h1 if math.isfinite(h1) else -math.inf
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * log_ratio <= direction * math.log(0.5):
            break
        eps *= 2.0 ** direction
        if not (1e-10 < eps < 1e7):
            eps = min(max(eps, 1e-10), 1e7)
            break
        _, p1, v1, _ = leapfrog(z, p, grad, eps, inv_mass, value_and_grad)
        h1 = -v1 + _kinetic(p1, inv_mass) if math.isfinite(v1) else math.inf
        log_ratio = h0 - h1 if math.isfinite(h1) else -math.inf
    return eps


def _term_buffer(n_tune: int) -> int:
    """Length of the final eps-only stretch.

    Step-size dual averaging restarts after the last mass update, and its
    averaged iterate needs a few hundred updates to settle near the target
    acceptance; a fixed 50-draw stretch leaves eps systematically small.
    The earlier doubling windows still need most of the tune span, or the
    mass matrix never converges on badly scaled targets.
    """
    return min(500, max(_TERM_BUFFER, n_tune // 3))


def _mass_windows(n_tune: int) -> list[tuple[int, int]]:
    """(start, end) iteration spans whose draws feed mass re-estimation."""
    term = _term_buffer(n_tune)
    if n_tune < _INIT_BUFFER + term + _BASE_WINDOW:
        return []
    windows = []
    start = _INIT_BUFFER
    size = _BASE_WINDOW
    while True:
        end = start + size
        # absorb a too-small final stretch into the last window
        if end + term > n_tune or n_tune - end - term < size:
            windows.append((start, n_tune - term))
            break
        windows.append((start, end))
        start = end
        size *= 2
    return windows


def _regularized_variance(draws: np.ndarray) -> np.ndarray:
    """Shrunk marginal variances; keeps the metric positive and tempered."""
    n = draws.shape[0]
    var = np.var(draws, axis=0, ddof=1) if n > 1 else np.ones(draws.shape[1])
    shrunk = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
    return np.maximum(shrunk, 1e-12)


def _warmup_chain(target, z0, cfg: SamplerConfig, rng, chain: int):
    """Adapt eps and the diagonal mass; returns (z, value, grad, eps, inv_mass)."""
    value, grad = target.value_and_grad(z0)
    if not math.isfinite(value):
        raise DomainError(f"chain {chain}: initial point has zero posterior density")
    dim = z0.shape[0]
    inv_mass = np.ones(dim)
    z = z0
    if cfg.n_tune == 0:
        eps = 0.5 * _find_reasonable_eps(z, value, grad, inv_mass, rng,
                                         target.value_and_grad)
        return z, value, grad, eps, inv_mass

    eps = _find_reasonable_eps(z, value, grad, inv_mass, rng, target.value_and_grad)
    da = _DualAveraging(eps, cfg.target_accept)
    windows = _mass_windows(cfg.n_tune)
    window_idx = 0
    buffer = []
    tail_alphas = []
    tail_len = min(100, cfg.n_tune)
    for it in range(cfg.n_tune):
        z, value, grad, info = nuts_draw(z, value, grad, eps, inv_mass, rng,
                                         target.value_and_grad, cfg.max_tree_depth)
        eps = da.update(info["accept_stat"])
        if cfg.n_tune - it <= tail_len:
            tail_alphas.append(info["accept_stat"])
        if window_idx < len(windows):
            w_start, w_end = windows[window_idx]
            if it >= w_start:
                buffer.append(z)
            if it + 1 == w_end:
                # diagonal inverse metric = marginal variances, so that
                # velocity inv_mass * p scales with the posterior width
                inv_mass = _regularized_variance(np.asarray(buffer))
                buffer = []
                window_idx += 1
                eps = _find_reasonable_eps(z, value, grad, inv_mass, rng,
                                           target.value_and_grad)
                da = _DualAveraging(eps, cfg.target_accept)
    mean_tail = float(np.mean(tail_alphas)) if tail_alphas else 0.0
    if mean_tail < _MIN_ACCEPT:
        raise AdaptationFailedError(chain, mean_tail)
    return z, value, grad, da.adapted, inv_mass


def run_chains(target, cfg: SamplerConfig) -> Trace:
    """Run ``cfg.n_chains`` independent NUTS chains on ``target``.

    Each chain starts from the target's preferred initial point (or the
    origin) plus uniform jitter on [-1, 1] per unconstrained coordinate, and
    is driven by its own counter-based generator keyed on
    ``(cfg.seed, chain)``. Raises :class:`AdaptationFailedError` if any
    chain's warmup stalls.
    """
    dim = target.dim
    names = tuple(getattr(target, "param_names",
                          tuple(f"param_{k}" for k in range(dim))))
    constrain = getattr(target, "constrain", None)
    pointwise = getattr(target, "pointwise_loglik", None)

    draws_u = np.empty((cfg.n_chains, cfg.n_draw, dim))
    draws_c = np.empty_like(draws_u)
    accept = np.empty((cfg.n_chains, cfg.n_draw))
    divergent = np.zeros((cfg.n_chains, cfg.n_draw), dtype=bool)
    depth = np.zeros((cfg.n_chains, cfg.n_draw), dtype=np.int16)
    step_sizes = np.empty(cfg.n_chains)
    masses = np.empty((cfg.n_chains, dim))
    loglik = None

    if hasattr(target, "initial_unconstrained"):
        z_center = np.asarray(target.initial_unconstrained(), dtype=np.float64)
    else:
        z_center = np.zeros(dim)

    for chain in range(cfg.n_chains):
        seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(chain,))
        rng = np.random.Generator(np.random.Philox(seq))
        z0 = z_center + rng.uniform(-1.0, 1.0, dim)
        # jittered start may fall off the support; pull it back toward center
        for _ in range(30):
            if math.isfinite(target.value_and_grad(z0)[0]):
                break
            z0 = z_center + 0.5 * (z0 - z_center)
        z, value, grad, eps, inv_mass = _warmup_chain(target, z0, cfg, rng, chain)
        step_sizes[chain] = eps
        masses[chain] = inv_mass  # estimated marginal variances
        for it in range(cfg.n_draw):
            z, value, grad, info = nuts_draw(z, value, grad, eps, inv_mass, rng,
                                             target.value_and_grad,
                                             cfg.max_tree_depth)
            draws_u[chain, it] = z
            theta = constrain(z) if constrain is not None else z
            draws_c[chain, it] = theta
            accept[chain, it] = info["accept_stat"]
            divergent[chain, it] = info["divergent"]
            depth[chain, it] = info["depth"]
            if pointwise is not None:
                ll = pointwise(theta)
                if loglik is None:
                    loglik = np.empty((cfg.n_chains, cfg.n_draw, ll.shape[0]),
                                      dtype=np.float32)
                loglik[chain, it] = ll

    return Trace(
        draws=draws_c,
        draws_unconstrained=draws_u,
        param_names=names,
        accept_stat=accept,
        divergent=divergent,
        tree_depth=depth,
        step_size=step_sizes,
        mass_diag=masses,
        config=cfg,
        pointwise_loglik=loglik,
    )


def trace_to_csv(trace: Trace, out_dir: Union[str, Path], prefix: str = "trace") -> list[Path]:
    """Write one columnar CSV per chain: chain, draw, parameters, stats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    header = "chain,draw," + ",".join(trace.param_names) + ",accept_stat,divergent"
    for chain in range(trace.n_chains):
        lines = [header]
        for it in range(trace.n_draw):
            vals = ",".join(f"{v:.10g}" for v in trace.draws[chain, it])
            lines.append(
                f"{chain},{it},{vals},{trace.accept_stat[chain, it]:.6g},"
                f"{int(trace.divergent[chain, it])}"
            )
        path = out / f"{prefix}_chain{chain}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def trace_summary(trace: Trace) -> dict:
    """JSON-ready run summary (config, adaptation results, divergences)."""
    return {
        "n_chains": trace.n_chains,
        "n_draw": trace.n_draw,
        "n_tune": trace.config.n_tune,
        "seed": trace.config.seed,
        "target_accept": trace.config.target_accept,
        "max_tree_depth": trace.config.max_tree_depth,
        "param_names": list(trace.param_names),
        "step_size": [float(s) for s in trace.step_size],
        "mass_diag": [[float(v) for v in row] for row in trace.mass_diag],
        "mean_accept": [float(a) for a in trace.accept_stat.mean(axis=1)],
        "divergences": [int(d) for d in trace.divergent.sum(axis=1)],
        "mean_tree_depth": [float(d) for d in trace.tree_depth.mean(axis=1)],
    }


def save_trace(trace: Trace, out_dir: Union[str, Path], prefix: str = "trace") -> Path:
    """CSV per chain plus a JSON summary; returns the summary path."""
    out = Path(out_dir)
    trace_to_csv(trace, out, prefix)
    summary_path = out / f"{prefix}_summary.json"
    summary_path.write_text(
        json.dumps(trace_summary(trace), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return summary_path
