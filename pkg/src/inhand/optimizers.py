"""Derivative-free ensemble update rules and the shared exploration step.

Three update rules shape a selection distribution (or mapping) over the K
simulation lanes from their window-average costs:

  * weighted resampling ("wrs"): softmax over min-shifted costs at a fixed
    temperature, then multinomial resampling with replacement;
  * entropy-constrained resampling ("reps"): costs are turned into rewards,
    the softmax temperature is chosen by minimizing a convex dual under a
    KL budget, then multinomial resampling;
  * truncation selection ("pbo"): the k_best cheapest lanes survive, the
    rest are replaced by uniform-with-replacement copies of the survivors.

Two baselines: "olp" runs a single lane with no updates; "eye" keeps K static
lanes and never resamples or perturbs.

After resampling, every lane's parameters are jittered and a one-step random
wrench is queued on its object (pose jitter via forces keeps the perturbed
state contact-consistent instead of teleporting into penetration).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "ExplorationConfig",
    "WrsConfig",
    "RepsConfig",
    "PboConfig",
    "UpdatePlan",
    "wrs_pmf",
    "costs_to_rewards",
    "reps_dual",
    "reps_dual_solve",
    "reps_pmf",
    "pmf_entropy",
    "kl_from_uniform",
    "pbo_select",
    "multinomial_sources",
    "resample_and_perturb",
    "make_optimizer",
    "OPTIMIZER_NAMES",
]

OPTIMIZER_NAMES = ("wrs", "reps", "pbo", "olp", "eye")


@dataclass(frozen=True)
class ExplorationConfig:
    """Per-update exploration spread.

    ``sigma_params`` holds one std dev per simulation parameter (same layout
    as the parameter vector); ``sigma_force`` / ``sigma_torque`` are the std
    devs of the perturbation wrench components queued on the object.
    """

    sigma_params: np.ndarray = field(default_factory=lambda: np.zeros(7))
    sigma_force: float = 0.0
    sigma_torque: float = 0.0

    def __post_init__(self):
        sp = np.asarray(self.sigma_params, dtype=np.float64)
        if np.any(sp < 0.0) or self.sigma_force < 0.0 or self.sigma_torque < 0.0:
            raise ValueError("exploration std devs must be nonnegative")
        object.__setattr__(self, "sigma_params", sp)

    def scaled(self, factor: float) -> "ExplorationConfig":
        return ExplorationConfig(self.sigma_params * factor,
                                 self.sigma_force * factor,
                                 self.sigma_torque * factor)


@dataclass(frozen=True)
class WrsConfig:
    # calibrated against typical weighted window costs (spread of a few
    # units across lanes): 2.0 concentrates on the best handful, which keeps
    # the published argmin steady right after window resets; flatter settings
    # let drifted lanes linger and resurface as estimate spikes
    temperature: float = 2.0

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class RepsConfig:
    epsilon: float = 0.5
    eta_bounds: tuple[float, float] = (1e-3, 1e3)
    eta_tol: float = 1e-6

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        lo, hi = self.eta_bounds
        if not (0.0 < lo < hi):
            raise ValueError("eta bounds must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class PboConfig:
    # keep half the population by default; harder truncation starves the
    # ensemble of lateral pose diversity it cannot cheaply regain
    k_best: int = 20


def _check_costs(costs: np.ndarray) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 1 or costs.size == 0:
        raise ValueError("costs must be a nonempty 1-D array")
    if np.any(np.isnan(costs)) or np.any(costs == -np.inf):
        raise ValueError("costs must not contain NaN or -inf")
    return costs


def wrs_pmf(costs, temperature: float) -> np.ndarray:
    """Softmax selection probabilities over min-shifted costs.

    +inf costs (divergent lanes) get probability exactly zero.
    """
    costs = _check_costs(costs)
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    finite = np.isfinite(costs)
    if not np.any(finite):
        raise ValueError("all costs are infinite")
    shifted = costs - np.min(costs[finite])
    weights = np.where(finite, np.exp(-temperature * np.where(finite, shifted, 0.0)), 0.0)
    return weights / np.sum(weights)


def costs_to_rewards(costs) -> np.ndarray:
    """Reward transform R_i = max_j C_j + min_j C_j - C_i over finite costs.

    Divergent (+inf cost) lanes map to -inf reward so they carry zero weight.
    """
    costs = _check_costs(costs)
    finite = np.isfinite(costs)
    if not np.any(finite):
        raise ValueError("all costs are infinite")
    hi = float(np.max(costs[finite]))
    lo = float(np.min(costs[finite]))
    return np.where(finite, hi + lo - costs, -np.inf)


def reps_dual(rewards, eta: float, epsilon: float) -> float:
    """Dual objective g(eta) = eta*eps + eta*log mean(exp(R/eta)), max-shifted."""
    rewards = np.asarray(rewards, dtype=np.float64)
    hi = float(np.max(rewards[np.isfinite(rewards)]))
    scaled = (rewards - hi) / eta  # <= 0, exp never overflows
    mean_exp = float(np.mean(np.exp(scaled)))
    return eta * epsilon + hi + eta * math.log(mean_exp)


def reps_dual_solve(rewards, epsilon: float,
                    eta_bounds: tuple[float, float] = (1e-3, 1e3),
                    tol: float = 1e-6) -> float:
    """Temperature minimizing the dual over a bounded positive interval.

    The dual is convex in eta, so the minimizer is located by bisection on
    the sign of the derivative and refined by a golden-section pass. With
    all-equal rewards any temperature gives the uniform distribution; the
    upper bound is returned for that degenerate case.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    finite = rewards[np.isfinite(rewards)]
    if finite.size == 0:
        raise ValueError("no finite rewards")
    lo, hi = eta_bounds
    if not (0.0 < lo < hi):
        raise ValueError("eta bounds must satisfy 0 < lo < hi")
    if float(np.max(finite) - np.min(finite)) < 1e-15:
        return hi

    def dg(eta: float) -> float:
        h = max(1e-9, 1e-7 * eta)
        return (reps_dual(rewards, eta + h, epsilon) - reps_dual(rewards, eta - h, epsilon)) / (2.0 * h)

    a, b = lo, hi
    if dg(a) >= 0.0:  # increasing from the left edge: minimum at lo
        b = min(b, a * 4.0)
    elif dg(b) <= 0.0:  # still decreasing at the right edge: minimum at hi
        return hi
    else:
        while b - a > max(64.0 * tol, 1e-12 * b):
            mid = 0.5 * (a + b)
            if dg(mid) > 0.0:
                b = mid
            else:
                a = mid

    # golden-section refinement inside the bracket
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = reps_dual(rewards, c, epsilon), reps_dual(rewards, d, epsilon)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = reps_dual(rewards, c, epsilon)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = reps_dual(rewards, d, epsilon)
    return 0.5 * (a + b)


def reps_pmf(rewards, eta_star: float) -> np.ndarray:
    """Softmax of rewards/eta_star; -inf rewards get probability zero."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if eta_star <= 0.0:
        raise ValueError("eta_star must be positive")
    finite = np.isfinite(rewards)
    if not np.any(finite):
        raise ValueError("no finite rewards")
    hi = float(np.max(rewards[finite]))
    weights = np.where(finite, np.exp(np.where(finite, (rewards - hi) / eta_star, 0.0)), 0.0)
    return weights / np.sum(weights)


def pmf_entropy(pmf) -> float:
    pmf = np.asarray(pmf, dtype=np.float64)
    nz = pmf[pmf > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def kl_from_uniform(pmf) -> float:
    """KL(pmf || uniform) over the sample set, a per-update diagnostic."""
    pmf = np.asarray(pmf, dtype=np.float64)
    k = pmf.size
    nz = pmf[pmf > 0.0]
    return float(np.sum(nz * np.log(nz * k)))


def pbo_select(costs, k_best: int, rng: np.random.Generator) -> np.ndarray:
    """Source index per lane under truncation selection.

    The k_best cheapest lanes (ties broken by lane index) map to themselves;
    every other lane draws its source uniformly with replacement from the
    survivors.
    """
    costs = _check_costs(costs)
    k = costs.size
    if not (1 <= k_best <= k):
        raise ValueError(f"k_best must be in [1, {k}]")
    order = np.argsort(costs, kind="stable")
    survivors = np.sort(order[:k_best])
    sources = np.empty(k, dtype=np.int64)
    survivor_set = set(int(i) for i in survivors)
    for i in range(k):
        if i in survivor_set:
            sources[i] = i
        else:
            sources[i] = survivors[rng.integers(0, k_best)]
    return sources


def multinomial_sources(pmf, rng: np.random.Generator) -> np.ndarray:
    """K independent draws with replacement from the selection distribution."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if abs(float(np.sum(pmf)) - 1.0) > 1e-9 or np.any(pmf < 0.0):
        raise ValueError("pmf must be nonnegative and sum to 1")
    return rng.choice(pmf.size, size=pmf.size, p=pmf / np.sum(pmf))


@dataclass(frozen=True)
class UpdatePlan:
    """One optimizer update: where each lane copies from, who gets perturbed,
    and diagnostics for the metrics log."""

    sources: np.ndarray | None  # None => identity, no resampling at all
    perturb: bool = True
    pmf: np.ndarray | None = None
    eta_star: float | None = None

    @property
    def is_noop(self) -> bool:
        return self.sources is None


class OptimizerRule(Protocol):
    name: str

    def plan(self, costs: np.ndarray, rng: np.random.Generator) -> UpdatePlan: ...


@dataclass(frozen=True)
class WeightedResampling:
    config: WrsConfig
    name: str = "wrs"

    def plan(self, costs, rng) -> UpdatePlan:
        pmf = wrs_pmf(costs, self.config.temperature)
        return UpdatePlan(sources=multinomial_sources(pmf, rng), pmf=pmf)


@dataclass(frozen=True)
class EntropyConstrainedResampling:
    config: RepsConfig
    name: str = "reps"

    def plan(self, costs, rng) -> UpdatePlan:
        rewards = costs_to_rewards(costs)
        eta = reps_dual_solve(rewards, self.config.epsilon,
                              self.config.eta_bounds, self.config.eta_tol)
        pmf = reps_pmf(rewards, eta)
        return UpdatePlan(sources=multinomial_sources(pmf, rng), pmf=pmf, eta_star=eta)


@dataclass(frozen=True)
class TruncationSelection:
    config: PboConfig
    name: str = "pbo"

    def plan(self, costs, rng) -> UpdatePlan:
        # copies are perturbed along with the survivors, otherwise the
        # replaced lanes would be exact duplicates with identical futures
        return UpdatePlan(sources=pbo_select(costs, self.config.k_best, rng))


@dataclass(frozen=True)
class OpenLoopBaseline:
    """Single-lane open-loop playback; never updates."""

    name: str = "olp"

    def plan(self, costs, rng) -> UpdatePlan:
        return UpdatePlan(sources=None, perturb=False)


@dataclass(frozen=True)
class StaticEnsembleBaseline:
    """Static lane set with argmin selection; never resamples or perturbs."""

    name: str = "eye"

    def plan(self, costs, rng) -> UpdatePlan:
        return UpdatePlan(sources=None, perturb=False)


def make_optimizer(name: str, *, wrs: WrsConfig | None = None,
                   reps: RepsConfig | None = None,
                   pbo: PboConfig | None = None) -> OptimizerRule:
    name = name.lower()
    if name == "wrs":
        return WeightedResampling(wrs or WrsConfig())
    if name == "reps":
        return EntropyConstrainedResampling(reps or RepsConfig())
    if name == "pbo":
        return TruncationSelection(pbo or PboConfig())
    if name == "olp":
        return OpenLoopBaseline()
    if name == "eye":
        return StaticEnsembleBaseline()
    raise ValueError(f"unknown optimizer {name!r}; expected one of {OPTIMIZER_NAMES}")


def resample_and_perturb(ensemble, plan: UpdatePlan, explore: ExplorationConfig,
                         rng: np.random.Generator) -> None:
    """Apply one update plan to an ensemble.

    ``ensemble`` must expose: ``size``, ``snapshot_lane(i)``/``restore_lane``
    (state copies are staged so overlapping source/destination pairs cannot
    alias), ``get_params(i)``/``set_params(i, theta)`` with clamping to
    declared bounds, ``queue_wrench(i, force, torque)``, and ``reset_cost(i)``.

    Every resampled lane copies (state, params) from its source, then params
    are jittered and a one-step perturbation wrench is queued. Cost windows
    are reset because a lane's history no longer describes its new state.
    """
    if plan.is_noop:
        return
    sources = np.asarray(plan.sources, dtype=np.int64)
    k = ensemble.size
    if sources.shape != (k,):
        raise ValueError("plan source count does not match ensemble size")

    src_params = [np.array(ensemble.get_params(int(s)), copy=True) for s in sources]
    src_states = [ensemble.snapshot_lane(int(s)) for s in sources]
    for i in range(k):
        ensemble.restore_lane(i, src_states[i])

    for i in range(k):
        theta = src_params[i]
        if plan.perturb:
            theta = theta + rng.normal(0.0, 1.0, size=theta.shape) * explore.sigma_params
        ensemble.set_params(i, theta)
        if plan.perturb and (explore.sigma_force > 0.0 or explore.sigma_torque > 0.0):
            force = rng.normal(0.0, 1.0, size=2) * explore.sigma_force
            torque = rng.normal(0.0, 1.0) * explore.sigma_torque
            ensemble.queue_wrench(i, force, torque)
        ensemble.reset_cost(i)
