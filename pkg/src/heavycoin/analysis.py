# Copyright (C) 2024 Leiden University Medical Center
# This file is part of heavycoin
#
# heavycoin is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# heavycoin is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with heavycoin.  If not, see <https://www.gnu.org/licenses/

"""
Closed-form bounds for the heavy coin problem and the random walk machinery
behind them.

A coin's log-likelihood performs a random walk with an up step of delta_h
(heads) and a down step of delta_t (tails). The gambler's-ruin style bounds
below are stated for a general two-step walk with absorbing barriers at
-L and W; the coin specific bounds instantiate them.
"""

import dataclasses
import fractions
import logging
import math
from typing import Any, Dict, Optional

import numpy as np

from .model import CoinNature, LOG_LIKELIHOOD_TOLERANCE, ProblemParams
from .report_modules import ReportModule
from .strategy import naive_budget

DEFAULT_RHO_TOLERANCE = 1e-12
DEFAULT_WALK_MAX_STEPS = 1_000_000
MAX_BISECTION_ITERATIONS = 2000

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class WalkSpec:
    """
    A random walk that moves up by up_step with probability up_prob and
    down by down_step otherwise. It is absorbed once it is at or below
    -lower_barrier or at or above upper_barrier.
    """
    up_step: float
    down_step: float
    up_prob: float
    lower_barrier: float
    upper_barrier: float

    def __post_init__(self):
        if not (self.up_step > 0 and self.down_step > 0):
            raise ValueError(
                f"Step sizes must be positive, got up_step={self.up_step}, "
                f"down_step={self.down_step}.")
        if not 0 < self.up_prob < 1:
            raise ValueError(
                f"up_prob must be in (0, 1), got {self.up_prob}.")
        if not self.lower_barrier >= 0:
            raise ValueError(f"lower_barrier must be non-negative, got "
                             f"{self.lower_barrier}.")
        if not self.upper_barrier > 0:
            raise ValueError(f"upper_barrier must be positive, got "
                             f"{self.upper_barrier}.")

    @property
    def drift(self) -> float:
        return (self.up_prob * self.up_step -
                (1 - self.up_prob) * self.down_step)

    @property
    def lower_star(self) -> float:
        return self.lower_barrier + self.down_step

    @property
    def upper_star(self) -> float:
        return self.upper_barrier + self.up_step


@dataclasses.dataclass
class AbsorptionBounds(ReportModule):
    pi_lower: float
    d_over_pi_upper: float
    c_upper: float


def phi(rho: float, walk: WalkSpec) -> float:
    """E[rho ** step] for a single step of the walk."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}.")
    return (walk.up_prob * rho ** walk.up_step +
            (1 - walk.up_prob) * rho ** -walk.down_step)


def rho_min(walk: WalkSpec) -> float:
    """The minimiser of phi."""
    ratio = (walk.down_step * (1 - walk.up_prob) /
             (walk.up_step * walk.up_prob))
    return ratio ** (1 / (walk.up_step + walk.down_step))


def solve_rho0(walk: WalkSpec, tol: float = DEFAULT_RHO_TOLERANCE) -> float:
    """
    Find the root rho0 != 1 of phi(rho) = 1.

    phi is convex with phi(1) = 1, so the second root lies on the other side
    of the minimiser rho_min: below it for a positive drift, above it for a
    negative drift. The outer end of the bracket is found by geometric
    expansion, after which the root is bisected.
    """
    drift = walk.drift
    if drift == 0:
        raise ValueError("The walk has zero drift, phi(rho) = 1 has no "
                         "root other than 1.")
    inner = rho_min(walk)
    outer = inner
    factor = 0.5 if drift > 0 else 2.0
    while phi(outer, walk) <= 1:
        outer *= factor
    lo, hi = min(inner, outer), max(inner, outer)
    # phi - 1 changes sign exactly once on [lo, hi].
    lo_above = phi(lo, walk) > 1
    mid = (lo + hi) / 2
    for _ in range(MAX_BISECTION_ITERATIONS):
        mid = (lo + hi) / 2
        value = phi(mid, walk) - 1
        if abs(value) <= tol and hi - lo <= tol:
            break
        if (value > 0) == lo_above:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2 * math.ulp(mid):
            break
    return mid


def absorption_prob_lower_bound(walk: WalkSpec, rho0: float) -> float:
    """Lower bound on the probability of absorption at the upper barrier."""
    numerator = 1 - rho0 ** walk.lower_barrier
    denominator = 1 - rho0 ** (walk.lower_barrier + walk.upper_star)
    if numerator == 0:
        return 0.0
    return min(1.0, max(0.0, numerator / denominator))


def expected_steps_bound(walk: WalkSpec,
                         rho0: Optional[float] = None) -> float:
    """Upper bound on the expected number of steps until absorption."""
    drift = walk.drift
    if drift == 0:
        raise ValueError("The walk has zero drift.")
    if drift < 0:
        return walk.lower_star / -drift
    if rho0 is None:
        raise ValueError("rho0 is required for a walk with positive drift.")
    return ((walk.lower_barrier + walk.upper_star) / drift *
            (1 - rho0 ** walk.lower_star) /
            (1 - rho0 ** (walk.lower_star + walk.upper_barrier)))


def exact_absorption_probability(walk: WalkSpec) -> fractions.Fraction:
    """
    Probability that a walk with unit steps and integer barriers reaches the
    upper barrier before the lower one, computed with exact fractions. The
    up probability is converted to the closest fraction with a denominator
    of at most one million.
    """
    if walk.up_step != 1 or walk.down_step != 1:
        raise ValueError("Exact absorption needs unit steps.")
    lower = walk.lower_barrier
    upper = walk.upper_barrier
    if lower != int(lower) or upper != int(upper):
        raise ValueError("Exact absorption needs integer barriers.")
    lower, upper = int(lower), int(upper)
    up = fractions.Fraction(walk.up_prob).limit_denominator(1_000_000)
    ratio = (1 - up) / up
    if ratio == 1:
        return fractions.Fraction(lower, lower + upper)
    return (1 - ratio ** lower) / (1 - ratio ** (lower + upper))


def _heads_gap(params: ProblemParams) -> float:
    return (params.delta_h * (params.p + params.epsilon) -
            params.delta_t * (params.q - params.epsilon))


def _tails_gap(params: ProblemParams) -> float:
    return (params.delta_t * (params.q + params.epsilon) -
            params.delta_h * (params.p - params.epsilon))


def lemma5_applicable(params: ProblemParams) -> bool:
    return params.boundary_b >= 2 * max(params.delta_h, params.delta_t)


def lemma5_bounds(params: ProblemParams) -> AbsorptionBounds:
    """
    Bounds on the absorption probability pi of a heavy coin's walk, on the
    expected length C of a light coin's walk and on D / pi where D is the
    expected length of a heavy coin's walk. The walks are absorbed at B and
    below zero.
    """
    if not lemma5_applicable(params):
        raise ValueError(
            f"Absorption bounds need B >= 2 * max(delta_h, delta_t) "
            f"= {2 * max(params.delta_h, params.delta_t)}, got "
            f"B = {params.boundary_b}.")
    dsum = params.delta_h + params.delta_t
    heads_gap = _heads_gap(params)
    return AbsorptionBounds(
        pi_lower=heads_gap / (2 * dsum),
        d_over_pi_upper=(8 * params.boundary_b / heads_gap *
                         dsum / (params.delta_h *
                                 (params.p + params.epsilon))),
        c_upper=2 * dsum / _tails_gap(params),
    )


def theorem2_bound(params: ProblemParams) -> float:
    """Upper bound on the expected number of tosses of likelihood-toss."""
    return (16 / params.epsilon ** 2 *
            ((1 - params.alpha) / params.alpha + params.boundary_b))


def composite_bound(params: ProblemParams) -> float:
    """
    The sharper intermediate bound from which theorem2_bound follows, built
    from the absorption bounds before simplification.
    """
    dsum = params.delta_h + params.delta_t
    alpha = params.alpha
    return (4 * dsum / _heads_gap(params) *
            ((1 - alpha) / alpha * dsum / _tails_gap(params) +
             2 * params.boundary_b / (params.delta_h *
                                      (params.p + params.epsilon))))


def renewal_bound(c: float, d: float, pi: float, alpha: float) -> float:
    """
    Expected tosses when every light coin costs c tosses on average, every
    heavy coin d and a heavy coin is accepted with probability pi.
    """
    if not pi > 0:
        raise ValueError(f"pi must be positive, got {pi}.")
    return (1 - alpha) / alpha * c / pi + d / pi


def naive_bound(params: ProblemParams) -> float:
    """Expected tosses of testing fresh coins one by one."""
    return (1 / params.alpha * 4 / params.epsilon ** 2 *
            math.log(1 / params.delta))


@dataclasses.dataclass
class CalculusCheck(ReportModule):
    p: float
    epsilon: float
    ratio_heads: float
    ratio_tails: float
    two_over_epsilon: float
    delta_h: float
    delta_h_floor: float
    stated_floor: float
    holds: bool
    stated_floor_holds: bool

    def __bool__(self):
        return self.holds


def calculus_inequalities_check(p: float, epsilon: float) -> CalculusCheck:
    """
    Check the two inequalities that turn composite_bound into
    theorem2_bound: both step-size ratios are at most 2 / epsilon, and
    delta_h >= 2 * epsilon / p.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must be in (0, 0.5), got {epsilon}.")
    if not epsilon < p < 1 - epsilon:
        raise ValueError(
            f"p must be in ({epsilon}, {1 - epsilon}), got {p}.")
    q = 1 - p
    delta_h = math.log((p + epsilon) / (p - epsilon))
    delta_t = math.log((q + epsilon) / (q - epsilon))
    dsum = delta_h + delta_t
    ratio_heads = dsum / (delta_h * (p + epsilon) - delta_t * (q - epsilon))
    ratio_tails = dsum / (delta_t * (q + epsilon) - delta_h * (p - epsilon))
    two_over_epsilon = 2 / epsilon
    delta_h_floor = 2 * epsilon / p
    stated_floor = epsilon / (p - epsilon)
    # The ratios are compared with a relative slack for rounding.
    slack = 1 + 1e-12
    holds = (max(ratio_heads, ratio_tails) <= two_over_epsilon * slack and
             delta_h * slack >= delta_h_floor)
    return CalculusCheck(
        p=p,
        epsilon=epsilon,
        ratio_heads=ratio_heads,
        ratio_tails=ratio_tails,
        two_over_epsilon=two_over_epsilon,
        delta_h=delta_h,
        delta_h_floor=delta_h_floor,
        stated_floor=stated_floor,
        holds=holds,
        stated_floor_holds=delta_h * slack >= stated_floor,
    )


def coin_walk(params: ProblemParams, nature: CoinNature) -> WalkSpec:
    """
    The log-likelihood walk of a coin of the given nature, absorbed at zero
    and at B.
    """
    if not params.boundary_b > 0:
        raise ValueError("The coin walk needs a positive boundary B.")
    return WalkSpec(params.delta_h, params.delta_t,
                    nature.heads_probability(params),
                    lower_barrier=0.0, upper_barrier=params.boundary_b)


def heavy_walk(params: ProblemParams) -> WalkSpec:
    return coin_walk(params, CoinNature.HEAVY)


def light_walk(params: ProblemParams) -> WalkSpec:
    return coin_walk(params, CoinNature.LIGHT)


def modified_walk(params: ProblemParams, nature: CoinNature) -> WalkSpec:
    """
    The coin walk conditioned on a first heads, shifted so it starts at zero.
    """
    if not params.boundary_b > params.delta_h:
        raise ValueError(
            f"The modified walk needs B > delta_h ({params.delta_h}), got "
            f"{params.boundary_b}.")
    return WalkSpec(params.delta_h, params.delta_t,
                    nature.heads_probability(params),
                    lower_barrier=params.delta_h,
                    upper_barrier=params.boundary_b - params.delta_h)


def _mean_and_stderr(values: np.ndarray):
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values.mean()), 0.0
    return (float(values.mean()),
            float(values.std(ddof=1) / math.sqrt(values.size)))


@dataclasses.dataclass
class WalkStatistics(ReportModule):
    runs: int
    absorbed_high_fraction: float
    absorbed_high_stderr: float
    mean_steps: float
    steps_stderr: float
    unfinished: int


def simulate_walk(walk: WalkSpec, runs: int, rng: np.random.Generator,
                  max_steps: int = DEFAULT_WALK_MAX_STEPS) -> WalkStatistics:
    """
    Simulate runs independent copies of the walk from zero. Runs that are
    not absorbed after max_steps are counted as unfinished and left out of
    the statistics.
    """
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}.")
    ups = np.zeros(runs, dtype=np.int64)
    downs = np.zeros(runs, dtype=np.int64)
    active = np.arange(runs)
    high = np.zeros(runs, dtype=bool)
    finished = np.zeros(runs, dtype=bool)
    for _ in range(max_steps):
        if active.size == 0:
            break
        heads = rng.random(active.size) < walk.up_prob
        ups[active] += heads
        downs[active] += ~heads
        position = (ups[active] * walk.up_step -
                    downs[active] * walk.down_step)
        at_high = position >= walk.upper_barrier - LOG_LIKELIHOOD_TOLERANCE
        at_low = position <= -walk.lower_barrier + LOG_LIKELIHOOD_TOLERANCE
        done = at_high | at_low
        high[active[at_high]] = True
        finished[active[done]] = True
        active = active[~done]
    steps = (ups + downs)[finished]
    absorbed_high = high[finished].astype(np.float64)
    fraction, fraction_stderr = _mean_and_stderr(absorbed_high)
    mean_steps, steps_stderr = _mean_and_stderr(steps.astype(np.float64))
    return WalkStatistics(
        runs=runs,
        absorbed_high_fraction=fraction,
        absorbed_high_stderr=fraction_stderr,
        mean_steps=mean_steps,
        steps_stderr=steps_stderr,
        unfinished=int(runs - finished.sum()),
    )


@dataclasses.dataclass
class CoinWalkStatistics(ReportModule):
    nature: str
    modified: bool
    runs: int
    absorbed_at_b_fraction: float
    absorbed_at_b_stderr: float
    mean_steps: float
    steps_stderr: float
    # Mean steps of the walks absorbed below zero and at B respectively.
    mean_steps_absorbed_low: float
    mean_steps_absorbed_high: float
    unfinished: int


def simulate_coin_walks(params: ProblemParams, nature: CoinNature, runs: int,
                        rng: np.random.Generator, modified: bool = False,
                        max_steps: int = DEFAULT_WALK_MAX_STEPS
                        ) -> CoinWalkStatistics:
    """
    Simulate the log-likelihood of a coin of the given nature until it
    reaches B or drops below zero. A modified walk starts with one heads
    already tossed; that toss is not counted as a step.
    """
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}.")
    heads_probability = nature.heads_probability(params)
    boundary = params.boundary_b - LOG_LIKELIHOOD_TOLERANCE
    start = 1 if modified else 0
    heads = np.full(runs, start, dtype=np.int64)
    tails = np.zeros(runs, dtype=np.int64)
    high = np.zeros(runs, dtype=bool)
    finished = np.zeros(runs, dtype=bool)
    if start * params.delta_h >= boundary:
        high[:] = True
        finished[:] = True
    active = np.flatnonzero(~finished)
    for _ in range(max_steps):
        if active.size == 0:
            break
        outcome = rng.random(active.size) < heads_probability
        heads[active] += outcome
        tails[active] += ~outcome
        x = heads[active] * params.delta_h - tails[active] * params.delta_t
        at_high = x >= boundary
        done = at_high | (x < -LOG_LIKELIHOOD_TOLERANCE)
        high[active[at_high]] = True
        finished[active[done]] = True
        active = active[~done]
    steps = (heads + tails - start).astype(np.float64)
    fraction, fraction_stderr = _mean_and_stderr(
        high[finished].astype(np.float64))
    mean_steps, steps_stderr = _mean_and_stderr(steps[finished])
    return CoinWalkStatistics(
        nature=nature.value,
        modified=modified,
        runs=runs,
        absorbed_at_b_fraction=fraction,
        absorbed_at_b_stderr=fraction_stderr,
        mean_steps=mean_steps,
        steps_stderr=steps_stderr,
        mean_steps_absorbed_low=_mean_and_stderr(
            steps[finished & ~high])[0],
        mean_steps_absorbed_high=_mean_and_stderr(
            steps[finished & high])[0],
        unfinished=int(runs - finished.sum()),
    )


@dataclasses.dataclass
class BoundsReport(ReportModule):
    delta_h: float
    delta_t: float
    boundary_b: float
    heavy_walk_rho0: Optional[float]
    heavy_walk_rho_min: Optional[float]
    theorem2_bound: float
    composite_bound: float
    naive_bound: float
    naive_budget: int
    lemma5_applicable: bool
    lemma5: Optional[Dict[str, Any]]
    calculus_check: Dict[str, Any]


def bounds_report(params: ProblemParams) -> BoundsReport:
    if params.boundary_b > 0:
        walk = heavy_walk(params)
        rho0: Optional[float] = solve_rho0(walk)
        walk_rho_min: Optional[float] = rho_min(walk)
    else:
        rho0 = None
        walk_rho_min = None
    applicable = lemma5_applicable(params)
    if not applicable:
        logger.info("B = %r is below 2 * max(delta_h, delta_t), the "
                    "absorption bounds are not reported.", params.boundary_b)
    return BoundsReport(
        delta_h=params.delta_h,
        delta_t=params.delta_t,
        boundary_b=params.boundary_b,
        heavy_walk_rho0=rho0,
        heavy_walk_rho_min=walk_rho_min,
        theorem2_bound=theorem2_bound(params),
        composite_bound=composite_bound(params),
        naive_bound=naive_bound(params),
        naive_budget=naive_budget(params),
        lemma5_applicable=applicable,
        lemma5=lemma5_bounds(params).to_dict() if applicable else None,
        calculus_check=calculus_inequalities_check(
            params.p, params.epsilon).to_dict(),
    )
