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
The Bayesian coin model: problem parameters, the likelihood update and the
formulas that turn a coin's history into a posterior probability.

Every coin is Heavy (heads probability p + epsilon) with probability alpha
and Light (heads probability p - epsilon) otherwise. A coin's history
(h heads, t tails) is summarised by its log-likelihood ratio
X = h * delta_h - t * delta_t.
"""

import dataclasses
import enum
import math
import typing

# Slack for every comparison of a log-likelihood against a boundary. It is
# far below any step size that valid parameters can produce.
LOG_LIKELIHOOD_TOLERANCE = 1e-9


class Outcome(enum.Enum):
    HEADS = "heads"
    TAILS = "tails"


class CoinNature(enum.Enum):
    HEAVY = "heavy"
    LIGHT = "light"

    def heads_probability(self, params: "ProblemParams") -> float:
        if self is CoinNature.HEAVY:
            return params.p + params.epsilon
        return params.p - params.epsilon


def stopping_boundary(alpha: float, delta: float) -> float:
    """
    The log-likelihood B at which the posterior probability of a coin being
    heavy reaches 1 - delta.
    """
    return math.log((1 - alpha) * (1 - delta) / (alpha * delta))


def discard_boundary(alpha: float, delta: float) -> float:
    """
    The log-likelihood at or below which the posterior probability of a coin
    being heavy is at most delta.
    """
    return math.log(delta * (1 - alpha) / (alpha * (1 - delta)))


def posterior_heavy(x: float, alpha: float) -> float:
    """
    P(heavy | history) = alpha * L / (alpha * L + (1 - alpha)) with L = e^x.

    Evaluated as a logistic function of x + log(alpha / (1 - alpha)) so that
    large positive or negative log-likelihoods do not overflow.
    """
    z = x + math.log(alpha) - math.log1p(-alpha)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclasses.dataclass(frozen=True)
class ProblemParams:
    p: float
    epsilon: float
    alpha: float
    delta: float
    delta_h: float = dataclasses.field(init=False)
    delta_t: float = dataclasses.field(init=False)
    boundary_b: float = dataclasses.field(init=False)

    def __post_init__(self):
        p, epsilon, alpha, delta = self.p, self.epsilon, self.alpha, self.delta
        for name, value in (("p", p), ("epsilon", epsilon),
                            ("alpha", alpha), ("delta", delta)):
            if not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value}.")
        if not 0 < epsilon < 0.5:
            raise ValueError(f"epsilon must be in (0, 0.5), got {epsilon}.")
        if not p > epsilon:
            raise ValueError(
                f"p must exceed epsilon ({epsilon}), got {p}.")
        if not p < 1 - epsilon:
            raise ValueError(
                f"p must be below 1 - epsilon ({1 - epsilon}), got {p}.")
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}.")
        if not 0 < delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {delta}.")
        if alpha > 1 - delta:
            raise ValueError(
                f"alpha must not exceed 1 - delta ({1 - delta}), got "
                f"{alpha}. The prior alone already meets the confidence "
                f"target.")
        q = 1 - p
        object.__setattr__(self, "delta_h",
                           math.log((p + epsilon) / (p - epsilon)))
        object.__setattr__(self, "delta_t",
                           math.log((q + epsilon) / (q - epsilon)))
        object.__setattr__(self, "boundary_b", stopping_boundary(alpha, delta))

    @property
    def q(self) -> float:
        return 1 - self.p

    def to_dict(self):
        return dataclasses.asdict(self)


class CoinState(typing.NamedTuple):
    heads: int = 0
    tails: int = 0
    log_likelihood: float = 0.0

    @property
    def tosses(self) -> int:
        return self.heads + self.tails

    def check(self, params: ProblemParams) -> None:
        expected = log_likelihood_from_counts(self.heads, self.tails, params)
        if abs(expected - self.log_likelihood) > LOG_LIKELIHOOD_TOLERANCE:
            raise ValueError(
                f"Log-likelihood {self.log_likelihood} drifted from "
                f"{expected} for {self.heads} heads and {self.tails} tails.")


def log_likelihood_from_counts(heads: int, tails: int,
                               params: ProblemParams) -> float:
    return heads * params.delta_h - tails * params.delta_t


def update_on_toss(state: CoinState, outcome: Outcome,
                   params: ProblemParams) -> CoinState:
    if outcome is Outcome.HEADS:
        return CoinState(state.heads + 1, state.tails,
                         state.log_likelihood + params.delta_h)
    return CoinState(state.heads, state.tails + 1,
                     state.log_likelihood - params.delta_t)


def heads_prob_given_state(x: float, params: ProblemParams) -> float:
    """
    Probability of heads for a coin with log-likelihood x, mixing the heavy
    and light heads probabilities by the posterior.
    """
    heavy = posterior_heavy(x, params.alpha)
    return (params.p + params.epsilon) * heavy + \
        (params.p - params.epsilon) * (1 - heavy)
