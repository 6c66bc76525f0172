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
Selection policies. A policy owns the coins it has opened, decides which coin
to toss next and decides when a coin is good enough to be output.

The supply of coins is infinite. It is represented by a single virtual
candidate, FRESH, which is materialized into a new opened coin at (0, 0) when
it is selected.
"""

import heapq
import math
import typing
from abc import ABC, abstractmethod
from typing import List, Optional, Tuple

import numpy as np

from .model import (CoinState, LOG_LIKELIHOOD_TOLERANCE, Outcome,
                    ProblemParams, discard_boundary, update_on_toss)

LIKELIHOOD_TOSS = "likelihood-toss"
NAIVE = "naive"
ROUND_ROBIN = "round-robin"
UNIFORM_RANDOM = "uniform-random"
STRATEGY_NAMES = (LIKELIHOOD_TOSS, NAIVE, ROUND_ROBIN, UNIFORM_RANDOM)

DEFAULT_POOL_SIZE = 10


class CoinChoice(typing.NamedTuple):
    # None selects a fresh coin.
    index: Optional[int] = None

    @property
    def is_fresh(self) -> bool:
        return self.index is None


FRESH = CoinChoice()


def naive_budget(params: ProblemParams) -> int:
    """Tosses spent on every coin by the naive method."""
    return math.ceil((4 / params.epsilon ** 2) * math.log(1 / params.delta))


class Strategy(ABC):
    """
    State of one selection policy during one episode.

    Use select_next() and record_outcome() alternately until winner is set.
    When constructed with audit=True the policy's bookkeeping is verified
    against a linear scan after every recorded outcome.
    """
    name: str
    # Whether a coin wins by reaching the stopping boundary.
    stops_on_boundary = True
    params: ProblemParams
    opened: List[CoinState]
    audit: bool

    def __init__(self, params: ProblemParams, audit: bool = False):
        self.params = params
        self.opened = []
        self.audit = audit
        self._winner: Optional[int] = None
        self._last_choice: Optional[CoinChoice] = None

    @property
    def winner(self) -> Optional[int]:
        return self._winner

    def total_tosses(self) -> int:
        return sum(state.tosses for state in self.opened)

    def opened_states(self) -> Tuple[CoinState, ...]:
        return tuple(self.opened)

    def select_next(self) -> CoinChoice:
        if self._winner is not None:
            raise RuntimeError(
                f"Coin {self._winner} has already been selected as winner.")
        choice = self._select()
        self._last_choice = choice
        return choice

    def record_outcome(self, choice: CoinChoice, outcome: Outcome) -> int:
        """
        Apply a toss outcome to the chosen coin. Returns the index of the
        tossed coin, which is a new index when a fresh coin was chosen.
        """
        if self._last_choice is None or choice != self._last_choice:
            raise RuntimeError(
                f"Outcome recorded for {choice}, but the last selection was "
                f"{self._last_choice}.")
        self._last_choice = None
        if choice.is_fresh:
            index = len(self.opened)
            self.opened.append(CoinState())
        else:
            index = choice.index  # type: ignore
        state = update_on_toss(self.opened[index], outcome, self.params)
        self.opened[index] = state
        self._update(index, state, choice.is_fresh)
        if self.audit:
            self.check_structure()
        return index

    def _reached_boundary(self, state: CoinState) -> bool:
        return (state.log_likelihood >=
                self.params.boundary_b - LOG_LIKELIHOOD_TOLERANCE)

    @abstractmethod
    def _select(self) -> CoinChoice:
        pass

    @abstractmethod
    def _update(self, index: int, state: CoinState, fresh: bool) -> None:
        pass

    def check_structure(self) -> None:
        for state in self.opened:
            state.check(self.params)
        if (self.stops_on_boundary and self._winner is None and
                any(self._reached_boundary(state) for state in self.opened)):
            raise RuntimeError("A coin reached the boundary, but no winner "
                               "was set.")


class LikelihoodToss(Strategy):
    """
    Toss the coin with the largest log-likelihood. A fresh coin has
    log-likelihood zero, so it is chosen as soon as every opened coin is
    below zero. Ties go to an opened coin, then to the lowest index.

    The opened coins are kept in a binary heap keyed on the negated
    log-likelihood. Only the coin at the top of the heap is ever tossed, so
    selection is a peek and the key update is a single heapreplace:
    O(log n) in the number of opened coins.
    """
    name = LIKELIHOOD_TOSS

    def __init__(self, params: ProblemParams, audit: bool = False):
        super().__init__(params, audit)
        self._heap: List[Tuple[float, int]] = []

    def _select(self) -> CoinChoice:
        if self._heap and -self._heap[0][0] >= -LOG_LIKELIHOOD_TOLERANCE:
            return CoinChoice(self._heap[0][1])
        return FRESH

    def _update(self, index: int, state: CoinState, fresh: bool) -> None:
        key = (-state.log_likelihood, index)
        if fresh:
            heapq.heappush(self._heap, key)
        else:
            if self._heap[0][1] != index:
                raise RuntimeError(
                    f"Coin {index} is not the coin with the largest "
                    f"log-likelihood.")
            heapq.heapreplace(self._heap, key)
        if self._reached_boundary(state):
            self._winner = index

    def check_structure(self) -> None:
        super().check_structure()
        if len(self._heap) != len(self.opened):
            raise RuntimeError(
                f"Heap holds {len(self._heap)} coins, {len(self.opened)} are "
                f"opened.")
        if self.opened:
            scan = max(state.log_likelihood for state in self.opened)
            if -self._heap[0][0] != scan:
                raise RuntimeError(
                    f"Heap maximum {-self._heap[0][0]} differs from the "
                    f"linear scan maximum {scan}.")


class NaiveToss(Strategy):
    """
    Toss a fresh coin a fixed number of times. Output it when its fraction of
    heads is at least p - epsilon / 2, otherwise move on to the next coin.
    """
    name = NAIVE
    stops_on_boundary = False

    def __init__(self, params: ProblemParams, audit: bool = False):
        super().__init__(params, audit)
        self.budget = naive_budget(params)
        self.threshold = params.p - params.epsilon / 2
        self._current: Optional[int] = None

    def _select(self) -> CoinChoice:
        if self._current is None:
            return FRESH
        return CoinChoice(self._current)

    def _update(self, index: int, state: CoinState, fresh: bool) -> None:
        if fresh:
            self._current = index
        if state.tosses < self.budget:
            return
        if state.heads / self.budget >= self.threshold:
            self._winner = index
        else:
            self._current = None

    def check_structure(self) -> None:
        super().check_structure()
        for index, state in enumerate(self.opened):
            if state.tosses > self.budget:
                raise RuntimeError(
                    f"Coin {index} was tossed {state.tosses} times, the "
                    f"budget is {self.budget}.")
            if state.tosses < self.budget and index != self._current:
                raise RuntimeError(
                    f"Coin {index} was abandoned before its budget was "
                    f"spent.")


class RoundRobin(Strategy):
    """
    Cycle through a fixed number of slots, tossing the coin in each slot once
    per round. A coin whose posterior probability of being heavy drops to
    delta or below is retired and its slot is filled with a fresh coin on
    the next visit.
    """
    name = ROUND_ROBIN

    def __init__(self, params: ProblemParams,
                 pool_size: int = DEFAULT_POOL_SIZE,
                 audit: bool = False):
        if pool_size < 1:
            raise ValueError(f"pool_size must be at least 1, got {pool_size}.")
        super().__init__(params, audit)
        self.pool_size = pool_size
        self.retire_at = discard_boundary(params.alpha, params.delta)
        self._slots: List[Optional[int]] = [None] * pool_size
        self._cursor = 0

    def _select(self) -> CoinChoice:
        return CoinChoice(self._slots[self._cursor])

    def _update(self, index: int, state: CoinState, fresh: bool) -> None:
        if fresh:
            self._slots[self._cursor] = index
        if self._reached_boundary(state):
            self._winner = index
        elif state.log_likelihood <= self.retire_at + LOG_LIKELIHOOD_TOLERANCE:
            self._slots[self._cursor] = None
        self._cursor = (self._cursor + 1) % self.pool_size

    def check_structure(self) -> None:
        super().check_structure()
        active = [index for index in self._slots if index is not None]
        if len(set(active)) != len(active):
            raise RuntimeError(f"A coin occupies two slots: {self._slots}.")


class UniformRandom(Strategy):
    """Toss a uniformly chosen candidate among the opened coins and FRESH."""
    name = UNIFORM_RANDOM

    def __init__(self, params: ProblemParams, rng: np.random.Generator,
                 audit: bool = False):
        super().__init__(params, audit)
        self.rng = rng

    def _select(self) -> CoinChoice:
        candidate = int(self.rng.integers(len(self.opened) + 1))
        if candidate == len(self.opened):
            return FRESH
        return CoinChoice(candidate)

    def _update(self, index: int, state: CoinState, fresh: bool) -> None:
        if self._reached_boundary(state):
            self._winner = index


def make_strategy(name: str,
                  params: ProblemParams,
                  rng: Optional[np.random.Generator] = None,
                  pool_size: int = DEFAULT_POOL_SIZE,
                  audit: bool = False) -> Strategy:
    if name == LIKELIHOOD_TOSS:
        return LikelihoodToss(params, audit=audit)
    if name == NAIVE:
        return NaiveToss(params, audit=audit)
    if name == ROUND_ROBIN:
        return RoundRobin(params, pool_size=pool_size, audit=audit)
    if name == UNIFORM_RANDOM:
        if rng is None:
            raise ValueError(f"Strategy {name} requires a random generator.")
        return UniformRandom(params, rng, audit=audit)
    raise ValueError(f"Unknown strategy '{name}', choose one of "
                     f"{', '.join(STRATEGY_NAMES)}.")
