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
Grades of the single coin log-likelihood system.

The quit game on a coin with log-likelihood x lets the player either pay a
quit cost g or toss the coin for a cost of one. Heads moves the coin to
min(x + delta_h, B), where B ends the game at no further cost, and tails
moves it to x - delta_t. The grade of x is the smallest g for which tossing
first is optimal. The state space is truncated below at -depth, where the
player is forced to quit. For unequal step sizes the states are enumerated
up to a horizon of max_steps tosses and moves past the horizon land on the
closest enumerated state above.

The joint Bellman oracle solves the two coin game without quitting and
checks that tossing the coin with the largest log-likelihood is optimal.
"""

import collections
import dataclasses
import functools
import logging
import math
import typing
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .analysis import theorem2_bound
from .model import (LOG_LIKELIHOOD_TOLERANCE, ProblemParams,
                    heads_prob_given_state)
from .report_modules import ReportModule

DEFAULT_DEPTH = 10.0
DEFAULT_GRADE_TOLERANCE = 1e-6
DEFAULT_ORACLE_DEPTH = 4.0
DEFAULT_ORACLE_TOLERANCE = 1e-8
DEFAULT_MAX_STEPS = 40
MAX_VALUE_ITERATIONS = 1_000_000
MAX_BRACKET_DOUBLINGS = 64
MAX_JOINT_STATES = 100_000
# Log-likelihoods closer than this are the same lattice state.
MERGE_TOLERANCE = 1e-12
# Value changes below this many rounding units of the quit cost are noise.
ROUNDING_UNITS = 8

TWO_SLOT_REDUCTION = (
    "Two opened coins are tracked. A fresh coin replaces the coin with the "
    "lower log-likelihood (the second coin on ties) and is tossed at once. "
    "Coins below the lattice are dead and cannot be tossed.")

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterations: int, change: float):
        super().__init__(message)
        self.iterations = iterations
        self.change = change


class LatticeTooLargeError(ValueError):
    pass


class LatticeState(typing.NamedTuple):
    heads: int
    tails: int
    x: float
    target: bool = False


@dataclasses.dataclass
class Lattice:
    """
    The interior states ordered by log-likelihood, with successor indices.
    Index ``size`` is the target and index ``size + 1`` the cutoff below
    -depth.
    """
    x: np.ndarray
    heads: np.ndarray
    tails: np.ndarray
    up: np.ndarray
    down: np.ndarray
    heads_prob: np.ndarray
    start: int
    boundary_b: float

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def target(self) -> int:
        return self.size

    @property
    def cutoff(self) -> int:
        return self.size + 1

    def state(self, index: int) -> LatticeState:
        if index == self.target:
            return LatticeState(0, 0, self.boundary_b, target=True)
        if not 0 <= index < self.size:
            raise IndexError(f"No lattice state with index {index}.")
        return LatticeState(int(self.heads[index]), int(self.tails[index]),
                            float(self.x[index]))

    @functools.cached_property
    def absorption_times(self) -> np.ndarray:
        """
        Expected number of tosses until the target or the cutoff is reached
        when every state tosses. No quit game policy plays longer.
        """
        n = self.size
        transitions = np.zeros((n, n))
        rows = np.arange(n)
        for successors, prob in ((self.up, self.heads_prob),
                                 (self.down, 1 - self.heads_prob)):
            inside = successors < n
            np.add.at(transitions, (rows[inside], successors[inside]),
                      prob[inside])
        return np.linalg.solve(np.eye(n) - transitions, np.ones(n))

    def states(self) -> List[LatticeState]:
        return [self.state(index) for index in range(self.size + 1)]

    def index_of(self, state: LatticeState) -> int:
        if state.target:
            return self.target
        index = self._find(state.x)
        if index is None:
            raise ValueError(f"{state} is not in the lattice.")
        return index

    def _find(self, x: float) -> Optional[int]:
        index = int(np.searchsorted(self.x, x - MERGE_TOLERANCE))
        if index < self.size and abs(self.x[index] - x) <= MERGE_TOLERANCE:
            return index
        return None


def _equal_step_states(params: ProblemParams,
                       depth: float) -> List[Tuple[int, int]]:
    step = params.delta_h
    lowest = -math.floor(depth / step + LOG_LIKELIHOOD_TOLERANCE)
    highest = math.ceil(
        (params.boundary_b - LOG_LIKELIHOOD_TOLERANCE) / step) - 1
    return [(k, 0) if k >= 0 else (0, -k) for k in range(lowest, highest + 1)]


def _generic_states(params: ProblemParams, depth: float,
                    max_steps: int) -> List[Tuple[int, int]]:
    found = []
    seen = {(0, 0)}
    queue = collections.deque([(0, 0)])
    while queue:
        heads, tails = queue.popleft()
        found.append((heads, tails))
        if heads + tails >= max_steps:
            continue
        for successor in ((heads + 1, tails), (heads, tails + 1)):
            if successor in seen:
                continue
            seen.add(successor)
            x = successor[0] * params.delta_h - successor[1] * params.delta_t
            if (x < params.boundary_b - LOG_LIKELIHOOD_TOLERANCE and
                    x >= -depth - MERGE_TOLERANCE):
                queue.append(successor)
    return found


def _successor(lattice: Lattice, x: float, depth: float) -> int:
    found = lattice._find(x)
    if found is not None:
        return found
    if x < -depth - MERGE_TOLERANCE:
        return lattice.cutoff
    # Past the toss horizon.
    index = int(np.searchsorted(lattice.x, x))
    return index if index < lattice.size else lattice.target


def build_lattice(params: ProblemParams, depth: float = DEFAULT_DEPTH,
                  max_steps: int = DEFAULT_MAX_STEPS) -> Lattice:
    """
    The states reachable from x = 0 with -depth <= x < B. For equal step
    sizes the states are multiples of the step; otherwise they are
    enumerated up to max_steps tosses and states with equal x are merged.
    """
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}.")
    if max_steps < 1:
        raise ValueError(f"max_steps must be at least 1, got {max_steps}.")
    b = params.boundary_b
    if b <= LOG_LIKELIHOOD_TOLERANCE:
        empty = np.zeros(0, dtype=np.int64)
        return Lattice(np.zeros(0), empty, empty, empty, empty, np.zeros(0),
                       start=0, boundary_b=b)
    equal_steps = (abs(params.delta_h - params.delta_t) <=
                   MERGE_TOLERANCE * params.delta_h)
    if equal_steps:
        counts = _equal_step_states(params, depth)
    else:
        counts = _generic_states(params, depth, max_steps)
    counts.sort(key=lambda c: (c[0] * params.delta_h - c[1] * params.delta_t,
                               c[0] + c[1]))
    merged: List[Tuple[int, int]] = []
    xs: List[float] = []
    for heads, tails in counts:
        x = heads * params.delta_h - tails * params.delta_t
        if xs and abs(x - xs[-1]) <= MERGE_TOLERANCE:
            continue
        merged.append((heads, tails))
        xs.append(x)
    x_array = np.array(xs)
    lattice = Lattice(
        x=x_array,
        heads=np.array([c[0] for c in merged], dtype=np.int64),
        tails=np.array([c[1] for c in merged], dtype=np.int64),
        up=np.zeros(len(merged), dtype=np.int64),
        down=np.zeros(len(merged), dtype=np.int64),
        heads_prob=np.array([heads_prob_given_state(x, params) for x in xs]),
        start=0,
        boundary_b=b,
    )
    for index, (heads, tails) in enumerate(merged):
        x_up = (heads + 1) * params.delta_h - tails * params.delta_t
        if x_up >= b - LOG_LIKELIHOOD_TOLERANCE:
            lattice.up[index] = lattice.target
        else:
            lattice.up[index] = _successor(lattice, x_up, depth)
        lattice.down[index] = _successor(
            lattice, heads * params.delta_h - (tails + 1) * params.delta_t,
            depth)
    lattice.start = lattice.index_of(LatticeState(0, 0, 0.0))
    logger.info("Built a lattice of %d states with depth %r.",
                lattice.size, depth)
    return lattice


def _extend(values: np.ndarray, quit_costs: np.ndarray) -> np.ndarray:
    rows = values.shape[0]
    return np.concatenate(
        [values, np.zeros((rows, 1)), quit_costs[:, None]], axis=1)


def _solve_quit_games(lattice: Lattice, quit_costs: np.ndarray,
                      initial: np.ndarray, tol: float) -> np.ndarray:
    """
    Value iteration for one quit game per row, each row with its own quit
    cost. Starting values must lie above the solution. The values after a
    sweep that lowered no state by more than c are within c times the
    longest expected game of the solution, so sweeps stop once that bound
    is at most tol / 10 for every row, or once changes are rounding noise.
    """
    values = initial
    longest = float(lattice.absorption_times.max())
    threshold = np.maximum(
        tol / 10 / longest,
        ROUNDING_UNITS * np.finfo(float).eps * np.maximum(1.0, quit_costs))
    prob = lattice.heads_prob
    change = np.full(len(quit_costs), np.inf)
    for iteration in range(1, MAX_VALUE_ITERATIONS + 1):
        extended = _extend(values, quit_costs)
        play = (1 + prob * extended[:, lattice.up] +
                (1 - prob) * extended[:, lattice.down])
        new_values = np.minimum(quit_costs[:, None], play)
        change = np.max(np.abs(new_values - values), axis=1)
        values = new_values
        if np.all(change <= threshold):
            return values
    raise ConvergenceError(
        f"Value iteration did not converge in {MAX_VALUE_ITERATIONS} "
        f"sweeps, last change {float(change.max())}.",
        iterations=MAX_VALUE_ITERATIONS, change=float(change.max()))


def _play_values(lattice: Lattice, rows: np.ndarray, values: np.ndarray,
                 quit_costs: np.ndarray) -> np.ndarray:
    extended = _extend(values, quit_costs)
    row_index = np.arange(len(rows))
    prob = lattice.heads_prob[rows]
    return (1 + prob * extended[row_index, lattice.up[rows]] +
            (1 - prob) * extended[row_index, lattice.down[rows]])


def _start_values(lattice: Lattice, quit_costs: np.ndarray) -> np.ndarray:
    return np.repeat(quit_costs[:, None], lattice.size, axis=1)


def quit_game_values(g: float, params: ProblemParams, lattice: Lattice,
                     tol: float = DEFAULT_GRADE_TOLERANCE) -> np.ndarray:
    """Values of the quit game with quit cost g for every lattice state."""
    if not g >= 0:
        raise ValueError(f"The quit cost must be non-negative, got {g}.")
    quit_costs = np.array([float(g)])
    return _solve_quit_games(lattice, quit_costs,
                             _start_values(lattice, quit_costs), tol)[0]


def quit_game_value(g: float, start: LatticeState, params: ProblemParams,
                    lattice: Lattice,
                    tol: float = DEFAULT_GRADE_TOLERANCE) -> float:
    index = lattice.index_of(start)
    if index == lattice.target:
        return 0.0
    return float(quit_game_values(g, params, lattice, tol)[index])


def play_value(g: float, state: LatticeState, params: ProblemParams,
               lattice: Lattice,
               tol: float = DEFAULT_GRADE_TOLERANCE) -> float:
    """The cost of tossing once from state and then playing optimally."""
    index = lattice.index_of(state)
    if index == lattice.target:
        return 0.0
    values = quit_game_values(g, params, lattice, tol)
    return float(_play_values(lattice, np.array([index]), values[None, :],
                              np.array([float(g)]))[0])


def _bisect_grades(lattice: Lattice, params: ProblemParams,
                   rows: np.ndarray, tol: float) -> np.ndarray:
    """
    Bisect the grades of the states in rows in lock-step. The bracket
    starts at [0, 4 * theorem2_bound] and its upper end doubles while
    tossing is not yet optimal there. Bisection stops when the bracket is
    at most tol / 2 wide, so the cost of tossing first at the returned
    grade is within tol of the grade.
    """
    hi = np.full(len(rows), 4 * theorem2_bound(params))
    lo = np.zeros(len(rows))
    hi_values = _solve_quit_games(lattice, hi, _start_values(lattice, hi), tol)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        playing = _play_values(lattice, rows, hi_values, hi) <= hi
        if playing.all():
            break
        logger.info("Doubling the grade bracket for %d states.",
                    int((~playing).sum()))
        lo = np.where(playing, lo, hi)
        hi = np.where(playing, hi, 2 * hi)
        hi_values = _solve_quit_games(lattice, hi,
                                      _start_values(lattice, hi), tol)
    else:
        raise ConvergenceError(
            f"Tossing is not optimal for any quit cost up to {hi.max()}.",
            iterations=MAX_BRACKET_DOUBLINGS, change=math.inf)
    while True:
        mid = (lo + hi) / 2
        # Brackets of adjacent floats cannot be split.
        active = (hi - lo > tol / 2) & (lo < mid) & (mid < hi)
        if not active.any():
            return hi
        # The solution for a larger quit cost bounds the solution from above.
        values = _solve_quit_games(lattice, mid,
                                   np.minimum(mid[:, None], hi_values), tol)
        playing = _play_values(lattice, rows, values, mid) <= mid
        lower_hi = active & playing
        hi = np.where(lower_hi, mid, hi)
        hi_values = np.where(lower_hi[:, None], values, hi_values)
        lo = np.where(active & ~playing, mid, lo)


def grade_of(state: LatticeState, params: ProblemParams, lattice: Lattice,
             tol: float = DEFAULT_GRADE_TOLERANCE) -> float:
    index = lattice.index_of(state)
    if index == lattice.target:
        return 0.0
    return float(_bisect_grades(lattice, params, np.array([index]), tol)[0])


@dataclasses.dataclass
class GradeTable(ReportModule):
    depth: float
    tol: float
    max_steps: int
    states: List[LatticeState]
    grades: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "depth": self.depth,
            "tol": self.tol,
            "max_steps": self.max_steps,
            "states": [state._asdict() for state in self.states],
            "grades": list(self.grades),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]):
        return cls(d["depth"], d["tol"], d["max_steps"],
                   [LatticeState(**state) for state in d["states"]],
                   list(d["grades"]))

    def grade_at(self, x: float) -> float:
        for state, grade in zip(self.states, self.grades):
            if abs(state.x - x) <= MERGE_TOLERANCE * max(1.0, abs(x)):
                return grade
        raise KeyError(x)


def compute_grade_table(params: ProblemParams,
                        depth: float = DEFAULT_DEPTH,
                        tol: float = DEFAULT_GRADE_TOLERANCE,
                        max_steps: int = DEFAULT_MAX_STEPS) -> GradeTable:
    lattice = build_lattice(params, depth, max_steps)
    if lattice.size:
        grades = _bisect_grades(lattice, params, np.arange(lattice.size), tol)
    else:
        grades = np.zeros(0)
    return GradeTable(depth, tol, max_steps, lattice.states(),
                      [float(grade) for grade in grades] + [0.0])


@dataclasses.dataclass
class MonotonicityResult(ReportModule):
    ok: bool
    # ((x, grade at x), (y, grade at y)) with x > y and grade at x too high.
    violation: Optional[Tuple[Tuple[float, float], Tuple[float, float]]]

    def __bool__(self):
        return self.ok


def check_monotonicity(table: GradeTable,
                       tol: float = DEFAULT_GRADE_TOLERANCE
                       ) -> MonotonicityResult:
    """
    Check that grades do not increase with x, up to the tolerance tol of
    the grades.
    """
    pairs = sorted(zip((state.x for state in table.states), table.grades))
    lowest: Optional[Tuple[float, float]] = None
    for x, grade in pairs:
        if lowest is not None and grade > lowest[1] + tol:
            return MonotonicityResult(False, ((x, grade), lowest))
        if lowest is None or grade < lowest[1]:
            lowest = (x, grade)
    return MonotonicityResult(True, None)


@dataclasses.dataclass
class CutoffStability(ReportModule):
    depth: float
    doubled_depth: float
    states_compared: int
    max_change: float
    stable: bool


def cutoff_stability(params: ProblemParams, depth: float = DEFAULT_DEPTH,
                     tol: float = DEFAULT_GRADE_TOLERANCE,
                     max_steps: int = DEFAULT_MAX_STEPS,
                     table: Optional[GradeTable] = None) -> CutoffStability:
    """
    Compare the grades at x >= 0 for depth and 2 * depth. The grades are
    stable when no grade moves by 10 * tol or more.
    """
    if table is None:
        table = compute_grade_table(params, depth, tol, max_steps)
    doubled = compute_grade_table(params, 2 * depth, tol, max_steps)
    largest = 0.0
    compared = 0
    for state, grade in zip(table.states, table.grades):
        if state.x < -LOG_LIKELIHOOD_TOLERANCE:
            continue
        other = doubled.grade_at(state.x)
        largest = max(largest, abs(grade - other))
        compared += 1
    return CutoffStability(depth, 2 * depth, compared, largest,
                           largest < 10 * tol)


@dataclasses.dataclass
class JointOracleReport(ReportModule):
    depth: float
    tol: float
    states: int
    iterations: int
    start_value: float
    optimal: bool
    violations: List[Dict[str, float]]
    tie_states: List[Tuple[float, float]]
    reduction: str = TWO_SLOT_REDUCTION


def joint_bellman_oracle(params: ProblemParams,
                         depth: float = DEFAULT_ORACLE_DEPTH,
                         tol: float = DEFAULT_ORACLE_TOLERANCE,
                         max_steps: int = DEFAULT_MAX_STEPS
                         ) -> JointOracleReport:
    """
    Solve the game on two coin slots by value iteration. Every toss costs
    one and the game ends when a coin reaches B. The actions are tossing
    either slot or tossing a fresh coin. The report states whether the
    action on the largest log-likelihood, a fresh coin counting as zero,
    attains the optimal value everywhere.
    """
    lattice = build_lattice(params, depth, max_steps)
    n = lattice.size
    if n == 0:
        return JointOracleReport(depth, tol, 0, 0, 0.0, True, [], [])
    if (n + 1) ** 2 > MAX_JOINT_STATES:
        raise LatticeTooLargeError(
            f"The joint lattice has {(n + 1) ** 2} states, more than "
            f"{MAX_JOINT_STATES}. Use a smaller depth.")
    dead = n
    target = n + 1
    # Coordinate transitions; index n is a dead slot, n + 1 a finished coin.
    up = np.where(lattice.up == lattice.target, target,
                  np.where(lattice.up == lattice.cutoff, dead, lattice.up))
    down = np.where(lattice.down == lattice.cutoff, dead, lattice.down)
    prob = lattice.heads_prob
    x = np.concatenate([lattice.x, [-np.inf]])
    start = lattice.start
    live = np.arange(n)
    # A fresh coin replaces slot one when it is strictly lower.
    replace_first = x[:, None] < x[None, :]

    def action_values(values: np.ndarray) -> np.ndarray:
        extended = np.zeros((n + 2, n + 2))
        extended[:n + 1, :n + 1] = values
        toss_first = np.full((n + 1, n + 1), np.inf)
        toss_first[live, :] = (
            1 + prob[:, None] * extended[up][:, :n + 1] +
            (1 - prob[:, None]) * extended[down][:, :n + 1])
        toss_second = np.full((n + 1, n + 1), np.inf)
        toss_second[:, live] = (
            1 + prob[None, :] * extended[:n + 1][:, up] +
            (1 - prob[None, :]) * extended[:n + 1][:, down])
        fresh_first = (1 + prob[start] * extended[up[start], :n + 1] +
                       (1 - prob[start]) * extended[down[start], :n + 1])
        fresh_second = (1 + prob[start] * extended[:n + 1, up[start]] +
                        (1 - prob[start]) * extended[:n + 1, down[start]])
        fresh = np.where(replace_first, fresh_first[None, :],
                         fresh_second[:, None])
        return np.stack([toss_first, toss_second, fresh])

    # Sweeps run well below tol so that exact ties are resolved within tol.
    threshold = tol / 1000
    values = np.zeros((n + 1, n + 1))
    change = math.inf
    for iteration in range(1, MAX_VALUE_ITERATIONS + 1):
        new_values = action_values(values).min(axis=0)
        change = float(np.max(np.abs(new_values - values)))
        values = new_values
        if change <= threshold:
            break
    else:
        raise ConvergenceError(
            f"Joint value iteration did not converge in "
            f"{MAX_VALUE_ITERATIONS} sweeps, last change {change}.",
            iterations=MAX_VALUE_ITERATIONS, change=change)

    actions = action_values(values)
    best = actions.min(axis=0)
    first_x = np.broadcast_to(x[:, None], best.shape)
    second_x = np.broadcast_to(x[None, :], best.shape)
    highest = np.maximum(np.maximum(first_x, second_x), 0.0)
    candidate = np.stack([
        first_x >= highest - LOG_LIKELIHOOD_TOLERANCE,
        second_x >= highest - LOG_LIKELIHOOD_TOLERANCE,
        0.0 >= highest - LOG_LIKELIHOOD_TOLERANCE,
    ])
    max_x_value = np.where(candidate, actions, np.inf).min(axis=0)
    gaps = max_x_value - best
    violations = []
    tie_states = []
    ties = (actions <= best + tol).sum(axis=0) > 1
    for first in range(n + 1):
        for second in range(n + 1):
            if gaps[first, second] > tol:
                violations.append({"x1": float(x[first]),
                                   "x2": float(x[second]),
                                   "gap": float(gaps[first, second])})
            if ties[first, second] and first != second:
                tie_states.append((float(x[first]), float(x[second])))
    logger.info("Joint oracle solved %d states in %d sweeps.",
                (n + 1) ** 2, iteration)
    return JointOracleReport(
        depth=depth,
        tol=tol,
        states=(n + 1) ** 2,
        iterations=iteration,
        start_value=float(values[dead, dead]),
        optimal=not violations,
        violations=violations,
        tie_states=tie_states,
    )
