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

import dataclasses
import math

import numpy as np

import pytest

from heavycoin import grade
from heavycoin.analysis import theorem2_bound
from heavycoin.grade import (ConvergenceError, GradeTable, LatticeState,
                             LatticeTooLargeError, build_lattice,
                             check_monotonicity, compute_grade_table,
                             cutoff_stability, grade_of, joint_bellman_oracle,
                             play_value, quit_game_value, quit_game_values)
from heavycoin.model import ProblemParams

PARAMS = ProblemParams(0.5, 0.1, 0.5, 0.1)
UNEQUAL_STEPS = ProblemParams(0.3, 0.1, 0.5, 0.1)
ORIGIN = LatticeState(0, 0, 0.0)
TOL = 1e-6


@pytest.fixture(scope="module")
def lattice():
    return build_lattice(PARAMS, depth=10)


@pytest.fixture(scope="module")
def table():
    return compute_grade_table(PARAMS, depth=10)


def test_equal_step_lattice(lattice):
    step = PARAMS.delta_h
    assert lattice.size == 30
    assert lattice.x[0] == pytest.approx(-24 * step)
    assert lattice.x[-1] == pytest.approx(5 * step)
    assert lattice.x[lattice.start] == 0.0
    assert lattice.start == 24
    assert np.all(np.diff(lattice.x) > 0)
    assert lattice.up[-1] == lattice.target
    assert lattice.down[0] == lattice.cutoff
    for index in range(lattice.size - 1):
        assert lattice.up[index] == index + 1
    for index in range(1, lattice.size):
        assert lattice.down[index] == index - 1


def test_lattice_states(lattice):
    states = lattice.states()
    assert len(states) == lattice.size + 1
    assert states[-1].target
    assert states[-1].x == PARAMS.boundary_b
    assert states[lattice.start] == ORIGIN
    assert lattice.index_of(ORIGIN) == lattice.start
    assert lattice.index_of(states[-1]) == lattice.target
    assert states[0] == LatticeState(0, 24, -24 * PARAMS.delta_t)
    with pytest.raises(ValueError):
        lattice.index_of(LatticeState(0, 0, 0.123))
    with pytest.raises(IndexError):
        lattice.state(lattice.size + 1)


def test_lattice_zero_boundary():
    empty = build_lattice(ProblemParams(0.5, 0.1, 0.5, 0.5))
    assert empty.size == 0
    table = compute_grade_table(ProblemParams(0.5, 0.1, 0.5, 0.5))
    assert table.grades == [0.0]
    assert table.states[0].target
    assert check_monotonicity(table)


@pytest.mark.parametrize(["depth", "max_steps"], [(0, 10), (10, 0)])
def test_lattice_invalid(depth, max_steps):
    with pytest.raises(ValueError):
        build_lattice(PARAMS, depth, max_steps)


def test_unequal_step_lattice():
    lattice = build_lattice(UNEQUAL_STEPS, depth=3, max_steps=12)
    assert np.all(np.diff(lattice.x) > 0)
    assert np.all(lattice.x >= -3 - 1e-12)
    assert np.all(lattice.x < UNEQUAL_STEPS.boundary_b)
    assert lattice.x[lattice.start] == 0.0
    assert np.all(lattice.heads + lattice.tails <= 12)
    assert lattice.x == pytest.approx(
        lattice.heads * UNEQUAL_STEPS.delta_h -
        lattice.tails * UNEQUAL_STEPS.delta_t)
    for index in range(lattice.size):
        up = lattice.up[index]
        down = lattice.down[index]
        x_up = lattice.x[index] + UNEQUAL_STEPS.delta_h
        x_down = lattice.x[index] - UNEQUAL_STEPS.delta_t
        assert down != lattice.target
        if lattice.heads[index] + lattice.tails[index] < 12:
            if up < lattice.size:
                assert lattice.x[up] == pytest.approx(x_up)
            if down < lattice.size:
                assert lattice.x[down] == pytest.approx(x_down)
        else:
            # Moves past the horizon land on the next state above.
            assert up == lattice.target or lattice.x[up] >= x_up - 1e-12
            if x_down < -3:
                assert down == lattice.cutoff
            else:
                assert lattice.x[down] >= x_down - 1e-12


def test_unequal_step_grades():
    table = compute_grade_table(UNEQUAL_STEPS, depth=3, max_steps=12)
    assert len(table.grades) == len(table.states)
    assert table.grades[-1] == 0.0
    assert all(math.isfinite(g) and g > 0 for g in table.grades[:-1])


def test_zero_quit_cost(lattice):
    values = quit_game_values(0.0, PARAMS, lattice)
    assert np.all(values == 0)


def test_negative_quit_cost(lattice):
    with pytest.raises(ValueError):
        quit_game_values(-1.0, PARAMS, lattice)


def test_target_value_and_grade(lattice):
    target = lattice.state(lattice.target)
    assert quit_game_value(100.0, target, PARAMS, lattice) == 0.0
    assert play_value(100.0, target, PARAMS, lattice) == 0.0
    assert grade_of(target, PARAMS, lattice) == 0.0


def test_values_bounded_by_quit_cost(lattice):
    g = 50.0
    values = quit_game_values(g, PARAMS, lattice)
    assert np.all(values <= g)
    assert np.all(values >= 1 - 1e-9)


def test_values_monotone_in_quit_cost(lattice):
    previous = quit_game_values(1.0, PARAMS, lattice)
    for g in (2.0, 5.0, 20.0, 100.0, 1000.0):
        values = quit_game_values(g, PARAMS, lattice)
        assert np.all(values >= previous - TOL)
        previous = values


@pytest.mark.parametrize("g", [3.0, 30.0, 300.0])
def test_values_non_increasing_in_x(lattice, g):
    values = quit_game_values(g, PARAMS, lattice)
    assert np.all(np.diff(values) <= TOL)


def test_top_grade(lattice, table):
    top = lattice.size - 1
    assert table.grades[top] == pytest.approx(1 / lattice.heads_prob[top],
                                              rel=1e-4)


def test_grade_table_monotone(table):
    result = check_monotonicity(table)
    assert result
    assert result.violation is None


def test_perturbed_grade_table_not_monotone(table):
    grades = list(table.grades)
    top = len(grades) - 2
    grades[top] = max(grades) + 1
    result = check_monotonicity(dataclasses.replace(table, grades=grades))
    assert not result.ok
    assert result.violation[0][0] == table.states[top].x


def test_single_state_monotone():
    table = GradeTable(10.0, 1e-6, 40, [ORIGIN], [3.0])
    assert check_monotonicity(table)


def test_grade_table_lookup(table):
    assert table.grade_at(0.0) == table.grades[24]
    with pytest.raises(KeyError):
        table.grade_at(0.123)
    assert GradeTable.from_dict(table.to_dict()) == table


def test_grade_is_bisection_point(lattice, table):
    gamma = table.grade_at(0.0)
    above = gamma * (1 + 10 * TOL)
    below = gamma * (1 - 10 * TOL)
    assert play_value(above, ORIGIN, PARAMS, lattice) <= above
    assert play_value(below, ORIGIN, PARAMS, lattice) > below
    assert grade_of(ORIGIN, PARAMS, lattice) == pytest.approx(gamma,
                                                              rel=10 * TOL)


def test_every_grade_is_crossover(lattice, table):
    for state, gamma in zip(table.states[:-1], table.grades[:-1]):
        assert abs(play_value(gamma, state, PARAMS, lattice) - gamma) <= TOL
        above = gamma * (1 + 10 * TOL)
        below = gamma * (1 - 10 * TOL)
        assert play_value(above, state, PARAMS, lattice) <= above
        assert play_value(below, state, PARAMS, lattice) > below


def test_deep_grade_matches_single_bisection(lattice, table):
    deepest = lattice.state(0)
    assert table.grades[0] > 1e5
    assert grade_of(deepest, PARAMS, lattice) == pytest.approx(
        table.grades[0], rel=10 * TOL)


def test_absorption_times(lattice):
    times = lattice.absorption_times
    assert times.shape == (lattice.size,)
    assert np.all(times >= 1)
    prob = lattice.heads_prob
    extended = np.concatenate([times, [0.0, 0.0]])
    assert times == pytest.approx(
        1 + prob * extended[lattice.up] + (1 - prob) * extended[lattice.down])


def test_cutoff_stability(table):
    result = cutoff_stability(PARAMS, depth=10, table=table)
    assert result.stable
    assert result.doubled_depth == 20
    assert result.states_compared == 7
    assert result.max_change < 10 * TOL


def test_quit_game_not_converging(lattice, monkeypatch):
    monkeypatch.setattr(grade, "MAX_VALUE_ITERATIONS", 1)
    with pytest.raises(ConvergenceError) as error:
        quit_game_values(5.0, PARAMS, lattice)
    assert error.value.iterations == 1
    assert error.value.change > 0


def test_joint_oracle():
    report = joint_bellman_oracle(PARAMS, depth=4, tol=1e-8)
    assert report.optimal
    assert report.violations == []
    assert report.states == 16 ** 2
    assert 1 < report.start_value <= theorem2_bound(PARAMS)
    assert report.reduction == grade.TWO_SLOT_REDUCTION
    for first, second in report.tie_states:
        assert first != second


def test_joint_oracle_zero_boundary():
    report = joint_bellman_oracle(ProblemParams(0.5, 0.1, 0.5, 0.5))
    assert report.optimal
    assert report.states == 0


def test_joint_oracle_too_large():
    with pytest.raises(LatticeTooLargeError) as error:
        joint_bellman_oracle(PARAMS, depth=200)
    assert isinstance(error.value, ValueError)
    error.match("smaller depth")
