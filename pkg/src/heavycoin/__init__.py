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

from ._version import __version__
from .analysis import (AbsorptionBounds, WalkSpec, absorption_prob_lower_bound,
                       calculus_inequalities_check, expected_steps_bound,
                       lemma5_bounds, naive_bound, phi, rho_min, solve_rho0,
                       theorem2_bound)
from .engine import (EpisodeResult, ExperimentSummary, run_episode,
                     run_experiment, sample_nature, toss)
from .grade import (ConvergenceError, GradeTable, LatticeState,
                    LatticeTooLargeError, build_lattice, check_monotonicity,
                    compute_grade_table, grade_of, joint_bellman_oracle,
                    quit_game_value)
from .model import (CoinNature, CoinState, Outcome, ProblemParams,
                    heads_prob_given_state, posterior_heavy,
                    stopping_boundary, update_on_toss)
from .strategy import (CoinChoice, FRESH, LikelihoodToss, NaiveToss,
                       RoundRobin, Strategy, UniformRandom, make_strategy)


__all__ = [
    "AbsorptionBounds",
    "CoinChoice",
    "CoinNature",
    "CoinState",
    "ConvergenceError",
    "EpisodeResult",
    "ExperimentSummary",
    "FRESH",
    "GradeTable",
    "LatticeState",
    "LatticeTooLargeError",
    "LikelihoodToss",
    "NaiveToss",
    "Outcome",
    "ProblemParams",
    "RoundRobin",
    "Strategy",
    "UniformRandom",
    "WalkSpec",
    "absorption_prob_lower_bound",
    "build_lattice",
    "calculus_inequalities_check",
    "check_monotonicity",
    "compute_grade_table",
    "expected_steps_bound",
    "grade_of",
    "heads_prob_given_state",
    "joint_bellman_oracle",
    "lemma5_bounds",
    "make_strategy",
    "naive_bound",
    "phi",
    "posterior_heavy",
    "quit_game_value",
    "rho_min",
    "run_episode",
    "run_experiment",
    "sample_nature",
    "solve_rho0",
    "stopping_boundary",
    "theorem2_bound",
    "toss",
    "update_on_toss",
    "__version__",
]
