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

import argparse
import dataclasses
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

from ._version import __version__
from .analysis import bounds_report
from .engine import (DEFAULT_CAP, DEFAULT_SEED, DEFAULT_TRIALS,
                     ExperimentSummary, run_experiment)
from .grade import (ConvergenceError, DEFAULT_DEPTH, DEFAULT_GRADE_TOLERANCE,
                    DEFAULT_MAX_STEPS, DEFAULT_ORACLE_DEPTH,
                    DEFAULT_ORACLE_TOLERANCE, LatticeTooLargeError,
                    check_monotonicity, compute_grade_table,
                    cutoff_stability, joint_bellman_oracle)
from .model import ProblemParams
from .report_modules import (Meta, REPORT_WRITERS, ReportItem, ReportModule)
from .strategy import (DEFAULT_POOL_SIZE, LIKELIHOOD_TOSS, NAIVE, ROUND_ROBIN,
                       STRATEGY_NAMES)
from .util import open_output

SIMULATE = "simulate"
BOUNDS = "bounds"
GRADE_CHECK = "grade-check"
COMPARE = "compare"
COMPARED_STRATEGIES = (LIKELIHOOD_TOSS, NAIVE, ROUND_ROBIN)
# Experiments with a larger fraction of capped episodes are failures.
MAX_CAPPED_FRACTION = 0.01

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class RunConfig(ReportModule):
    command: str
    p: float
    epsilon: float
    alpha: float
    delta: float
    strategy: str = LIKELIHOOD_TOSS
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    parallelism: int = 1
    cap: int = DEFAULT_CAP
    pool_size: int = DEFAULT_POOL_SIZE
    depth: float = DEFAULT_DEPTH
    tol: float = DEFAULT_GRADE_TOLERANCE
    max_steps: int = DEFAULT_MAX_STEPS
    oracle: bool = True
    oracle_depth: float = DEFAULT_ORACLE_DEPTH
    oracle_tol: float = DEFAULT_ORACLE_TOLERANCE
    output_format: str = "json"
    output: Optional[str] = None
    deterministic: bool = False
    progress: bool = True
    verbose: bool = False

    def problem_params(self) -> ProblemParams:
        return ProblemParams(self.p, self.epsilon, self.alpha, self.delta)


def _checked(convert: Callable[[str], Any], condition: Callable[[Any], bool],
             requirement: str) -> Callable[[str], Any]:
    def parse(value: str):
        try:
            result = convert(value)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"invalid {convert.__name__} value: {value!r}")
        if not condition(result):
            raise argparse.ArgumentTypeError(
                f"must be {requirement}, got {value}")
        return result
    parse.__name__ = convert.__name__
    return parse


positive_int = _checked(int, lambda v: v >= 1, "at least 1")
non_negative_int = _checked(int, lambda v: v >= 0, "non-negative")
positive_float = _checked(float, lambda v: v > 0, "positive")


def argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heavycoin",
        description="Simulate and analyse strategies that find a heavy coin "
                    "among an unlimited supply of coins.")
    parser.add_argument("--version", action="version", version=__version__)

    common = argparse.ArgumentParser(add_help=False)
    model = common.add_argument_group("Coin model")
    model.add_argument("--p", type=float, required=True,
                       help="Mean heads probability. Heavy coins land heads "
                            "with probability p + epsilon, light coins with "
                            "p - epsilon.")
    model.add_argument("--epsilon", type=float, required=True,
                       help="Bias of a coin, in (0, 0.5).")
    model.add_argument("--alpha", type=float, required=True,
                       help="Prior probability that a coin is heavy.")
    model.add_argument("--delta", type=float, required=True,
                       help="Allowed probability that the selected coin is "
                            "light.")
    output = common.add_argument_group("Output")
    output.add_argument("--format", dest="output_format",
                        choices=tuple(REPORT_WRITERS), default="json",
                        help="Report format. CSV flattens the JSON report "
                             "into one header and one value row. "
                             "Default: json.")
    output.add_argument("-o", "--output",
                        help="Output file. Files ending in .gz, .bz2 or .xz "
                             "are compressed. Default: standard output.")
    output.add_argument("--deterministic", action="store_true",
                        help="Leave the generation time out of the report so "
                             "identical runs give identical reports.")
    output.add_argument("-v", "--verbose", action="store_true",
                        help="Log progress information on standard error.")

    simulation = argparse.ArgumentParser(add_help=False)
    options = simulation.add_argument_group("Simulation")
    options.add_argument("--trials", type=positive_int,
                         default=DEFAULT_TRIALS,
                         help=f"Number of simulated episodes. "
                              f"Default: {DEFAULT_TRIALS:,}.")
    options.add_argument("--seed", type=non_negative_int,
                         default=DEFAULT_SEED,
                         help=f"Master seed. Episode i draws from a random "
                              f"stream derived from the seed and i only. "
                              f"Default: {DEFAULT_SEED}.")
    options.add_argument("-t", "--parallelism", type=positive_int, default=1,
                         help="Number of worker processes. Results do not "
                              "depend on it. Default: 1.")
    options.add_argument("--cap", type=positive_int, default=DEFAULT_CAP,
                         help=f"Maximum number of tosses per episode. "
                              f"Default: {DEFAULT_CAP:,}.")
    options.add_argument("--pool-size", type=positive_int,
                         default=DEFAULT_POOL_SIZE,
                         help=f"Number of coins the round-robin strategy "
                              f"cycles through. "
                              f"Default: {DEFAULT_POOL_SIZE}.")
    options.add_argument("--no-progress", dest="progress",
                         action="store_false",
                         help="Do not show a progress bar.")

    subparsers = parser.add_subparsers(dest="command", required=True,
                                       metavar="COMMAND")
    simulate = subparsers.add_parser(
        SIMULATE, parents=[common, simulation],
        help="Run a strategy for a number of episodes.")
    simulate.add_argument("--strategy", choices=STRATEGY_NAMES,
                          default=LIKELIHOOD_TOSS,
                          help=f"Strategy to simulate. "
                               f"Default: {LIKELIHOOD_TOSS}.")
    subparsers.add_parser(
        BOUNDS, parents=[common],
        help="Compute the upper bounds on the expected number of tosses.")
    grade_check = subparsers.add_parser(
        GRADE_CHECK, parents=[common],
        help="Compute the grades of the single coin system, check their "
             "monotonicity and check that tossing the coin with the largest "
             "log-likelihood is optimal.")
    grade_check.add_argument("--depth", type=positive_float,
                             default=DEFAULT_DEPTH,
                             help=f"Lowest log-likelihood in the lattice is "
                                  f"-depth. Default: {DEFAULT_DEPTH}.")
    grade_check.add_argument("--tol", type=positive_float,
                             default=DEFAULT_GRADE_TOLERANCE,
                             help=f"Absolute tolerance of the grades. "
                                  f"Default: {DEFAULT_GRADE_TOLERANCE}.")
    grade_check.add_argument("--max-steps", type=positive_int,
                             default=DEFAULT_MAX_STEPS,
                             help=f"Toss horizon of the lattice when heads "
                                  f"and tails steps differ. "
                                  f"Default: {DEFAULT_MAX_STEPS}.")
    grade_check.add_argument("--no-oracle", dest="oracle",
                             action="store_false",
                             help="Skip the two coin optimality check.")
    grade_check.add_argument("--oracle-depth", type=positive_float,
                             default=DEFAULT_ORACLE_DEPTH,
                             help=f"Depth of the lattice of the two coin "
                                  f"check. Default: {DEFAULT_ORACLE_DEPTH}.")
    grade_check.add_argument("--oracle-tol", type=positive_float,
                             default=DEFAULT_ORACLE_TOLERANCE,
                             help=f"Tolerance of the two coin check. "
                                  f"Default: {DEFAULT_ORACLE_TOLERANCE}.")
    subparsers.add_parser(
        COMPARE, parents=[common, simulation],
        help=f"Simulate {', '.join(COMPARED_STRATEGIES)} with the same seed "
             f"and compare their mean number of tosses.")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    parser = argument_parser()
    args = parser.parse_args(argv)
    fields = {field.name for field in dataclasses.fields(RunConfig)}
    config = RunConfig(**{key: value for key, value in vars(args).items()
                          if key in fields})
    try:
        config.problem_params()
    except ValueError as error:
        message = str(error)
        flag = message.split(maxsplit=1)[0]
        parser.error(f"argument --{flag}: {message}")
    return config


def _failed_experiments(summaries: Sequence[ExperimentSummary]) -> List[str]:
    return [
        f"{summary.capped} of {summary.trials} {summary.policy} episodes "
        f"hit the toss cap."
        for summary in summaries
        if summary.capped_fraction > MAX_CAPPED_FRACTION
    ]


def _simulate(config: RunConfig, policy: str) -> ExperimentSummary:
    return run_experiment(config.problem_params(), policy,
                          trials=config.trials,
                          master_seed=config.seed,
                          parallelism=config.parallelism,
                          cap=config.cap,
                          pool_size=config.pool_size,
                          progress=config.progress)


def comparison(summaries: Dict[str, ExperimentSummary]) -> Dict[str, Any]:
    reference = summaries[LIKELIHOOD_TOSS]
    reference_low, reference_high = reference.tosses_interval()
    result: Dict[str, Any] = {}
    for policy, summary in summaries.items():
        if policy == LIKELIHOOD_TOSS:
            continue
        name = policy.replace("-", "_")
        low, high = summary.tosses_interval()
        result[f"{name}_over_likelihood_toss"] = (
            summary.mean_tosses / reference.mean_tosses)
        result[f"{name}_disjoint_3sigma"] = (
            reference_high < low or high < reference_low)
    return result


def execute(config: RunConfig) -> int:
    """Run the configured command, write its report and return the exit
    code."""
    logging.basicConfig(
        level=logging.INFO if config.verbose else logging.WARNING,
        format="%(levelname)s:%(name)s: %(message)s",
        stream=sys.stderr)
    params = config.problem_params()
    report: Dict[str, ReportItem] = {
        "meta": Meta.create(config.command, config.deterministic),
        "config": config,
    }
    failures: List[str] = []
    try:
        if config.command == SIMULATE:
            summary = _simulate(config, config.strategy)
            report["simulation"] = summary
            failures.extend(_failed_experiments([summary]))
        elif config.command == BOUNDS:
            report["bounds"] = bounds_report(params)
        elif config.command == GRADE_CHECK:
            table = compute_grade_table(params, config.depth, config.tol,
                                        config.max_steps)
            monotonicity = check_monotonicity(table, config.tol)
            stability = cutoff_stability(params, config.depth, config.tol,
                                         config.max_steps, table=table)
            report["grade_table"] = table
            report["monotonicity"] = monotonicity
            report["cutoff_stability"] = stability
            if not monotonicity.ok:
                failures.append(f"Grades are not monotone: "
                                f"{monotonicity.violation}.")
            if not stability.stable:
                failures.append(
                    f"Grades changed by {stability.max_change} "
                    f"when doubling the depth.")
            if config.oracle:
                try:
                    oracle = joint_bellman_oracle(
                        params, config.oracle_depth, config.oracle_tol,
                        config.max_steps)
                except LatticeTooLargeError as error:
                    failures.append(f"--oracle-depth: {error}")
                else:
                    report["joint_oracle"] = oracle
                    if not oracle.optimal:
                        failures.append(
                            f"Tossing the largest log-likelihood is not "
                            f"optimal in {len(oracle.violations)} joint "
                            f"states.")
        elif config.command == COMPARE:
            summaries = {policy: _simulate(config, policy)
                         for policy in COMPARED_STRATEGIES}
            for policy, summary in summaries.items():
                report[policy.replace("-", "_")] = summary
            report["comparison"] = comparison(summaries)
            failures.extend(_failed_experiments(list(summaries.values())))
        else:
            raise ValueError(f"Unknown command: {config.command}")
    except ConvergenceError as error:
        print(f"heavycoin: error: {error}", file=sys.stderr)
        return 1
    with open_output(config.output) as output:
        REPORT_WRITERS[config.output_format](report, output)
    for failure in failures:
        print(f"heavycoin: error: {failure}", file=sys.stderr)
    return 1 if failures else 0


def main(argv: Optional[Sequence[str]] = None) -> None:
    config = parse_args(argv)
    status = execute(config)
    if status:
        sys.exit(status)


if __name__ == "__main__":  # pragma: no cover
    main()
