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
Seeded Monte Carlo simulation of selection policies.

Every episode draws from its own random stream derived from
(master_seed, episode index) only, so an experiment's summary does not depend
on how episodes are distributed over worker processes.
"""

import dataclasses
import functools
import logging
import multiprocessing
import typing
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import CoinNature, Outcome, ProblemParams
from .report_modules import ReportModule
from .strategy import DEFAULT_POOL_SIZE, make_strategy
from .util import ProgressUpdater

DEFAULT_CAP = 10_000_000
DEFAULT_TRIALS = 10_000
DEFAULT_SEED = 42
SUMMARY_QUANTILES = (1, 5, 25, 50, 75, 95, 99)

logger = logging.getLogger(__name__)


def episode_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([master_seed, index])))


def sample_nature(rng: np.random.Generator, alpha: float) -> CoinNature:
    if rng.random() < alpha:
        return CoinNature.HEAVY
    return CoinNature.LIGHT


def toss(rng: np.random.Generator, nature: CoinNature,
         params: ProblemParams) -> Outcome:
    if rng.random() < nature.heads_probability(params):
        return Outcome.HEADS
    return Outcome.TAILS


class CoinTosser:
    """Tosses coins for one episode and counts every toss."""

    def __init__(self, rng: np.random.Generator, params: ProblemParams):
        self.rng = rng
        self.params = params
        self.tosses = 0

    def toss(self, nature: CoinNature) -> Outcome:
        self.tosses += 1
        return toss(self.rng, nature, self.params)


class EpisodeResult(typing.NamedTuple):
    # None when the episode was capped before a winner was found.
    winner_nature: Optional[CoinNature]
    tosses: int
    coins_opened: int
    correct: bool
    capped: bool


def run_episode(params: ProblemParams,
                policy: str,
                rng: np.random.Generator,
                cap: int = DEFAULT_CAP,
                pool_size: int = DEFAULT_POOL_SIZE,
                audit: bool = False) -> EpisodeResult:
    if cap < 1:
        raise ValueError(f"cap must be at least 1, got {cap}.")
    strategy = make_strategy(policy, params, rng, pool_size=pool_size,
                             audit=audit)
    tosser = CoinTosser(rng, params)
    # A coin's nature is drawn once, when the coin is first tossed.
    natures: List[CoinNature] = []
    while strategy.winner is None:
        if tosser.tosses >= cap:
            return EpisodeResult(None, tosser.tosses, len(natures),
                                 correct=False, capped=True)
        choice = strategy.select_next()
        if choice.is_fresh:
            natures.append(sample_nature(rng, params.alpha))
            nature = natures[-1]
        else:
            nature = natures[choice.index]  # type: ignore
        strategy.record_outcome(choice, tosser.toss(nature))
    winner_nature = natures[strategy.winner]
    return EpisodeResult(winner_nature, tosser.tosses, len(natures),
                         correct=winner_nature is CoinNature.HEAVY,
                         capped=False)


def _run_trial(params: ProblemParams, policy: str, master_seed: int,
               cap: int, pool_size: int, index: int) -> EpisodeResult:
    return run_episode(params, policy, episode_rng(master_seed, index),
                       cap=cap, pool_size=pool_size)


@dataclasses.dataclass
class ExperimentSummary(ReportModule):
    policy: str
    trials: int
    seed: int
    successes: int
    success_rate: float
    success_rate_stderr: float
    mean_tosses: float
    tosses_stderr: float
    toss_quantiles: Dict[str, float]
    mean_coins_opened: float
    capped: int
    capped_fraction: float

    def tosses_interval(self, sigmas: float = 3.0) -> Tuple[float, float]:
        return (self.mean_tosses - sigmas * self.tosses_stderr,
                self.mean_tosses + sigmas * self.tosses_stderr)

    def success_interval(self, sigmas: float = 3.0) -> Tuple[float, float]:
        return (self.success_rate - sigmas * self.success_rate_stderr,
                self.success_rate + sigmas * self.success_rate_stderr)

    @classmethod
    def from_results(cls, results: Sequence[EpisodeResult], policy: str,
                     seed: int):
        trials = len(results)
        if trials < 1:
            raise ValueError("At least one episode result is needed.")
        tosses = np.array([result.tosses for result in results],
                          dtype=np.float64)
        correct = np.array([result.correct for result in results],
                           dtype=np.float64)
        opened = np.array([result.coins_opened for result in results],
                          dtype=np.float64)
        capped = sum(result.capped for result in results)
        successes = int(correct.sum())
        success_rate = successes / trials
        if trials > 1:
            tosses_stderr = float(np.std(tosses, ddof=1) / np.sqrt(trials))
            success_rate_stderr = float(
                np.sqrt(success_rate * (1 - success_rate) / trials))
        else:
            tosses_stderr = 0.0
            success_rate_stderr = 0.0
        quantiles = np.percentile(tosses, SUMMARY_QUANTILES)
        return cls(
            policy=policy,
            trials=trials,
            seed=seed,
            successes=successes,
            success_rate=success_rate,
            success_rate_stderr=success_rate_stderr,
            mean_tosses=float(tosses.mean()),
            tosses_stderr=tosses_stderr,
            toss_quantiles={f"q{q}": float(value) for q, value
                            in zip(SUMMARY_QUANTILES, quantiles)},
            mean_coins_opened=float(opened.mean()),
            capped=capped,
            capped_fraction=capped / trials,
        )


def run_experiment(params: ProblemParams,
                   policy: str,
                   trials: int = DEFAULT_TRIALS,
                   master_seed: int = DEFAULT_SEED,
                   parallelism: int = 1,
                   cap: int = DEFAULT_CAP,
                   pool_size: int = DEFAULT_POOL_SIZE,
                   progress: bool = False) -> ExperimentSummary:
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}.")
    if parallelism < 1:
        raise ValueError(f"parallelism must be at least 1, got {parallelism}.")
    if master_seed < 0:
        raise ValueError(f"master_seed must be non-negative, got {master_seed}.")
    worker = functools.partial(_run_trial, params, policy, master_seed, cap,
                               pool_size)
    results: List[EpisodeResult] = []
    with ProgressUpdater(trials, f"Simulating {policy}",
                         disable=not progress) as progress_updater:
        if parallelism == 1:
            for index in range(trials):
                results.append(worker(index))
                progress_updater.update()
        else:
            # Results come back in submission order, so aggregation sees the
            # same sequence for every number of workers.
            chunksize = max(1, trials // (parallelism * 16))
            with multiprocessing.Pool(parallelism) as pool:
                for result in pool.imap(worker, range(trials),
                                        chunksize=chunksize):
                    results.append(result)
                    progress_updater.update()
    summary = ExperimentSummary.from_results(results, policy, master_seed)
    if summary.capped:
        logger.warning("%d of %d %s episodes hit the cap of %d tosses.",
                       summary.capped, trials, policy, cap)
    return summary
