import math
import sys
import time

import numpy as np

from heavycoin.analysis import (lemma5_bounds, simulate_coin_walks,
                                theorem2_bound)
from heavycoin.engine import run_experiment
from heavycoin.model import CoinNature, ProblemParams
from heavycoin.strategy import LIKELIHOOD_TOSS, NAIVE

SYMMETRIC = ProblemParams(0.5, 0.1, 0.5, 0.1)
RARE_HEAVY = ProblemParams(0.5, 0.1, 0.1, 0.01)


def check_success_and_bound(params, trials, parallelism):
    summary = run_experiment(params, LIKELIHOOD_TOSS, trials=trials,
                             parallelism=parallelism)
    delta = params.delta
    floor = 1 - delta - 3 * math.sqrt(delta * (1 - delta) / trials)
    ceiling = summary.mean_tosses + 3 * summary.tosses_stderr
    bound = theorem2_bound(params)
    print(f"{params}: success {summary.success_rate:.5f} >= {floor:.5f}, "
          f"mean + 3 stderr {ceiling:.1f} <= {bound:.1f}")
    return summary.success_rate >= floor and ceiling <= bound


def check_naive_comparison(trials, parallelism):
    likelihood_toss = run_experiment(RARE_HEAVY, LIKELIHOOD_TOSS,
                                     trials=trials, parallelism=parallelism)
    naive = run_experiment(RARE_HEAVY, NAIVE, trials=trials,
                           parallelism=parallelism)
    ratio = naive.mean_tosses / likelihood_toss.mean_tosses
    print(f"naive {naive.mean_tosses:.1f}, likelihood-toss "
          f"{likelihood_toss.mean_tosses:.1f}, ratio {ratio:.2f}")
    return (likelihood_toss.tosses_interval()[1] <
            naive.tosses_interval()[0])


def check_coin_walks(runs):
    bounds = lemma5_bounds(SYMMETRIC)
    rng = np.random.default_rng(0)
    heavy = simulate_coin_walks(SYMMETRIC, CoinNature.HEAVY, runs, rng)
    light = simulate_coin_walks(SYMMETRIC, CoinNature.LIGHT, runs, rng)
    d_over_pi = heavy.mean_steps / heavy.absorbed_at_b_fraction
    print(f"pi {heavy.absorbed_at_b_fraction:.4f}, "
          f"C {light.mean_steps:.3f}, D / pi {d_over_pi:.1f}")
    return (heavy.unfinished == light.unfinished == 0 and
            heavy.absorbed_at_b_fraction >=
            bounds.pi_lower - 3 * heavy.absorbed_at_b_stderr and
            light.mean_steps <= bounds.c_upper + 3 * light.steps_stderr and
            d_over_pi <= bounds.d_over_pi_upper)


if __name__ == "__main__":
    parallelism = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    start = time.perf_counter()
    passed = [
        check_success_and_bound(SYMMETRIC, 20_000, parallelism),
        check_success_and_bound(RARE_HEAVY, 20_000, parallelism),
        check_naive_comparison(5_000, parallelism),
        check_coin_walks(100_000),
    ]
    print(f"{sum(passed)} of {len(passed)} checks passed in "
          f"{time.perf_counter() - start:.0f} seconds")
    sys.exit(0 if all(passed) else 1)
