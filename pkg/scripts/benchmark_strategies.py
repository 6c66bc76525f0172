import sys
import time

from heavycoin.engine import run_experiment
from heavycoin.model import ProblemParams
from heavycoin.strategy import LIKELIHOOD_TOSS, NAIVE, ROUND_ROBIN


if __name__ == "__main__":
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    print("epsilon\tstrategy\tmean_tosses\tsuccess_rate\tseconds")
    for epsilon in (0.05, 0.1, 0.2):
        params = ProblemParams(0.5, epsilon, 0.1, 0.01)
        for policy in (LIKELIHOOD_TOSS, NAIVE, ROUND_ROBIN):
            start = time.perf_counter()
            summary = run_experiment(params, policy, trials=trials,
                                     progress=False)
            seconds = time.perf_counter() - start
            print(f"{epsilon}\t{policy}\t{summary.mean_tosses:.1f}\t"
                  f"{summary.success_rate:.4f}\t{seconds:.2f}")
