"""Random versus optimizer-directed sampling on the 2-D Rosenbrock function.

Runs the asymptotic workflow both ways for a few seeds and reports the
evaluation count and how well each surrogate reproduces the minimum at (1, 1).

    python demos/directed_vs_random.py [n_seeds]
"""
import statistics
import sys

import numpy as np

from onlinesurrogate import SamplerConfig, WorkflowConfig, run_asymptotic


def main(n_seeds: int = 3):
    for directed in (False, True):
        label = "directed" if directed else "random"
        totals, errors = [], []
        for seed in range(n_seeds):
            cfg = WorkflowConfig("rosenbrock2", sampler=SamplerConfig(directed=directed), rng_seed=seed, max_iterations=30)
            result = run_asymptotic(None, cfg)
            totals.append(result.total_evals)
            errors.append(abs(result.surrogate(np.ones(2))))
            print(f"{label:8s} seed {seed}: {result.total_evals:5d} evaluations, |yhat(1,1)| = {errors[-1]:.3g}")
        print(f"{label:8s} median: {statistics.median(totals):g} evaluations, "
              f"|yhat(1,1)| = {statistics.median(errors):.3g}\n")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
