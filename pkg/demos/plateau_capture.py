"""How the ensemble size affects capture of a flat pressure plateau.

One sampling wave of ``n_s`` lattice-started solvers followed by one
training step; the error is measured on a grid inside the plateau.

    python demos/plateau_capture.py
"""
import statistics

import numpy as np

from onlinesurrogate import PlateauParams, SamplerConfig, WorkflowConfig, get_model, run_asymptotic

params = PlateauParams()
model = get_model("plateau")
grid = np.array([
    (params.onset(y) + t * (params.end(y) - params.onset(y)), y)
    for y in np.linspace(0.1, 0.5, 5)
    for t in np.linspace(0.05, 0.95, 10)
])
truth = np.array([model(g) for g in grid])

for n_s in (10, 20, 40):
    errs, totals = [], []
    for seed in range(5):
        cfg = WorkflowConfig("plateau", sampler=SamplerConfig("lattice", True, n_s=n_s, warm=1),
                             max_iterations=1, rng_seed=seed)
        result = run_asymptotic(None, cfg)
        errs.append(np.max(np.abs(result.surrogate.predict_many(grid) - truth)))
        totals.append(result.total_evals)
    print(f"n_s = {n_s:2d}: median max error {statistics.median(errs):.4f} "
          f"after a median of {statistics.median(totals):g} evaluations")
