"""Driver-dispatch style instances: historical acceptance rates and distance-based nearest picks."""

import numpy as np

from recmatch import GenConfig, SolverConfig, generate_case_like, solve

inst = generate_case_like(GenConfig(8, 24, 3, utility_model="case_like", prob_model="case_like",
                                    seed=5))
print("acceptance rates: mean", round(inst.accept_prob.mean(), 3), "min", round(inst.accept_prob.min(), 3))
print("distance matrix", inst.distances.shape, "nearest per demand", np.argmin(inst.distances, axis=1))

cfg = SolverConfig(saa_samples=500, seed=1)
for method in ("npp", "dap", "surrogate", "saa"):
    rep = solve(inst, method, cfg)
    print(f"{method:<10} {rep.exact_value:.4f}")
