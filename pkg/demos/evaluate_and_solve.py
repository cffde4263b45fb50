"""Build a small instance, solve it a few ways, and compare the true values."""

from recmatch import (GenConfig, SolverConfig, SolverError, brute_force_opt, exact_expected_utility,
                      generate_synthetic, monte_carlo_value, solve)

# 4 demands, 10 supplies, up to 3 recommendations each, p drawn from [0.7, 0.9]
inst = generate_synthetic(GenConfig(4, 10, 3, prob_model="uniform_range", seed=11))

best = brute_force_opt(inst)
print("enumerated optimum:", round(best.exact_value, 6))

cfg = SolverConfig(tau=0.01, saa_samples=500, seed=3)
for method in ("dap", "homog_exact", "surrogate", "saa"):
    try:
        rep = solve(inst, method, cfg)
    except SolverError as exc:  # homog_exact refuses heterogeneous p
        print(f"{method:<12} skipped: {exc}")
        continue
    gap = 100 * (best.exact_value - rep.exact_value) / best.exact_value
    print(f"{method:<12} value={rep.exact_value:.6f} gap={gap:.2f}%  lists={rep.rec.lists}")

# the exact value of a recommendation, and a Monte Carlo estimate of the same thing
rec = solve(inst, "surrogate", cfg).rec
exact = exact_expected_utility(inst, rec)
mc = monte_carlo_value(inst, rec, 200_000, seed=0)
print("exact", round(exact.total, 6), "mc", round(mc.total, 6), "+-", round(mc.stderr, 6))
