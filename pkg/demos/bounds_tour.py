"""Evaluate the approximation-gap bounds and the DAP gap on the adversarial family."""

from recmatch import (BoundInputs, correlated_bound, dap_gap_certificate, generate_adversarial_dap,
                      theorem1_bound, theorem2_bound, uniform_baseline_value)

# homogeneous case: 10 demands, theta = gamma = 4, u in [5, 10], p = 0.8
hom = BoundInputs(theta=4, tau=0.01, num_demands=10, a=5.0, b=10.0, p_lo=0.8, p_hi=0.8, gamma=4)
print("homogeneous bound:", round(theorem1_bound(hom).gap_bound, 6))

het = BoundInputs(theta=4, tau=0.01, num_demands=20, a=0.4, p_lo=0.7, p_hi=0.9, gamma=4)
print("heterogeneous bound:", round(theorem2_bound(het).gap_bound, 6))
print("correlated bound:", round(correlated_bound(het).gap_bound, 6))

# expected best accepted utility when theta uniform(a, b) offers go out at rate p
for theta in (1, 2, 4, 8):
    print("theta", theta, "baseline", round(uniform_baseline_value(theta, 0.8, 5.0, 10.0), 4))

# DAP spreads supplies thin and loses most of the value as theta grows
for theta in (2, 4, 8):
    inst = generate_adversarial_dap(16, theta, 1, 1.0, 1.05, 0.9)
    print("theta", theta, "DAP relative gap", round(dap_gap_certificate(inst), 4))
