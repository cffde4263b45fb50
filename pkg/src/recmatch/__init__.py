"""Recommend-to-match under random supply rejections."""

from .instance import (GenConfig, Instance, InstanceError, InstanceFormatError, Recommendation,
                       Verdict, check_recommendation, generate_adversarial_dap, generate_case_like,
                       generate_instance, generate_synthetic, load_instance, save_instance,
                       validate_recommendation)
from .evaluation import (Evaluation, PerturbSpec, ScenarioSet, corollary1_upper,
                         enumerate_outcomes_value, exact_expected_utility, monte_carlo_value,
                         perturb_probabilities, sample_scenarios, scenario_value, surrogate_value)
from .solvers import (METHODS, SolveReport, SolverConfig, SolverError, brute_force_opt, solve,
                      solve_dap, solve_homogeneous_exact, solve_npp, solve_saa, solve_surrogate)
from .bounds import (BoundError, BoundInputs, BoundReport, correlated_bound,
                     dap_gap_certificate, theorem1_bound, theorem2_bound, uniform_baseline_value)
from .bench import (ConfigError, ExperimentConfig, emit_report, run_benchmark,
                    run_out_of_sample, run_sensitivity)

__version__ = "0.1.0"
