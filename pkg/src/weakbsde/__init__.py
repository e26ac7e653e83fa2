"""Lattice solver for threshold-constrained backward equations.

The package prices terminal losses whose terminal condition is pinned only
in (nonlinear) expectation: a controlled threshold process selects how the
constraint is spread across scenarios, the primal layer minimizes the
priced loss over admissible controls, and the dual layer certifies the
answer through Fenchel-type bounds.
"""

__version__ = "0.1.0"

from .lattice import (AdaptedField, Lattice, LatticeError, TimeGrid,
                      build_lattice, cond_expect, enumerate_paths, half_sum,
                      leaf_nodes, path_expectation)
from .drivers import (DRIVER_BUILDERS, LOSS_BUILDERS, ConjugateDomainError,
                      Driver, LossPair, concave_conjugate, convex_conjugate,
                      fenchel_recover, galois_violations, make_driver,
                      make_loss, polar_numeric, polar_transform)
from .bsde import (BsdeSolution, Corridor, SchemeError, comparison_check,
                   compute_corridor, estimation_gap, exact_scheme_for,
                   f_expectation, monotone_step_ok, solve_bsde,
                   solve_on_path_tree)
from .control import (NodePolicy, PolicyError, TruncatedPolicy, admissible,
                      representation_roundtrip, simulate_all_prefixes,
                      simulate_controlled, tilt_terminal, truncate_at_ceiling,
                      truncate_at_floor)
from .primal import (GreedyPolicy, PrimalError, PrimalScenario, ValueSurface,
                     attainment_check, brute_force_policy_value,
                     brute_force_weak_formulation, continuity_modulus,
                     convexity_check, dpp_check, monotonicity_violation,
                     primal_value_dp, restriction_check, two_point_envelope,
                     value_curve)
from .dual import (DualControls, DualFeasibilityError, dual_bound,
                   dual_objective, dual_value, first_order_residuals)
from .scenario import (Scenario, ScenarioError, build_scenario, catalogue,
                       catalogue_scenario, parse_scenario)
from .runner import execute
from .acceptance import CRITERIA, verify_all

__all__ = [
    "AdaptedField", "Lattice", "LatticeError", "TimeGrid", "build_lattice",
    "cond_expect", "enumerate_paths", "half_sum", "leaf_nodes",
    "path_expectation",
    "DRIVER_BUILDERS", "LOSS_BUILDERS", "ConjugateDomainError", "Driver",
    "LossPair", "concave_conjugate", "convex_conjugate", "fenchel_recover",
    "galois_violations", "make_driver", "make_loss", "polar_numeric",
    "polar_transform",
    "BsdeSolution", "Corridor", "SchemeError", "comparison_check",
    "compute_corridor", "estimation_gap", "exact_scheme_for", "f_expectation",
    "monotone_step_ok", "solve_bsde", "solve_on_path_tree",
    "NodePolicy", "PolicyError", "TruncatedPolicy", "admissible",
    "representation_roundtrip", "simulate_all_prefixes", "simulate_controlled",
    "tilt_terminal", "truncate_at_ceiling", "truncate_at_floor",
    "GreedyPolicy", "PrimalError", "PrimalScenario", "ValueSurface",
    "attainment_check", "brute_force_policy_value",
    "brute_force_weak_formulation", "continuity_modulus", "convexity_check",
    "dpp_check", "monotonicity_violation", "primal_value_dp",
    "restriction_check", "two_point_envelope", "value_curve",
    "DualControls", "DualFeasibilityError", "dual_bound", "dual_objective",
    "dual_value", "first_order_residuals",
    "Scenario", "ScenarioError", "build_scenario", "catalogue",
    "catalogue_scenario", "parse_scenario",
    "execute",
    "CRITERIA", "verify_all",
    "__version__",
]
