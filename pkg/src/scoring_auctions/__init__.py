"""Scoring auctions: break-even contracts, equilibrium solvers and simulation."""

__version__ = "0.1.0"

from .core import (Contract, CostParams, Moment, PerturbationDirection, SellerType,
                   TypeDistribution, ValidationError, evaluate_moment, make_distribution,
                   perturb, sample_types, sequence_g_n, uniform)
from .scoring import ScoringRule, check_regularity, rule_from_dict
from .breakeven import breakeven_contract, breakeven_order, project_pseudotype
from .classifier import CBEVerdict, admits, classify
from .equilibrium import (EquilibriumStrategy, NotAdmitted, cross_class_direction, f2,
                          foc_residual, pushforward_density, solve_1d_first_price,
                          solve_best_response, solve_invariant, strategy_from_moments,
                          two_moments_for_type, within_class_direction)
from .simulator import (adversarial_scan, interim_quadrature, invariance_scan,
                        payoff_equivalence_report, run_first_score, run_second_score)
from .learning import MomentSignal, acquire, information_technology_tiers, verify_cbe

__all__ = [name for name in dir() if not name.startswith("_")]
