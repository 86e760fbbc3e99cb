"""Killed lattice walks in the positive orthant.

Green functions on truncated windows with truncation certificates,
generating-function geometry (boundary points, conjugates,
quasipotentials), induced-chain harmonic functions, the exit-reward
constructions of positive harmonic functions for the killed walk, and
seeded Monte Carlo estimators that cross-check the exact solvers.
"""

from .measures import (JumpMeasure, WalkSpec, AssumptionReport, validate,
                       mean_vector, marginal_measure, communication_path,
                       lambda_of, killed_walk, free_walk, load_measure,
                       dump_measure)
from .genfun import (GenFun, DirectionSolve, phi, grad_phi, solve_direction,
                     legendre, quasipotential, lambda_pair, tail_decay_rate,
                     rate_functional, exit_moment_margin)
from .green import (Window, window_around, GreenTable, green_table,
                    green_to_target, green_oracle, twist, check_twist_identity,
                    RenewalSplit, renewal_split, exit_functional)
from .induced import (InducedChain, induced_chain, OneDimHarmonic,
                      overshoot_mean_1d, harmonic_1d, ProductHarmonic,
                      product_harmonic, convergence_norm, hitting_prob)
from .harmonic import (HarmonicFunction, build_theorem1, build_corollary,
                       build_prop11, build_prop12, build_corollary_twisted,
                       verify_harmonic, verify_positive)
from .montecarlo import (McEstimate, simulate_until_exit,
                         estimate_exit_functional, estimate_exp_moment,
                         hitting_estimate, EVENT_BEFORE_LAMBDA, EVENT_FINITE)
from .experiments import (ExperimentConfig, ExperimentReport, martin_convergence,
                          ratio_limit_scan, ld_rate_scan, renewal_dominance_scan,
                          martin_metric, sequence_point, trend_ok)

__version__ = "0.1.0"
