"""Numerical verification of weighted fractional Poincare inequalities."""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateError, DomainError, FracPoincareError, InfeasibleError,
                     InsufficientSignalError, InvalidWeightError, PremiseError, SolverError,
                     TruncationError, UnsupportedModeError)
from .measure import (WeightSpec, check_alpha_condition, check_assumptionV, custom, evaluate_weight,
                      exp_power, gaussian, normalization_constant, weight_from_string)
from .operator import (Grid, WeightedOperator, build_operator, m_inner_product, m_norm,
                       project_mean_zero, resolvent_apply)
from .spectral import (SpectralDecomposition, eigendecompose, fractional_apply_balakrishnan,
                       fractional_apply_spectral, monotone_power_check, quadratic_constant,
                       quadratic_functional, quadratic_functional_spectral, tail_bound)
from .localization import (covering_constant, covering_count, cube_family, cube_oscillations,
                           fit_decay, gaffney_ratio, region_pair)
from .gagliardo import gagliardo_seminorm, symmetric_gagliardo, weighted_moment
from .harness import (TrialSet, estimate_lambda, estimate_lambda_prime, fit_constant_chain,
                      make_trial_set, verify_fractional_poincare)
