"""tscalib: sequential calibration of time-series-valued simulators.

Fits an SVD-based Gaussian-process surrogate to simulator runs, selects
follow-up runs by a saddlepoint-approximated expected-improvement
criterion on the squared-L2 discrepancy to a target series, and
extracts the input minimizing the expected squared-L2 discrepancy.
"""

from .acquisition import (CgfContext, SaddleSolution, build_cgf_context, cgf,
                          cgf_derivatives, exact_ei_rank1, expected_discrepancy,
                          mc_ei, saei, saei_values, solve_saddlepoint)
from .calibrate import (CalibrationProblem, RunTrace, extract_esl2d, extract_naive,
                        improvement, normalized_discrepancy, run_calibration)
from .design import Design, UnitBox, maximin_lhd, random_candidates
from .emulator import (DesignSet, Prediction, SvdGpModel, choose_p, fit,
                       load_design_set, load_model, predict, predict_batch,
                       predictive_covariance, save_design_set, save_model)
from .errors import (ConfigError, DomainError, FactorizationFailure, NoBracket,
                     SimulatorFailure)
from .gp import (FittedCoefficientGp, PriorConfig, cholesky_correlation,
                 correlation_matrix, fit_coefficient_gp, gaussian_correlation,
                 map_objective)
from .simulators import (SimulatorSpec, SubprocessSimulator, TargetSpec,
                         environmental, example1, get_spec, gfun_separable,
                         harari, make_target)

__version__ = "0.1.0"
