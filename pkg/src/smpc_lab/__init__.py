"""Sampled-data stochastic predictive control: synthesis, simulation, stability checks."""

from .core import (CostWeights, LinearPlant, NonlinearModel, SmpcConfig, TimeGrid,
                   check_linearization, symmetrize, validate_plant)
from . import errors
from .errors import *  # noqa: F401,F403
from .riccati import (AreSolution, RiccatiSolution, StabilityConstants,
                      check_l2_stabilizable, integrate_riccati, k1_dominating,
                      op_K, op_Q, op_R, op_S, riccati_convergence_report,
                      solve_are, stability_constants)
from .smpc import (GainSchedule, Rhc, Smpc, StaticAre, build_gain_schedule,
                   control_at, theta_deviation_bound)
from .noise import brownian_path
from .sde import (CoupledTrajectory, PathEnsemble, gronwall_delay_check,
                  simulate_ensemble, simulate_fundamental, simulate_path)
from . import models
from .analysis import (CostEstimate, MeanSquareCurve, StabilityReport, blowup_probe,
                       check_theorem_bound, cost_lyapunov_linear, cost_monte_carlo,
                       fit_decay_rate, mean_square_curve, suboptimality_gap_study)

__version__ = '0.1.0'

__all__ = ['models', 'CostWeights', 'LinearPlant', 'NonlinearModel', 'SmpcConfig',
           'TimeGrid', 'check_linearization', 'symmetrize', 'validate_plant',
           'AreSolution', 'RiccatiSolution', 'StabilityConstants',
           'check_l2_stabilizable', 'integrate_riccati', 'k1_dominating', 'op_K',
           'op_Q', 'op_R', 'op_S', 'riccati_convergence_report', 'solve_are',
           'stability_constants', 'GainSchedule', 'Rhc', 'Smpc', 'StaticAre',
           'build_gain_schedule', 'control_at', 'theta_deviation_bound',
           'brownian_path', 'CoupledTrajectory', 'PathEnsemble', 'gronwall_delay_check',
           'simulate_ensemble', 'simulate_fundamental', 'simulate_path', 'CostEstimate',
           'MeanSquareCurve', 'StabilityReport', 'blowup_probe', 'check_theorem_bound',
           'cost_lyapunov_linear', 'cost_monte_carlo', 'fit_decay_rate',
           'mean_square_curve', 'suboptimality_gap_study']
__all__ += errors.__all__
