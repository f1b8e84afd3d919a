"""Primal-dual regression bounds for finite-horizon MDPs."""

from .basis import (GaussianReferenceMeasure, FiniteReferenceMeasure, HermiteNoiseBasis, HermiteStateBasis,
                    IndicatorNoiseBasis, IndicatorStateBasis, make_hermite_noise_basis, make_hermite_state_basis,
                    make_indicator_bases)
from .bounds import BoundReport, PathwiseProblem, lower_bound, pathwise_sup, upper_bound
from .dual import (DualMartingale, build_dual_martingale, estimate_dual_coeffs, exact_dual_from_oracle)
from .interpolation import GridInterpolant, central_interpolate, covering_radius
from .mdp import ExactSolution, MdpModel, ProductMetric, evaluate_policy_mc, solve_exact, step
from .primal import ValueFunctionEstimate, backward_pass, clip, estimate_beta, greedy_policy
from .score import ScoreMartingale, TrigFieldBasis, fit_score_martingale
from .config import ExperimentConfig
from .experiment import duality_gap_experiment
from .probe import uniform_error_probe
from .testbeds import make_testbed

__all__ = [
    "BoundReport",
    "DualMartingale",
    "ExactSolution",
    "ExperimentConfig",
    "FiniteReferenceMeasure",
    "GaussianReferenceMeasure",
    "GridInterpolant",
    "HermiteNoiseBasis",
    "HermiteStateBasis",
    "IndicatorNoiseBasis",
    "IndicatorStateBasis",
    "MdpModel",
    "PathwiseProblem",
    "ProductMetric",
    "ScoreMartingale",
    "TrigFieldBasis",
    "ValueFunctionEstimate",
    "backward_pass",
    "build_dual_martingale",
    "central_interpolate",
    "clip",
    "covering_radius",
    "duality_gap_experiment",
    "estimate_beta",
    "estimate_dual_coeffs",
    "evaluate_policy_mc",
    "exact_dual_from_oracle",
    "fit_score_martingale",
    "greedy_policy",
    "lower_bound",
    "make_hermite_noise_basis",
    "make_hermite_state_basis",
    "make_indicator_bases",
    "make_testbed",
    "pathwise_sup",
    "solve_exact",
    "step",
    "uniform_error_probe",
    "upper_bound",
]

__version__ = "0.1.0"
