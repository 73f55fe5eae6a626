"""Adversarial influence functions, optimal attacks and AIF/IF tradeoff designs
for M- and L-estimators."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .norms import NormOrder
from .distributions import DistributionModel, parse_model, standard_normal, exponential, uniform, tabulated
from .mestimator import PsiSpec, MEstimate, builtin_psi, solve, sensitivity
from .attack import AttackPlan, AifReport, optimal_attack, aif_empirical, aif_finite_eta, brute_force_attack
from .population import PopulationContext, aif_population, influence_function, gross_error_sensitivity, aif_convergence_study
from .design import (
    KktMultipliers,
    DesignedPsi,
    min_aif_location,
    min_aif_scale,
    tradeoff_location,
    tradeoff_scale,
    exponential_tradeoff,
    tradeoff_curve,
    kkt_residuals,
    kkt_ok,
)
from .lestimator import (
    LWeights,
    weights_from_h,
    mean_weights,
    median_weights,
    alpha_trimmed_weights,
    l_estimate,
    l_aif,
    ordering_safety_threshold,
)
from .kernels import BACKEND

