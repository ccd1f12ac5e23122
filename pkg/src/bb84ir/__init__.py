"""Intercept-resend error-rate bounds for BB84 with weak coherent pulses."""

__version__ = "0.1.0"

from .attack import ChannelScenario, FilterGains, Regime, error_rate_case1, partial_error, regime_classify
from .detector import DetectorModel, click_parameters, conditional_table
from .jointdist import joint_distribution, sifted_error_from_joint, symmetry_check
from .optimizer import AttackSolution, gap_bound, p_usd, solve, solve_high_loss, usd_threshold
from .symstates import coefficients, poisson_tail, poisson_weight

__all__ = [
    "AttackSolution",
    "ChannelScenario",
    "DetectorModel",
    "FilterGains",
    "Regime",
    "click_parameters",
    "coefficients",
    "conditional_table",
    "error_rate_case1",
    "gap_bound",
    "joint_distribution",
    "p_usd",
    "partial_error",
    "poisson_tail",
    "poisson_weight",
    "regime_classify",
    "sifted_error_from_joint",
    "solve",
    "solve_high_loss",
    "symmetry_check",
    "usd_threshold",
]
