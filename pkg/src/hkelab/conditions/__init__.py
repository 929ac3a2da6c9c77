"""Checkers and fitters for the functional inequalities."""
from .cutoff_energy import check_ce, check_cs, cs_constant_identity, cs_suite
from .heat import check_hke, fit_walk_dimension
from .pencil import TestSuite, default_suite
from .pipeline import PipelineReport, main_theorem_pipeline
from .poincare import (
    check_balance,
    check_cap_upper,
    check_pi,
    critical_exponent,
    cs_self_improvement,
    dirac_theta_morrey,
    morrey_check,
    pi_ball_constant,
    sobolev_poincare_q,
    sp_equivalence_probe,
    sp_T1,
    sp_T2,
)
from .report import BorelMeasure, ConditionReport
from .scale import ScaleFunction, ScaleTableError, phi_numeric, phi_power, volume_scale

__all__ = [
    "BorelMeasure", "ConditionReport", "PipelineReport", "ScaleFunction", "ScaleTableError",
    "TestSuite", "check_balance", "check_cap_upper", "check_ce", "check_cs", "check_hke",
    "check_pi", "critical_exponent", "cs_constant_identity", "cs_self_improvement", "cs_suite",
    "default_suite", "dirac_theta_morrey", "fit_walk_dimension", "main_theorem_pipeline",
    "morrey_check", "phi_numeric", "phi_power", "pi_ball_constant", "sobolev_poincare_q",
    "sp_T1", "sp_T2", "sp_equivalence_probe", "volume_scale",
]
